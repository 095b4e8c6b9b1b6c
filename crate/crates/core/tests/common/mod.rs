//! Independent brute-force oracles shared by the integration suites. None
//! of these call the implementation paths they check.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use hgl_core::graph::HeteroGraph;
use hgl_core::tensor::DenseMatrix;

/// O(P*N) pairwise ROC-AUC: wins plus half-ties over all pos/neg pairs.
pub fn auc_bruteforce(scores: &[f64], labels: &[bool]) -> f64 {
    let pos: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l)
        .map(|(&s, _)| s)
        .collect();
    let neg: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| !l)
        .map(|(&s, _)| s)
        .collect();
    let mut total = 0.0;
    for &p in &pos {
        for &n in &neg {
            total += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    total / (pos.len() as f64 * neg.len() as f64)
}

/// Reciprocal rank via exhaustive stable sort, averaged over heads.
pub fn mrr_bruteforce(heads: &[(Vec<f64>, Vec<bool>)]) -> f64 {
    let mut total = 0.0;
    for (scores, positive) in heads {
        let mut idx: Vec<usize> = (0..scores.len()).collect();
        idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
        let rank = idx.iter().position(|&i| positive[i]).unwrap() + 1;
        total += 1.0 / rank as f64;
    }
    total / heads.len() as f64
}

/// Set-intersection recall@k, averaged over users with relevant items.
pub fn recall_bruteforce(ranked: &[Vec<usize>], relevant: &[BTreeSet<usize>], k: usize) -> f64 {
    let mut total = 0.0;
    let mut n = 0;
    for (r, rel) in ranked.iter().zip(relevant) {
        if rel.is_empty() {
            continue;
        }
        let top: BTreeSet<usize> = r.iter().copied().take(k).collect();
        total += top.intersection(rel).count() as f64 / rel.len() as f64;
        n += 1;
    }
    total / n as f64
}

pub fn ndcg_bruteforce(ranked: &[Vec<usize>], relevant: &[BTreeSet<usize>], k: usize) -> f64 {
    let mut total = 0.0;
    let mut n = 0;
    for (r, rel) in ranked.iter().zip(relevant) {
        if rel.is_empty() {
            continue;
        }
        let mut dcg = 0.0;
        for (pos, item) in r.iter().take(k).enumerate() {
            if rel.contains(item) {
                dcg += 1.0 / ((pos + 2) as f64).log2();
            }
        }
        let mut idcg = 0.0;
        for pos in 0..rel.len().min(k) {
            idcg += 1.0 / ((pos + 2) as f64).log2();
        }
        total += dcg / idcg;
        n += 1;
    }
    total / n as f64
}

/// Confusion-matrix F1 oracle for single-label predictions.
pub fn f1_bruteforce(pred: &[usize], truth: &[usize], classes: usize) -> (f64, f64) {
    let mut macro_sum = 0.0;
    let (mut tp_all, mut fp_all, mut fn_all) = (0.0, 0.0, 0.0);
    for c in 0..classes {
        let tp = pred
            .iter()
            .zip(truth)
            .filter(|(&p, &t)| p == c && t == c)
            .count() as f64;
        let fp = pred
            .iter()
            .zip(truth)
            .filter(|(&p, &t)| p == c && t != c)
            .count() as f64;
        let fne = pred
            .iter()
            .zip(truth)
            .filter(|(&p, &t)| p != c && t == c)
            .count() as f64;
        let prec = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let rec = if tp + fne > 0.0 { tp / (tp + fne) } else { 0.0 };
        macro_sum += if prec + rec > 0.0 {
            2.0 * prec * rec / (prec + rec)
        } else {
            0.0
        };
        tp_all += tp;
        fp_all += fp;
        fn_all += fne;
    }
    let micro = if 2.0 * tp_all + fp_all + fn_all > 0.0 {
        2.0 * tp_all / (2.0 * tp_all + fp_all + fn_all)
    } else {
        0.0
    };
    (macro_sum / classes as f64, micro)
}

/// All (u, v) endpoint pairs connected by at least one instance of the
/// meta-path, found by depth-first path enumeration.
pub fn metapath_pairs_dfs(graph: &HeteroGraph, steps: &[usize]) -> BTreeSet<(usize, usize)> {
    let src_type = graph.edge_types()[steps[0]].src_type.unwrap();
    let mut out = BTreeSet::new();
    for u in graph.nodes_of_type(src_type) {
        let mut stack = vec![(u, 0usize)];
        while let Some((x, depth)) = stack.pop() {
            if depth == steps.len() {
                out.insert((u, x));
                continue;
            }
            for (s, d, t) in graph.edges().iter() {
                if s == x && t == steps[depth] {
                    stack.push((d, depth + 1));
                }
            }
        }
    }
    out
}

/// Undirected BFS distance from `start`, self loops ignored.
pub fn bfs_distances(graph: &HeteroGraph, start: usize) -> Vec<Option<usize>> {
    let adj = graph.undirected_adjacency();
    let mut dist = vec![None; graph.node_count()];
    dist[start] = Some(0);
    let mut queue = VecDeque::from([start]);
    while let Some(x) = queue.pop_front() {
        let dx = dist[x].unwrap();
        for &y in &adj[x] {
            if dist[y].is_none() {
                dist[y] = Some(dx + 1);
                queue.push_back(y);
            }
        }
    }
    dist
}

/// Dense transpose-adjacency multiply: out[i] = sum of messages into i.
pub fn dense_scatter_oracle(
    messages: &DenseMatrix,
    dst: &[usize],
    num_nodes: usize,
) -> DenseMatrix {
    // adjacency A with A[e][i] = 1 iff dst[e] = i, result = A^T . M
    let mut a = DenseMatrix::zeros(messages.rows(), num_nodes);
    for (e, &d) in dst.iter().enumerate() {
        a.set(e, d, 1.0);
    }
    a.transpose().matmul(messages).unwrap()
}

/// Dense normalized-propagation oracle for one convolution, multi-edge
/// aware: A holds edge multiplicities plus self connections, degrees are
/// column sums, and entry (i, j) of the propagation matrix is
/// `A[i][j] / sqrt(deg(i) deg(j))`.
pub fn dense_gcn_oracle(
    graph: &HeteroGraph,
    x: &DenseMatrix,
    w: &DenseMatrix,
    relu: bool,
) -> DenseMatrix {
    let n = graph.node_count();
    let mut a = DenseMatrix::zeros(n, n);
    for (s, d, _) in graph.edges().iter() {
        a.set(s, d, a.get(s, d) + 1.0);
    }
    for i in 0..n {
        a.set(i, i, a.get(i, i) + 1.0);
    }
    // column degree = in-degree on the self-looped graph
    let mut deg = vec![0.0f64; n];
    for i in 0..n {
        for j in 0..n {
            deg[j] += a.get(i, j);
        }
    }
    let mut norm = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if a.get(i, j) > 0.0 {
                norm.set(i, j, a.get(i, j) / (deg[i] * deg[j]).sqrt());
            }
        }
    }
    // propagate along incoming edges: out[i] = sum_j norm[j][i] x[j]
    let prop = norm.transpose().matmul(&x.matmul(w).unwrap()).unwrap();
    if relu {
        prop.map(|v| v.max(0.0))
    } else {
        prop
    }
}

/// Sample standard deviation oracle mirroring a spreadsheet STDEV.
pub fn stdev_sample(values: &[f64]) -> f64 {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if values.len() < 2 {
        return 0.0;
    }
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

/// Group positives by head and attach that head's negatives, for MRR input.
pub fn group_by_head(
    positives: &[(usize, usize)],
    negatives: &[(usize, usize)],
    scores_pos: &[f64],
    scores_neg: &[f64],
) -> Vec<(Vec<f64>, Vec<bool>)> {
    let mut by_head: BTreeMap<usize, (Vec<f64>, Vec<bool>)> = BTreeMap::new();
    for (&(u, _), &s) in positives.iter().zip(scores_pos) {
        let e = by_head.entry(u).or_default();
        e.0.push(s);
        e.1.push(true);
    }
    for (&(u, _), &s) in negatives.iter().zip(scores_neg) {
        let e = by_head.entry(u).or_default();
        e.0.push(s);
        e.1.push(false);
    }
    by_head
        .into_values()
        .filter(|(_, l)| l.iter().any(|&p| p))
        .collect()
}
