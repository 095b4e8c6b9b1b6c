//! Split, sampling, meta-path, and persistence oracles.

mod common;

use std::collections::BTreeSet;

use hgl_core::graph::{
    io, metapath_neighbor_graph, random_negatives, split_edges, two_hop_negatives, MetaPath,
    SplitSpec,
};
use hgl_core::synthetic::{dblp_shaped, random_hetero, toy_link_graph};

#[test]
fn dblp_shaped_round_trips_through_save_load() {
    let g = dblp_shaped(11);
    let tmp = tempfile::tempdir().unwrap();
    io::save_graph(&g, tmp.path()).unwrap();
    let back = io::load_graph(tmp.path()).unwrap();
    assert_eq!(back.node_count(), g.node_count());
    assert_eq!(back.edge_count(), g.edge_count());
    assert_eq!(back.features(), g.features());
    assert_eq!(back.labels(), g.labels());
    assert_eq!(back.task(), g.task());
    let a: Vec<(usize, usize, usize)> = g.edges().iter().collect();
    let b: Vec<(usize, usize, usize)> = back.edges().iter().collect();
    assert_eq!(a, b);
    // and the re-saved directory is byte-identical
    let tmp2 = tempfile::tempdir().unwrap();
    io::save_graph(&back, tmp2.path()).unwrap();
    for f in ["meta.json", "nodes.tsv", "edges.tsv", "labels.tsv"] {
        let x = std::fs::read(tmp.path().join(f)).unwrap();
        let y = std::fs::read(tmp2.path().join(f)).unwrap();
        assert_eq!(x, y, "{f} not byte-identical");
    }
}

#[test]
fn edge_split_partitions_exactly() {
    let g = toy_link_graph(3);
    let target = g.edge_type_id("ui").unwrap();
    let before = g.edges_of_type(target);
    let other_before = g.edges_of_type(g.edge_type_id("uu").unwrap());
    let (train_graph, split) = split_edges(&g, target, (0.81, 0.09, 0.10), 5).unwrap();
    let SplitSpec::Link { train, valid, test, .. } = &split else {
        panic!("wrong split kind")
    };
    // 81/9/10 with rounding to within one element
    let n = before.len() as f64;
    assert!((train.len() as f64 - 0.81 * n).abs() <= 1.0);
    assert!((valid.len() as f64 - 0.09 * n).abs() <= 1.0);

    // union of the three partitions is the original target edge set
    let union: BTreeSet<(usize, usize)> = train
        .iter()
        .chain(valid.iter())
        .chain(test.iter())
        .copied()
        .collect();
    let original: BTreeSet<(usize, usize)> = before.into_iter().collect();
    assert_eq!(union, original);
    assert_eq!(union.len(), train.len() + valid.len() + test.len(), "partitions overlap");

    // train graph holds exactly the training target edges
    let kept: BTreeSet<(usize, usize)> = train_graph.edges_of_type(target).into_iter().collect();
    let train_set: BTreeSet<(usize, usize)> = train.iter().copied().collect();
    assert_eq!(kept, train_set);
    // the other edge type is untouched
    let other_after = train_graph.edges_of_type(g.edge_type_id("uu").unwrap());
    assert_eq!(other_before.len(), other_after.len());
}

#[test]
fn metapath_matches_dfs_enumeration_over_50_trials() {
    let mut checked_nonempty = 0;
    for trial in 0..50u64 {
        let g = random_hetero(1000 + trial, 30);
        // pick a random type-compatible path of length <= 3
        let mut steps = Vec::new();
        let mut cur: Option<usize> = None;
        let mut pick_seed = trial;
        for _ in 0..3 {
            let candidates: Vec<usize> = (0..g.edge_types().len())
                .filter(|&e| cur.is_none() || g.edge_types()[e].src_type == cur)
                .collect();
            if candidates.is_empty() {
                break;
            }
            pick_seed = pick_seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            let e = candidates[(pick_seed >> 33) as usize % candidates.len()];
            steps.push(e);
            cur = g.edge_types()[e].dst_type;
        }
        if steps.is_empty() {
            continue;
        }
        let got = metapath_neighbor_graph(&g, &MetaPath::new(steps.clone())).unwrap();
        let got_pairs: BTreeSet<(usize, usize)> = got.iter().map(|(s, d, _)| (s, d)).collect();
        let expected = common::metapath_pairs_dfs(&g, &steps);
        assert_eq!(got_pairs, expected, "trial {trial} path {steps:?}");
        if !expected.is_empty() {
            checked_nonempty += 1;
        }
    }
    assert!(checked_nonempty >= 10, "too few non-trivial paths: {checked_nonempty}");
}

#[test]
fn two_hop_negatives_verified_by_bfs() {
    // the clustered 200-node graph: user-user friendships put items at
    // exact distance two from users
    let g = toy_link_graph(7);
    let etype = g.edge_type_id("ui").unwrap();
    let positives: Vec<(usize, usize)> = g.edges_of_type(etype).into_iter().take(50).collect();
    let negs = two_hop_negatives(&g, &positives, 1, 99).unwrap();
    assert_eq!(negs.len(), positives.len(), "1:1 ratio");
    let tail_type = g.node_type_of(positives[0].1);
    let positive_set: BTreeSet<(usize, usize)> = g
        .edges()
        .iter()
        .filter(|&(s, d, _)| {
            g.node_type_of(s) == g.node_type_of(positives[0].0) && g.node_type_of(d) == tail_type
        })
        .map(|(s, d, _)| (s, d))
        .collect();
    let sampler = hgl_core::graph::TwoHopSampler::build(&g, &positives).unwrap();
    let mut verified = 0;
    for &(u, w) in &negs {
        assert!(!positive_set.contains(&(u, w)), "negative ({u},{w}) is positive");
        assert_eq!(g.node_type_of(w), tail_type, "tail type mismatch");
        if !sampler.used_fallback(u) {
            let dist = common::bfs_distances(&g, u);
            assert_eq!(dist[w], Some(2), "({u},{w}) not at distance 2");
            verified += 1;
        }
    }
    assert!(verified > 0, "no non-fallback negatives to verify");
}

#[test]
fn random_negative_tails_uniform_chi_squared() {
    // star fixture with one head and many candidate tails
    use hgl_core::graph::{EdgeTypeInfo, HeteroGraph, NodeTypeInfo};
    use hgl_core::tensor::EdgeIndex;
    let tails = 20usize;
    let node_types = vec![
        NodeTypeInfo { name: "u".into(), count: 1, feature_dim: 0 },
        NodeTypeInfo { name: "v".into(), count: tails, feature_dim: 0 },
    ];
    let edge_types = vec![EdgeTypeInfo {
        name: "uv".into(),
        src_type: Some(0),
        dst_type: Some(1),
        reverse: None,
    }];
    let g = HeteroGraph::new(
        std::iter::once(0)
            .chain(std::iter::repeat(1).take(tails))
            .collect(),
        node_types,
        edge_types,
        EdgeIndex::new(vec![0], vec![1], vec![0]).unwrap(),
        Default::default(),
        None,
        None,
    )
    .unwrap();
    let positives = vec![(0usize, 1usize)];
    let mut counts = vec![0usize; tails + 1];
    let draws = 10_000;
    for seed in 0..draws {
        let negs = random_negatives(&g, &positives, seed).unwrap();
        counts[negs[0].1] += 1;
    }
    assert_eq!(counts[1], 0, "positive tail drawn");
    // chi-squared over the 19 eligible tails; p > 0.01 for 18 dof means
    // statistic below 34.805
    let eligible = tails - 1;
    let expected = draws as f64 / eligible as f64;
    let chi2: f64 = (2..=tails)
        .map(|t| {
            let o = counts[t] as f64;
            (o - expected).powi(2) / expected
        })
        .sum();
    assert!(chi2 < 34.805, "chi-squared {chi2} too large for uniformity");
}

#[test]
fn self_loop_histogram_gains_node_count() {
    let g = dblp_shaped(2);
    let looped = g.add_self_loops();
    let hist = looped.etype_histogram();
    assert_eq!(hist[looped.self_etype().unwrap()], g.node_count());
    let base: usize = hist[..g.edge_types().len()].iter().sum();
    assert_eq!(base, g.edge_count());
}

#[test]
fn single_step_metapath_equals_typed_subgraph() {
    for seed in 0..10u64 {
        let g = random_hetero(seed, 25);
        for e in 0..g.edge_types().len() {
            let path = MetaPath::new(vec![e]);
            let got: BTreeSet<(usize, usize)> = metapath_neighbor_graph(&g, &path)
                .unwrap()
                .iter()
                .map(|(s, d, _)| (s, d))
                .collect();
            let expected: BTreeSet<(usize, usize)> = g.edges_of_type(e).into_iter().collect();
            assert_eq!(got, expected);
        }
    }
}
