use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::HeteroGraph;
use crate::tensor::EdgeIndex;

/// Train/valid/test partitions for one task, with optional fixed negatives
/// for link evaluation.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum SplitSpec {
    Node {
        seed: u64,
        train: Vec<usize>,
        valid: Vec<usize>,
        test: Vec<usize>,
    },
    Link {
        seed: u64,
        target_etype: usize,
        train: Vec<(usize, usize)>,
        valid: Vec<(usize, usize)>,
        test: Vec<(usize, usize)>,
        #[serde(default)]
        valid_neg: Vec<(usize, usize)>,
        #[serde(default)]
        test_neg: Vec<(usize, usize)>,
    },
    Rec {
        seed: u64,
        train: Vec<(usize, usize)>,
        test: Vec<(usize, usize)>,
    },
}

fn check_ratios(ratios: (f64, f64, f64)) -> Result<()> {
    let sum = ratios.0 + ratios.1 + ratios.2;
    if (sum - 1.0).abs() > 1e-9 || ratios.0 < 0.0 || ratios.1 < 0.0 || ratios.2 < 0.0 {
        return Err(Error::contract(format!(
            "split ratios must be non-negative and sum to 1, got {ratios:?}"
        )));
    }
    Ok(())
}

/// Partition sizes from ratios; rounds the first two parts and gives the
/// remainder to the third, staying within one element of exact.
fn part_sizes(n: usize, ratios: (f64, f64, f64)) -> (usize, usize, usize) {
    let a = ((n as f64) * ratios.0).round() as usize;
    let b = ((n as f64) * ratios.1).round() as usize;
    let a = a.min(n);
    let b = b.min(n - a);
    (a, b, n - a - b)
}

/// Shuffle the labeled target-type nodes by seed and partition them.
/// All edges stay visible; only label access is split (transductive).
pub fn split_nodes(graph: &HeteroGraph, ratios: (f64, f64, f64), seed: u64) -> Result<SplitSpec> {
    check_ratios(ratios)?;
    let labels = graph
        .labels()
        .ok_or_else(|| Error::contract("split_nodes: graph has no labels"))?;
    let target_type = graph
        .task()
        .and_then(|t| t.target_node_type.as_deref())
        .and_then(|name| graph.node_type_id(name));
    let mut nodes: Vec<usize> = labels
        .labeled_nodes()
        .into_iter()
        .filter(|&v| target_type.map_or(true, |t| graph.node_type_of(v) == t))
        .collect();
    if nodes.is_empty() {
        return Err(Error::contract("split_nodes: no labeled nodes of the target type"));
    }
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    nodes.shuffle(&mut rng);
    let (n_train, n_valid, _) = part_sizes(nodes.len(), ratios);
    let test = nodes.split_off(n_train + n_valid);
    let valid = nodes.split_off(n_train);
    Ok(SplitSpec::Node {
        seed,
        train: nodes,
        valid,
        test,
    })
}

/// Partition the target-type edges and rebuild the training graph from
/// training edges only; other edge types are untouched.
pub fn split_edges(
    graph: &HeteroGraph,
    target_etype: usize,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(HeteroGraph, SplitSpec)> {
    check_ratios(ratios)?;
    if target_etype >= graph.edge_types().len() {
        return Err(Error::Index {
            op: "split_edges",
            index: target_etype,
            bound: graph.edge_types().len(),
        });
    }
    let mut positions: Vec<usize> = graph
        .edges()
        .iter()
        .enumerate()
        .filter(|(_, (_, _, t))| *t == target_etype)
        .map(|(i, _)| i)
        .collect();
    if positions.len() < 10 {
        return Err(Error::contract(format!(
            "split_edges: need at least 10 target edges, got {}",
            positions.len()
        )));
    }
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    positions.shuffle(&mut rng);
    let (n_train, n_valid, _) = part_sizes(positions.len(), ratios);

    let pair_at = |i: usize| (graph.edges().src()[i], graph.edges().dst()[i]);
    let train: Vec<(usize, usize)> = positions[..n_train].iter().map(|&i| pair_at(i)).collect();
    let valid: Vec<(usize, usize)> = positions[n_train..n_train + n_valid]
        .iter()
        .map(|&i| pair_at(i))
        .collect();
    let test: Vec<(usize, usize)> = positions[n_train + n_valid..]
        .iter()
        .map(|&i| pair_at(i))
        .collect();

    let keep: std::collections::BTreeSet<usize> = positions[..n_train].iter().copied().collect();
    let mut src = Vec::new();
    let mut dst = Vec::new();
    let mut etype = Vec::new();
    for (i, (s, d, t)) in graph.edges().iter().enumerate() {
        if t == target_etype && !keep.contains(&i) {
            continue;
        }
        src.push(s);
        dst.push(d);
        etype.push(t);
    }
    let train_graph = graph.with_edges(EdgeIndex::new(src, dst, etype)?)?;

    Ok((
        train_graph,
        SplitSpec::Link {
            seed,
            target_etype,
            train,
            valid,
            test,
            valid_neg: Vec::new(),
            test_neg: Vec::new(),
        },
    ))
}

/// Per-user holdout: `ratio_test` of each user's interactions (rounded,
/// keeping at least one training interaction when possible) go to test.
pub fn split_interactions(
    pairs: &[(usize, usize)],
    ratio_test: f64,
    seed: u64,
) -> Result<SplitSpec> {
    if pairs.is_empty() {
        return Err(Error::contract("split_interactions: empty interaction list"));
    }
    if !(0.0..1.0).contains(&ratio_test) {
        return Err(Error::contract(format!(
            "split_interactions: test ratio must be in [0,1), got {ratio_test}"
        )));
    }
    let mut by_user: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for &(u, v) in pairs {
        by_user.entry(u).or_default().push(v);
    }
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (u, mut items) in by_user {
        items.shuffle(&mut rng);
        let mut n_test = ((items.len() as f64) * ratio_test).round() as usize;
        if n_test >= items.len() {
            n_test = items.len() - 1; // cannot empty train
        }
        for (k, v) in items.into_iter().enumerate() {
            if k < n_test {
                test.push((u, v));
            } else {
                train.push((u, v));
            }
        }
    }
    Ok(SplitSpec::Rec { seed, train, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EdgeTypeInfo, Labels, NodeTypeInfo};
    use std::collections::BTreeMap;

    fn labeled_graph(n: usize) -> HeteroGraph {
        let node_types = vec![NodeTypeInfo {
            name: "n".into(),
            count: n,
            feature_dim: 0,
        }];
        let edge_types = vec![EdgeTypeInfo {
            name: "e".into(),
            src_type: Some(0),
            dst_type: Some(0),
            reverse: None,
        }];
        let by_node: BTreeMap<usize, usize> = (0..n).map(|v| (v, v % 2)).collect();
        HeteroGraph::new(
            vec![0; n],
            node_types,
            edge_types,
            EdgeIndex::empty(),
            BTreeMap::new(),
            Some(Labels::Single {
                classes: 2,
                by_node,
            }),
            None,
        )
        .unwrap()
    }

    #[test]
    fn node_split_follows_24_6_70() {
        let g = labeled_graph(100);
        let SplitSpec::Node { train, valid, test, .. } =
            split_nodes(&g, (0.24, 0.06, 0.70), 3).unwrap()
        else {
            panic!("wrong variant")
        };
        assert_eq!((train.len(), valid.len(), test.len()), (24, 6, 70));
    }

    #[test]
    fn all_train_ratio() {
        let g = labeled_graph(17);
        let SplitSpec::Node { train, valid, test, .. } = split_nodes(&g, (1.0, 0.0, 0.0), 3).unwrap()
        else {
            panic!("wrong variant")
        };
        assert_eq!(train.len(), 17);
        assert!(valid.is_empty() && test.is_empty());
    }

    #[test]
    fn same_seed_reproduces_split() {
        let g = labeled_graph(50);
        let a = split_nodes(&g, (0.24, 0.06, 0.70), 9).unwrap();
        let b = split_nodes(&g, (0.24, 0.06, 0.70), 9).unwrap();
        assert_eq!(a, b);
        // Different seeds should give a different partition in at least one
        // of ten draws (overwhelmingly likely for 50 nodes).
        let mut any_diff = false;
        for s in 10..20 {
            if split_nodes(&g, (0.24, 0.06, 0.70), s).unwrap() != a {
                any_diff = true;
                break;
            }
        }
        assert!(any_diff);
    }

    #[test]
    fn user_with_ten_items_gets_two_test() {
        let pairs: Vec<(usize, usize)> = (0..10).map(|i| (0, 100 + i)).collect();
        let SplitSpec::Rec { train, test, .. } = split_interactions(&pairs, 0.2, 1).unwrap() else {
            panic!("wrong variant")
        };
        assert_eq!(test.len(), 2);
        assert_eq!(train.len(), 8);
    }

    #[test]
    fn single_interaction_stays_in_train() {
        let SplitSpec::Rec { train, test, .. } =
            split_interactions(&[(5, 7)], 0.2, 1).unwrap()
        else {
            panic!("wrong variant")
        };
        assert_eq!(train, vec![(5, 7)]);
        assert!(test.is_empty());
    }

    #[test]
    fn aggregate_test_fraction_near_20_percent() {
        use rand::Rng;
        let mut rng = rand::rngs::StdRng::seed_from_u64(4);
        let mut pairs = Vec::new();
        for u in 0..1000 {
            let k = rng.gen_range(1..30);
            for i in 0..k {
                pairs.push((u, 10_000 + u * 50 + i));
            }
        }
        let SplitSpec::Rec { train, test, .. } = split_interactions(&pairs, 0.2, 1).unwrap() else {
            panic!("wrong variant")
        };
        let frac = test.len() as f64 / (train.len() + test.len()) as f64;
        assert!((0.18..=0.22).contains(&frac), "fraction {frac}");
    }
}
