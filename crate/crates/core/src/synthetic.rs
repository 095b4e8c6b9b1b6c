//! Seeded synthetic datasets: small heterogeneous graphs for demos,
//! smoke tests, and the shipped fixture directories.

use std::collections::BTreeMap;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::graph::{EdgeTypeInfo, HeteroGraph, Labels, NodeTypeInfo, TaskMeta};
use crate::tensor::{DenseMatrix, EdgeIndex};

/// 6 nodes, 3 node types, 4 edge types; dense enough that every parameter
/// of an attention layer receives gradient. Types: a {0,1}, b {2,3},
/// c {4,5}; edge types ab, ba, bc, cb.
pub fn grad_toy_graph() -> HeteroGraph {
    let node_types = vec![
        NodeTypeInfo { name: "a".into(), count: 2, feature_dim: 3 },
        NodeTypeInfo { name: "b".into(), count: 2, feature_dim: 2 },
        NodeTypeInfo { name: "c".into(), count: 2, feature_dim: 0 },
    ];
    let edge_types = vec![
        EdgeTypeInfo { name: "ab".into(), src_type: Some(0), dst_type: Some(1), reverse: None },
        EdgeTypeInfo { name: "ba".into(), src_type: Some(1), dst_type: Some(0), reverse: None },
        EdgeTypeInfo { name: "bc".into(), src_type: Some(1), dst_type: Some(2), reverse: None },
        EdgeTypeInfo { name: "cb".into(), src_type: Some(2), dst_type: Some(1), reverse: None },
    ];
    let (src, dst, et) = (
        vec![0, 0, 1, 2, 3, 2, 3, 4, 5, 4],
        vec![2, 3, 3, 0, 1, 4, 5, 2, 3, 3],
        vec![0, 0, 0, 1, 1, 2, 2, 3, 3, 3],
    );
    let mut features = BTreeMap::new();
    features.insert(
        0,
        DenseMatrix::from_vec(2, 3, vec![0.5, -0.3, 0.8, -0.1, 0.9, 0.2]).unwrap(),
    );
    features.insert(1, DenseMatrix::from_vec(2, 2, vec![1.0, -0.5, 0.25, 0.75]).unwrap());
    let labels = Labels::Single {
        classes: 2,
        by_node: [(0, 0), (1, 1)].into_iter().collect(),
    };
    HeteroGraph::new(
        vec![0, 0, 1, 1, 2, 2],
        node_types,
        edge_types,
        EdgeIndex::new(src, dst, et).unwrap(),
        features,
        Some(labels),
        Some(TaskMeta {
            kind: Some("node".into()),
            target_node_type: Some("a".into()),
            classes: Some(2),
            ..Default::default()
        }),
    )
    .expect("fixture is valid")
}

/// 20-node two-class graph with informative features; a capacity check
/// should reach 100% training accuracy on it quickly.
pub fn toy_node_graph(seed: u64) -> HeteroGraph {
    let mut rng = StdRng::seed_from_u64(seed);
    let n = 20;
    let node_types = vec![NodeTypeInfo { name: "item".into(), count: n, feature_dim: 4 }];
    let edge_types = vec![EdgeTypeInfo {
        name: "sim".into(),
        src_type: Some(0),
        dst_type: Some(0),
        reverse: None,
    }];
    let mut src = Vec::new();
    let mut dst = Vec::new();
    for i in 0..n {
        src.push(i);
        dst.push((i + 1) % n);
        src.push((i + 1) % n);
        dst.push(i);
    }
    let m = src.len();
    let mut feats = DenseMatrix::zeros(n, 4);
    let mut by_node = BTreeMap::new();
    for v in 0..n {
        let class = v % 2;
        by_node.insert(v, class);
        let signal = if class == 0 { 1.0 } else { -1.0 };
        feats.set(v, 0, signal + rng.gen_range(-0.2..0.2));
        feats.set(v, 1, -signal + rng.gen_range(-0.2..0.2));
        feats.set(v, 2, rng.gen_range(-1.0..1.0));
        feats.set(v, 3, rng.gen_range(-1.0..1.0));
    }
    let mut features = BTreeMap::new();
    features.insert(0, feats);
    HeteroGraph::new(
        vec![0; n],
        node_types,
        edge_types,
        EdgeIndex::new(src, dst, vec![0; m]).unwrap(),
        features,
        Some(Labels::Single { classes: 2, by_node }),
        Some(TaskMeta {
            kind: Some("node".into()),
            target_node_type: Some("item".into()),
            classes: Some(2),
            ..Default::default()
        }),
    )
    .expect("fixture is valid")
}

/// Academic-shaped fixture: 4 node types (author, paper, term, venue) and
/// 6 edge types (forward and reverse for author/term/venue attachment).
/// Authors carry 4-class area labels recoverable from the topology.
pub fn dblp_shaped(seed: u64) -> HeteroGraph {
    let mut rng = StdRng::seed_from_u64(seed);
    let (n_author, n_paper, n_term, n_venue) = (40usize, 60usize, 20usize, 5usize);
    let node_types = vec![
        NodeTypeInfo { name: "author".into(), count: n_author, feature_dim: 0 },
        NodeTypeInfo { name: "paper".into(), count: n_paper, feature_dim: 8 },
        NodeTypeInfo { name: "term".into(), count: n_term, feature_dim: 0 },
        NodeTypeInfo { name: "venue".into(), count: n_venue, feature_dim: 0 },
    ];
    // ids: ap=0, pa=1, pt=2, tp=3, pv=4, vp=5
    let edge_types = vec![
        EdgeTypeInfo { name: "ap".into(), src_type: Some(0), dst_type: Some(1), reverse: Some(1) },
        EdgeTypeInfo { name: "pa".into(), src_type: Some(1), dst_type: Some(0), reverse: None },
        EdgeTypeInfo { name: "pt".into(), src_type: Some(1), dst_type: Some(2), reverse: Some(3) },
        EdgeTypeInfo { name: "tp".into(), src_type: Some(2), dst_type: Some(1), reverse: None },
        EdgeTypeInfo { name: "pv".into(), src_type: Some(1), dst_type: Some(3), reverse: Some(5) },
        EdgeTypeInfo { name: "vp".into(), src_type: Some(3), dst_type: Some(1), reverse: None },
    ];
    // global ids: authors, then papers, then terms, then venues
    let paper0 = n_author;
    let term0 = paper0 + n_paper;
    let venue0 = term0 + n_term;
    let total = venue0 + n_venue;
    let mut node_type = Vec::with_capacity(total);
    node_type.extend(std::iter::repeat(0).take(n_author));
    node_type.extend(std::iter::repeat(1).take(n_paper));
    node_type.extend(std::iter::repeat(2).take(n_term));
    node_type.extend(std::iter::repeat(3).take(n_venue));

    let mut src = Vec::new();
    let mut dst = Vec::new();
    let mut et = Vec::new();
    let mut paper_feats = DenseMatrix::zeros(n_paper, 8);
    for p in 0..n_paper {
        let area = p % 4;
        // 1-3 authors from the paper's area
        let n_auth = rng.gen_range(1..=3);
        for _ in 0..n_auth {
            let a = area + 4 * rng.gen_range(0..n_author / 4);
            src.push(a);
            dst.push(paper0 + p);
            et.push(0);
        }
        // 2-3 terms, biased to the area
        for _ in 0..rng.gen_range(2..=3) {
            let t = if rng.gen_bool(0.7) {
                area + 4 * rng.gen_range(0..n_term / 4)
            } else {
                rng.gen_range(0..n_term)
            };
            src.push(paper0 + p);
            dst.push(term0 + t);
            et.push(2);
        }
        // venue: the area venue, sometimes the general one
        let v = if rng.gen_bool(0.85) { area } else { 4 };
        src.push(paper0 + p);
        dst.push(venue0 + v);
        et.push(4);
        // features: noisy area one-hot in the first four dims
        for d in 0..8 {
            let base = if d == area { 1.0 } else { 0.0 };
            paper_feats.set(p, d, base + rng.gen_range(-0.3..0.3));
        }
    }
    let mut features = BTreeMap::new();
    features.insert(1, paper_feats);
    let by_node: BTreeMap<usize, usize> = (0..n_author).map(|a| (a, a % 4)).collect();
    HeteroGraph::new(
        node_type,
        node_types,
        edge_types,
        EdgeIndex::new(src, dst, et).unwrap(),
        features,
        Some(Labels::Single { classes: 4, by_node }),
        Some(TaskMeta {
            kind: Some("node".into()),
            target_node_type: Some("author".into()),
            classes: Some(4),
            ..Default::default()
        }),
    )
    .expect("fixture is valid")
}

/// Clustered tripartite graph for link prediction. Users befriend users
/// inside small friend circles and consume their circle's items; items
/// carry circle-correlated tags. Features encode only the coarse cluster,
/// so uniform negatives (mostly cross-cluster) are separable from features
/// alone, while exact 2-hop negatives concentrate inside the circle and
/// require learned propagation to rank.
pub fn toy_link_graph(seed: u64) -> HeteroGraph {
    let mut rng = StdRng::seed_from_u64(seed);
    let clusters = 8usize;
    let (users_per, items_per, tags_per) = (7usize, 12usize, 6usize);
    let circles = 2usize;
    let (n_user, n_item, n_tag) = (
        clusters * users_per,
        clusters * items_per,
        clusters * tags_per,
    );
    let feat_dim = clusters + 2;
    let node_types = vec![
        NodeTypeInfo { name: "user".into(), count: n_user, feature_dim: feat_dim },
        NodeTypeInfo { name: "item".into(), count: n_item, feature_dim: feat_dim },
        NodeTypeInfo { name: "tag".into(), count: n_tag, feature_dim: feat_dim },
    ];
    // ids: ui=0, iu=1, uu=2, it=3, ti=4
    let edge_types = vec![
        EdgeTypeInfo { name: "ui".into(), src_type: Some(0), dst_type: Some(1), reverse: Some(1) },
        EdgeTypeInfo { name: "iu".into(), src_type: Some(1), dst_type: Some(0), reverse: None },
        EdgeTypeInfo { name: "uu".into(), src_type: Some(0), dst_type: Some(0), reverse: Some(2) },
        EdgeTypeInfo { name: "it".into(), src_type: Some(1), dst_type: Some(2), reverse: Some(4) },
        EdgeTypeInfo { name: "ti".into(), src_type: Some(2), dst_type: Some(1), reverse: None },
    ];
    let item0 = n_user;
    let tag0 = item0 + n_item;
    let mut node_type = Vec::new();
    node_type.extend(std::iter::repeat(0).take(n_user));
    node_type.extend(std::iter::repeat(1).take(n_item));
    node_type.extend(std::iter::repeat(2).take(n_tag));

    // circle of a node within its cluster block
    let user_circle = |u: usize| (u % users_per) % circles;
    let item_circle = |i: usize| ((i - item0) % items_per) % circles;
    let tag_circle = |t: usize| ((t - tag0) % tags_per) % circles;

    let mut src = Vec::new();
    let mut dst = Vec::new();
    let mut et = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for c in 0..clusters {
        let users: Vec<usize> = (0..users_per).map(|k| c * users_per + k).collect();
        let items: Vec<usize> = (0..items_per).map(|k| item0 + c * items_per + k).collect();
        let tags: Vec<usize> = (0..tags_per).map(|k| tag0 + c * tags_per + k).collect();
        // interactions: mostly the user's own circle, some cluster, rare noise
        for &u in &users {
            let circle = user_circle(u);
            let circle_items: Vec<usize> = items
                .iter()
                .copied()
                .filter(|&i| item_circle(i) == circle)
                .collect();
            for _ in 0..rng.gen_range(4..=6) {
                let roll: f64 = rng.gen();
                let v = if roll < 0.80 {
                    circle_items[rng.gen_range(0..circle_items.len())]
                } else if roll < 0.97 {
                    items[rng.gen_range(0..items.len())]
                } else {
                    item0 + rng.gen_range(0..n_item)
                };
                if seen.insert((u, v)) {
                    src.push(u);
                    dst.push(v);
                    et.push(0);
                }
            }
        }
        // friendships stay inside the circle
        for &u in &users {
            let circle = user_circle(u);
            let mates: Vec<usize> = users
                .iter()
                .copied()
                .filter(|&w| w != u && user_circle(w) == circle)
                .collect();
            for _ in 0..rng.gen_range(2..=3) {
                let w = mates[rng.gen_range(0..mates.len())];
                if seen.insert((u, w)) {
                    src.push(u);
                    dst.push(w);
                    et.push(2);
                }
            }
        }
        // items tagged by their circle's tags
        for &v in &items {
            let circle = item_circle(v);
            let circle_tags: Vec<usize> = tags
                .iter()
                .copied()
                .filter(|&t| tag_circle(t) == circle)
                .collect();
            for _ in 0..rng.gen_range(1..=2) {
                let t = if rng.gen_bool(0.8) {
                    circle_tags[rng.gen_range(0..circle_tags.len())]
                } else {
                    tags[rng.gen_range(0..tags.len())]
                };
                if seen.insert((v, t)) {
                    src.push(v);
                    dst.push(t);
                    et.push(3);
                }
            }
        }
    }

    // features carry the coarse cluster only; circles stay latent
    let mut features = BTreeMap::new();
    for (t, count, per) in [(0usize, n_user, users_per), (1, n_item, items_per), (2, n_tag, tags_per)] {
        let mut block = DenseMatrix::zeros(count, feat_dim);
        for row in 0..count {
            let cluster = row / per;
            for d in 0..feat_dim {
                let base = if d == cluster { 1.0 } else { 0.0 };
                block.set(row, d, base + rng.gen_range(-0.15..0.15));
            }
        }
        features.insert(t, block);
    }
    HeteroGraph::new(
        node_type,
        node_types,
        edge_types,
        EdgeIndex::new(src, dst, et).unwrap(),
        features,
        None,
        Some(TaskMeta {
            kind: Some("link".into()),
            target_edge_type: Some("ui".into()),
            ..Default::default()
        }),
    )
    .expect("fixture is valid")
}

/// Small recommendation graph: users, items, and item categories; users
/// prefer one category.
pub fn toy_rec_graph(n_users: usize, n_items: usize, n_cats: usize, seed: u64) -> HeteroGraph {
    let mut rng = StdRng::seed_from_u64(seed);
    let node_types = vec![
        NodeTypeInfo { name: "user".into(), count: n_users, feature_dim: 0 },
        NodeTypeInfo { name: "item".into(), count: n_items, feature_dim: 0 },
        NodeTypeInfo { name: "cat".into(), count: n_cats, feature_dim: 0 },
    ];
    // ids: ui=0, iu=1, ic=2, ci=3
    let edge_types = vec![
        EdgeTypeInfo { name: "ui".into(), src_type: Some(0), dst_type: Some(1), reverse: Some(1) },
        EdgeTypeInfo { name: "iu".into(), src_type: Some(1), dst_type: Some(0), reverse: None },
        EdgeTypeInfo { name: "ic".into(), src_type: Some(1), dst_type: Some(2), reverse: Some(3) },
        EdgeTypeInfo { name: "ci".into(), src_type: Some(2), dst_type: Some(1), reverse: None },
    ];
    let item0 = n_users;
    let cat0 = item0 + n_items;
    let mut node_type = Vec::new();
    node_type.extend(std::iter::repeat(0).take(n_users));
    node_type.extend(std::iter::repeat(1).take(n_items));
    node_type.extend(std::iter::repeat(2).take(n_cats));

    let mut src = Vec::new();
    let mut dst = Vec::new();
    let mut et = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for i in 0..n_items {
        src.push(item0 + i);
        dst.push(cat0 + i % n_cats);
        et.push(2);
    }
    for u in 0..n_users {
        let pref = u % n_cats;
        let wanted = rng.gen_range(5..=8).min(n_items);
        let mut added = 0;
        let mut guard = 0;
        while added < wanted && guard < 200 {
            guard += 1;
            let i = if rng.gen_bool(0.8) {
                // an item of the preferred category
                let offset = rng.gen_range(0..n_items.div_ceil(n_cats));
                let idx = pref + offset * n_cats;
                if idx >= n_items {
                    continue;
                }
                idx
            } else {
                rng.gen_range(0..n_items)
            };
            if seen.insert((u, item0 + i)) {
                src.push(u);
                dst.push(item0 + i);
                et.push(0);
                added += 1;
            }
        }
    }
    HeteroGraph::new(
        node_type,
        node_types,
        edge_types,
        EdgeIndex::new(src, dst, et).unwrap(),
        BTreeMap::new(),
        None,
        Some(TaskMeta {
            kind: Some("rec".into()),
            target_edge_type: Some("ui".into()),
            user_type: Some("user".into()),
            item_type: Some("item".into()),
            ..Default::default()
        }),
    )
    .expect("fixture is valid")
}

/// Random heterogeneous graph for property tests: up to `max_nodes` nodes
/// over 2-3 node types and 2-4 edge types with random endpoint signatures.
pub fn random_hetero(seed: u64, max_nodes: usize) -> HeteroGraph {
    let mut rng = StdRng::seed_from_u64(seed);
    let n_types = rng.gen_range(2..=3usize);
    let mut counts = Vec::new();
    let mut remaining = max_nodes.max(n_types * 2);
    for t in 0..n_types {
        let left = n_types - t - 1;
        let c = if left == 0 {
            remaining
        } else {
            rng.gen_range(2..=remaining - 2 * left)
        };
        counts.push(c);
        remaining -= c;
    }
    let node_types: Vec<NodeTypeInfo> = counts
        .iter()
        .enumerate()
        .map(|(t, &c)| NodeTypeInfo {
            name: format!("t{t}"),
            count: c,
            feature_dim: 0,
        })
        .collect();
    let n_etypes = rng.gen_range(2..=4usize);
    let edge_types: Vec<EdgeTypeInfo> = (0..n_etypes)
        .map(|e| EdgeTypeInfo {
            name: format!("e{e}"),
            src_type: Some(rng.gen_range(0..n_types)),
            dst_type: Some(rng.gen_range(0..n_types)),
            reverse: None,
        })
        .collect();
    let mut node_type = Vec::new();
    for (t, &c) in counts.iter().enumerate() {
        node_type.extend(std::iter::repeat(t).take(c));
    }
    let nodes_of = |t: usize, node_type: &[usize]| -> Vec<usize> {
        (0..node_type.len()).filter(|&v| node_type[v] == t).collect()
    };
    let mut src = Vec::new();
    let mut dst = Vec::new();
    let mut et = Vec::new();
    let total_edges = rng.gen_range(max_nodes..max_nodes * 3);
    for _ in 0..total_edges {
        let e = rng.gen_range(0..n_etypes);
        let ss = nodes_of(edge_types[e].src_type.unwrap(), &node_type);
        let ds = nodes_of(edge_types[e].dst_type.unwrap(), &node_type);
        if ss.is_empty() || ds.is_empty() {
            continue;
        }
        src.push(ss[rng.gen_range(0..ss.len())]);
        dst.push(ds[rng.gen_range(0..ds.len())]);
        et.push(e);
    }
    HeteroGraph::new(
        node_type,
        node_types,
        edge_types,
        EdgeIndex::new(src, dst, et).unwrap(),
        BTreeMap::new(),
        None,
        None,
    )
    .expect("generated graph is valid")
}

/// Random single-type graph with features, for reduction oracles.
pub fn random_homogeneous(seed: u64, n: usize, feature_dim: usize) -> HeteroGraph {
    let mut rng = StdRng::seed_from_u64(seed);
    let node_types = vec![NodeTypeInfo {
        name: "n".into(),
        count: n,
        feature_dim,
    }];
    let edge_types = vec![EdgeTypeInfo {
        name: "e".into(),
        src_type: Some(0),
        dst_type: Some(0),
        reverse: None,
    }];
    let mut src = Vec::new();
    let mut dst = Vec::new();
    for u in 0..n {
        for _ in 0..rng.gen_range(1..=3usize) {
            let v = rng.gen_range(0..n);
            src.push(u);
            dst.push(v);
        }
    }
    let m = src.len();
    let mut features = BTreeMap::new();
    if feature_dim > 0 {
        features.insert(0, DenseMatrix::xavier_uniform(n, feature_dim, &mut rng));
    }
    HeteroGraph::new(
        vec![0; n],
        node_types,
        edge_types,
        EdgeIndex::new(src, dst, vec![0; m]).unwrap(),
        features,
        None,
        None,
    )
    .expect("generated graph is valid")
}
