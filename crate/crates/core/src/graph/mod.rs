//! Heterogeneous graph data model, on-disk format, split generation,
//! meta-path neighbor graphs, and negative sampling.

pub mod io;
pub mod metapath;
pub mod negative;
pub mod split;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{DenseMatrix, EdgeIndex};

pub use metapath::{metapath_neighbor_graph, MetaPath};
pub use negative::{random_negatives, two_hop_negatives, TwoHopSampler};
pub use split::{split_edges, split_interactions, split_nodes, SplitSpec};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NodeTypeInfo {
    pub name: String,
    pub count: usize,
    #[serde(default)]
    pub feature_dim: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EdgeTypeInfo {
    pub name: String,
    /// Endpoint node types. `None` only for the reserved self-loop type,
    /// which connects every node to itself regardless of type.
    pub src_type: Option<usize>,
    pub dst_type: Option<usize>,
    /// Another edge type that holds the reversed direction, materialized on
    /// demand by [`HeteroGraph::materialize_reverses`].
    #[serde(default)]
    pub reverse: Option<usize>,
}

/// Node labels for classification tasks, keyed by global node id.
#[derive(Clone, Debug, PartialEq)]
pub enum Labels {
    Single {
        classes: usize,
        by_node: BTreeMap<usize, usize>,
    },
    Multi {
        classes: usize,
        by_node: BTreeMap<usize, Vec<usize>>,
    },
}

impl Labels {
    pub fn classes(&self) -> usize {
        match self {
            Labels::Single { classes, .. } | Labels::Multi { classes, .. } => *classes,
        }
    }

    pub fn labeled_nodes(&self) -> Vec<usize> {
        match self {
            Labels::Single { by_node, .. } => by_node.keys().copied().collect(),
            Labels::Multi { by_node, .. } => by_node.keys().copied().collect(),
        }
    }

    pub fn is_multi(&self) -> bool {
        matches!(self, Labels::Multi { .. })
    }
}

/// Optional task metadata carried by `meta.json`.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct TaskMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_node_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_edge_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multi_label: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item_type: Option<String>,
}

/// Typed nodes and edges plus per-type raw feature blocks. Immutable after
/// construction; derived views (self loops, reverses, train subgraphs) are
/// new graphs.
#[derive(Clone, Debug)]
pub struct HeteroGraph {
    node_count: usize,
    node_type: Vec<usize>,
    node_types: Vec<NodeTypeInfo>,
    edge_types: Vec<EdgeTypeInfo>,
    edges: EdgeIndex,
    /// Per node-type feature block; rows follow global-id order within the type.
    features: BTreeMap<usize, DenseMatrix>,
    labels: Option<Labels>,
    task: Option<TaskMeta>,
    /// Row of each node inside its type's feature block.
    row_in_type: Vec<usize>,
    has_self_loops: bool,
}

impl HeteroGraph {
    pub fn new(
        node_type: Vec<usize>,
        node_types: Vec<NodeTypeInfo>,
        edge_types: Vec<EdgeTypeInfo>,
        edges: EdgeIndex,
        features: BTreeMap<usize, DenseMatrix>,
        labels: Option<Labels>,
        task: Option<TaskMeta>,
    ) -> Result<Self> {
        let node_count = node_type.len();
        if node_types.is_empty() {
            return Err(Error::contract("graph must declare at least one node type"));
        }
        let mut per_type_count = vec![0usize; node_types.len()];
        let mut row_in_type = vec![0usize; node_count];
        for (v, &t) in node_type.iter().enumerate() {
            if t >= node_types.len() {
                return Err(Error::Index {
                    op: "node_type",
                    index: t,
                    bound: node_types.len(),
                });
            }
            row_in_type[v] = per_type_count[t];
            per_type_count[t] += 1;
        }
        for (t, info) in node_types.iter().enumerate() {
            if per_type_count[t] != info.count {
                return Err(Error::contract(format!(
                    "node type '{}' declares {} nodes but {} were assigned",
                    info.name, info.count, per_type_count[t]
                )));
            }
        }
        for (t, feat) in &features {
            let expected = node_types
                .get(*t)
                .map(|i| (i.count, i.feature_dim))
                .ok_or(Error::Index {
                    op: "features",
                    index: *t,
                    bound: node_types.len(),
                })?;
            if feat.shape() != expected {
                return Err(Error::contract(format!(
                    "feature block for type '{}' has shape {}x{}, expected {}x{}",
                    node_types[*t].name,
                    feat.rows(),
                    feat.cols(),
                    expected.0,
                    expected.1
                )));
            }
        }
        for (s, d, t) in edges.iter() {
            if s >= node_count || d >= node_count {
                return Err(Error::Index {
                    op: "edge endpoint",
                    index: s.max(d),
                    bound: node_count,
                });
            }
            let info = edge_types.get(t).ok_or(Error::Index {
                op: "edge type",
                index: t,
                bound: edge_types.len(),
            })?;
            if let Some(st) = info.src_type {
                if node_type[s] != st {
                    return Err(Error::contract(format!(
                        "edge {s}->{d} of type '{}' has source of type '{}', expected '{}'",
                        info.name, node_types[node_type[s]].name, node_types[st].name
                    )));
                }
            }
            if let Some(dt) = info.dst_type {
                if node_type[d] != dt {
                    return Err(Error::contract(format!(
                        "edge {s}->{d} of type '{}' has destination of type '{}', expected '{}'",
                        info.name, node_types[node_type[d]].name, node_types[dt].name
                    )));
                }
            }
        }
        if let Some(labels) = &labels {
            let (classes, max_node) = match labels {
                Labels::Single { classes, by_node } => {
                    if let Some((_, &c)) = by_node.iter().find(|(_, &c)| c >= *classes) {
                        return Err(Error::Index {
                            op: "label",
                            index: c,
                            bound: *classes,
                        });
                    }
                    (*classes, by_node.keys().next_back().copied())
                }
                Labels::Multi { classes, by_node } => {
                    for cs in by_node.values() {
                        if let Some(&c) = cs.iter().find(|&&c| c >= *classes) {
                            return Err(Error::Index {
                                op: "label",
                                index: c,
                                bound: *classes,
                            });
                        }
                    }
                    (*classes, by_node.keys().next_back().copied())
                }
            };
            let _ = classes;
            if let Some(n) = max_node {
                if n >= node_count {
                    return Err(Error::Index {
                        op: "labeled node",
                        index: n,
                        bound: node_count,
                    });
                }
            }
        }
        Ok(HeteroGraph {
            node_count,
            node_type,
            node_types,
            edge_types,
            edges,
            features,
            labels,
            task,
            row_in_type,
            has_self_loops: false,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &EdgeIndex {
        &self.edges
    }

    pub fn node_type_of(&self, v: usize) -> usize {
        self.node_type[v]
    }

    pub fn node_types(&self) -> &[NodeTypeInfo] {
        &self.node_types
    }

    pub fn edge_types(&self) -> &[EdgeTypeInfo] {
        &self.edge_types
    }

    pub fn features(&self) -> &BTreeMap<usize, DenseMatrix> {
        &self.features
    }

    pub fn labels(&self) -> Option<&Labels> {
        self.labels.as_ref()
    }

    pub fn task(&self) -> Option<&TaskMeta> {
        self.task.as_ref()
    }

    pub fn has_self_loops(&self) -> bool {
        self.has_self_loops
    }

    /// Row of node `v` inside its type's feature block.
    pub fn row_in_type(&self, v: usize) -> usize {
        self.row_in_type[v]
    }

    /// Global ids of nodes of type `t`, in ascending order.
    pub fn nodes_of_type(&self, t: usize) -> Vec<usize> {
        (0..self.node_count)
            .filter(|&v| self.node_type[v] == t)
            .collect()
    }

    pub fn node_type_id(&self, name: &str) -> Option<usize> {
        self.node_types.iter().position(|i| i.name == name)
    }

    pub fn edge_type_id(&self, name: &str) -> Option<usize> {
        self.edge_types.iter().position(|i| i.name == name)
    }

    /// Edges of one type as (src, dst) pairs, in stored order.
    pub fn edges_of_type(&self, etype: usize) -> Vec<(usize, usize)> {
        self.edges
            .iter()
            .filter(|&(_, _, t)| t == etype)
            .map(|(s, d, _)| (s, d))
            .collect()
    }

    /// Histogram of edge counts per edge type.
    pub fn etype_histogram(&self) -> Vec<usize> {
        let mut hist = vec![0usize; self.edge_types.len()];
        for &t in self.edges.etype() {
            hist[t] += 1;
        }
        hist
    }

    /// Undirected adjacency lists (both edge directions merged), used by
    /// distance-based sampling. Self loops are skipped; neighbor lists are
    /// sorted and deduplicated.
    pub fn undirected_adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.node_count];
        for (s, d, _) in self.edges.iter() {
            if s != d {
                adj[s].push(d);
                adj[d].push(s);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }

    /// Graph with one additional self edge per node, carrying the reserved
    /// "self" type (id = number of declared edge types). Idempotent.
    pub fn add_self_loops(&self) -> HeteroGraph {
        if self.has_self_loops {
            return self.clone();
        }
        let mut edge_types = self.edge_types.clone();
        let self_type = edge_types.len();
        edge_types.push(EdgeTypeInfo {
            name: "self".to_string(),
            src_type: None,
            dst_type: None,
            reverse: None,
        });
        let mut src = self.edges.src().to_vec();
        let mut dst = self.edges.dst().to_vec();
        let mut etype = self.edges.etype().to_vec();
        for v in 0..self.node_count {
            src.push(v);
            dst.push(v);
            etype.push(self_type);
        }
        let mut out = self.clone();
        out.edge_types = edge_types;
        out.edges = EdgeIndex::new(src, dst, etype).expect("parallel arrays");
        out.has_self_loops = true;
        out
    }

    /// Id of the reserved self-loop edge type, when present.
    pub fn self_etype(&self) -> Option<usize> {
        self.has_self_loops.then(|| self.edge_types.len() - 1)
    }

    /// Number of edge types message passing distinguishes (declared types
    /// plus the self type when present).
    pub fn etype_count(&self) -> usize {
        self.edge_types.len()
    }

    /// Graph with reversed copies of every edge whose type declares a
    /// reverse type. Edge types stay as declared; only edges are added.
    pub fn materialize_reverses(&self) -> HeteroGraph {
        let mut src = self.edges.src().to_vec();
        let mut dst = self.edges.dst().to_vec();
        let mut etype = self.edges.etype().to_vec();
        for (s, d, t) in self.edges.iter() {
            if let Some(rev) = self.edge_types[t].reverse {
                src.push(d);
                dst.push(s);
                etype.push(rev);
            }
        }
        let mut out = self.clone();
        out.edges = EdgeIndex::new(src, dst, etype).expect("parallel arrays");
        out
    }

    /// Same graph with a different edge set; node data is shared.
    pub fn with_edges(&self, edges: EdgeIndex) -> Result<HeteroGraph> {
        let mut out = self.clone();
        for (s, d, t) in edges.iter() {
            if s >= self.node_count || d >= self.node_count || t >= self.edge_types.len() {
                return Err(Error::contract(format!(
                    "edge ({s},{d},{t}) out of bounds for graph"
                )));
            }
        }
        out.edges = edges;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_type_graph() -> HeteroGraph {
        let node_types = vec![
            NodeTypeInfo {
                name: "a".into(),
                count: 2,
                feature_dim: 0,
            },
            NodeTypeInfo {
                name: "b".into(),
                count: 1,
                feature_dim: 0,
            },
        ];
        let edge_types = vec![EdgeTypeInfo {
            name: "ab".into(),
            src_type: Some(0),
            dst_type: Some(1),
            reverse: None,
        }];
        let edges = EdgeIndex::new(vec![0, 1], vec![2, 2], vec![0, 0]).unwrap();
        HeteroGraph::new(
            vec![0, 0, 1],
            node_types,
            edge_types,
            edges,
            BTreeMap::new(),
            None,
            None,
        )
        .unwrap()
    }

    #[test]
    fn self_loops_add_one_edge_per_node() {
        let g = two_type_graph();
        let sl = g.add_self_loops();
        assert_eq!(sl.edge_count(), g.edge_count() + g.node_count());
        assert_eq!(sl.self_etype(), Some(1));
        let hist = sl.etype_histogram();
        assert_eq!(hist[1], g.node_count());
    }

    #[test]
    fn self_loops_idempotent() {
        let g = two_type_graph();
        let once = g.add_self_loops();
        let twice = once.add_self_loops();
        assert_eq!(once.edge_count(), twice.edge_count());
        assert_eq!(once.etype_count(), twice.etype_count());
    }

    #[test]
    fn endpoint_type_mismatch_rejected() {
        let node_types = vec![
            NodeTypeInfo {
                name: "a".into(),
                count: 1,
                feature_dim: 0,
            },
            NodeTypeInfo {
                name: "b".into(),
                count: 1,
                feature_dim: 0,
            },
        ];
        let edge_types = vec![EdgeTypeInfo {
            name: "ab".into(),
            src_type: Some(0),
            dst_type: Some(1),
            reverse: None,
        }];
        // dst has type a, not b
        let edges = EdgeIndex::new(vec![0], vec![0], vec![0]).unwrap();
        let res = HeteroGraph::new(
            vec![0, 1],
            node_types,
            edge_types,
            edges,
            BTreeMap::new(),
            None,
            None,
        );
        assert!(res.is_err());
    }

    #[test]
    fn row_in_type_follows_global_order() {
        let g = two_type_graph();
        assert_eq!(g.row_in_type(0), 0);
        assert_eq!(g.row_in_type(1), 1);
        assert_eq!(g.row_in_type(2), 0);
    }
}
