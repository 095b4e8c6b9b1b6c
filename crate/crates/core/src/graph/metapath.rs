use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::HeteroGraph;
use crate::tensor::EdgeIndex;

/// An ordered sequence of edge types; endpoint node types are implied by
/// the edge-type declarations.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct MetaPath {
    pub steps: Vec<usize>,
}

impl MetaPath {
    pub fn new(steps: Vec<usize>) -> Self {
        MetaPath { steps }
    }

    /// Resolve a path given as edge-type names.
    pub fn from_names(graph: &HeteroGraph, names: &[&str]) -> Result<Self> {
        let steps = names
            .iter()
            .map(|n| {
                graph
                    .edge_type_id(n)
                    .ok_or_else(|| Error::contract(format!("unknown edge type '{n}' in meta-path")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MetaPath { steps })
    }

    /// Check step compatibility against a graph and return the endpoint
    /// node types (source of the first step, destination of the last).
    pub fn endpoint_types(&self, graph: &HeteroGraph) -> Result<(usize, usize)> {
        if self.steps.is_empty() {
            return Err(Error::contract("meta-path must have at least one step"));
        }
        let mut prev_dst: Option<usize> = None;
        let mut first_src = 0;
        for (k, &t) in self.steps.iter().enumerate() {
            let info = graph.edge_types().get(t).ok_or(Error::Index {
                op: "meta-path step",
                index: t,
                bound: graph.edge_types().len(),
            })?;
            let (src, dst) = match (info.src_type, info.dst_type) {
                (Some(s), Some(d)) => (s, d),
                _ => {
                    return Err(Error::contract(format!(
                        "meta-path step {k} uses the reserved self-loop type"
                    )))
                }
            };
            if let Some(p) = prev_dst {
                if p != src {
                    return Err(Error::contract(format!(
                        "meta-path steps {} and {k} are type-incompatible: '{}' ends at '{}' but '{}' starts at '{}'",
                        k - 1,
                        graph.edge_types()[self.steps[k - 1]].name,
                        graph.node_types()[p].name,
                        info.name,
                        graph.node_types()[src].name
                    )));
                }
            } else {
                first_src = src;
            }
            prev_dst = Some(dst);
        }
        Ok((first_src, prev_dst.expect("non-empty path")))
    }
}

/// Edge u -> v exists in the result iff at least one instance of the
/// meta-path connects u to v. Reachability is boolean (no multiplicities),
/// computed by composing per-step adjacency sets.
pub fn metapath_neighbor_graph(graph: &HeteroGraph, path: &MetaPath) -> Result<EdgeIndex> {
    let (src_type, _) = path.endpoint_types(graph)?;

    // Per-step adjacency lists, deduplicated.
    let mut step_adj: Vec<Vec<Vec<usize>>> = Vec::with_capacity(path.steps.len());
    for &t in &path.steps {
        let mut adj = vec![Vec::new(); graph.node_count()];
        for (s, d, et) in graph.edges().iter() {
            if et == t {
                adj[s].push(d);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        step_adj.push(adj);
    }

    let mut src_out = Vec::new();
    let mut dst_out = Vec::new();
    for u in graph.nodes_of_type(src_type) {
        let mut frontier: BTreeSet<usize> = BTreeSet::new();
        frontier.insert(u);
        for adj in &step_adj {
            let mut next = BTreeSet::new();
            for &x in &frontier {
                next.extend(adj[x].iter().copied());
            }
            frontier = next;
            if frontier.is_empty() {
                break;
            }
        }
        for v in frontier {
            src_out.push(u);
            dst_out.push(v);
        }
    }
    let n = src_out.len();
    EdgeIndex::new(src_out, dst_out, vec![0; n])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EdgeTypeInfo, NodeTypeInfo};
    use std::collections::BTreeMap;

    /// authors {0, 1}, paper {2}; edges ap and pa.
    fn author_paper() -> HeteroGraph {
        let node_types = vec![
            NodeTypeInfo {
                name: "author".into(),
                count: 2,
                feature_dim: 0,
            },
            NodeTypeInfo {
                name: "paper".into(),
                count: 1,
                feature_dim: 0,
            },
        ];
        let edge_types = vec![
            EdgeTypeInfo {
                name: "ap".into(),
                src_type: Some(0),
                dst_type: Some(1),
                reverse: Some(1),
            },
            EdgeTypeInfo {
                name: "pa".into(),
                src_type: Some(1),
                dst_type: Some(0),
                reverse: Some(0),
            },
        ];
        let edges = EdgeIndex::new(vec![0, 1, 2, 2], vec![2, 2, 0, 1], vec![0, 0, 1, 1]).unwrap();
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
    fn coauthor_path_connects_both_authors_and_self() {
        let g = author_paper();
        let path = MetaPath::from_names(&g, &["ap", "pa"]).unwrap();
        let result = metapath_neighbor_graph(&g, &path).unwrap();
        let pairs: BTreeSet<(usize, usize)> =
            result.iter().map(|(s, d, _)| (s, d)).collect();
        // a0 - p - a1 gives a0->a1 and the genuine a0->a0 path through p.
        let expected: BTreeSet<(usize, usize)> =
            [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().collect();
        assert_eq!(pairs, expected);
    }

    #[test]
    fn incompatible_steps_rejected() {
        let g = author_paper();
        let path = MetaPath::from_names(&g, &["ap", "ap"]).unwrap();
        assert!(metapath_neighbor_graph(&g, &path).is_err());
    }

    #[test]
    fn empty_result_path() {
        let g = author_paper();
        // Remove pa edges so ap->pa has no instances from any author.
        let edges = EdgeIndex::new(vec![0], vec![2], vec![0]).unwrap();
        let g2 = g.with_edges(edges).unwrap();
        let path = MetaPath::from_names(&g2, &["pa", "ap"]).unwrap();
        let result = metapath_neighbor_graph(&g2, &path).unwrap();
        assert!(result.is_empty());
    }

    #[test]
    fn single_step_equals_typed_subgraph() {
        let g = author_paper();
        let path = MetaPath::from_names(&g, &["ap"]).unwrap();
        let result = metapath_neighbor_graph(&g, &path).unwrap();
        let got: BTreeSet<(usize, usize)> = result.iter().map(|(s, d, _)| (s, d)).collect();
        let expected: BTreeSet<(usize, usize)> = g.edges_of_type(0).into_iter().collect();
        assert_eq!(got, expected);
    }
}
