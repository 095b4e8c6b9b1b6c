//! Feature preprocessing: map per-type raw features into one shared space.
//!
//! Three selection modes are supported. Mode 0 keeps every given feature
//! block, mode 1 keeps only the target types, mode 2 keeps none. Types
//! without kept features get a trainable per-node embedding table, which is
//! what a one-hot input through a linear layer amounts to without the
//! quadratic memory.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::HeteroGraph;
use crate::tensor::{DenseMatrix, ParamId, ParamStore, Tape, Value};

/// The `feat` convention: 0 keeps all given features, 1 keeps only the
/// target types, 2 replaces everything with learned embeddings.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub enum FeatureMode {
    AllGiven,
    TargetOnly(BTreeSet<usize>),
    AllOneHot,
}

impl FeatureMode {
    pub fn from_code(code: u8, targets: BTreeSet<usize>) -> Result<Self> {
        match code {
            0 => Ok(FeatureMode::AllGiven),
            1 => Ok(FeatureMode::TargetOnly(targets)),
            2 => Ok(FeatureMode::AllOneHot),
            other => Err(Error::contract(format!("feat must be 0, 1, or 2, got {other}"))),
        }
    }
}

/// Effective decision per node type.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TypeFeatureSpec {
    /// Project the raw block with a per-type linear layer.
    Raw,
    /// Learn one embedding row per node of the type.
    Embedding,
}

/// Resolve the mode into a per-type spec. Types that declare no raw
/// features always fall back to embeddings.
pub fn apply_feature_mode(graph: &HeteroGraph, mode: &FeatureMode) -> Result<Vec<TypeFeatureSpec>> {
    if let FeatureMode::TargetOnly(targets) = mode {
        if targets.is_empty() {
            return Err(Error::contract("feat=1 requires a non-empty target type set"));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= graph.node_types().len()) {
            return Err(Error::Index {
                op: "apply_feature_mode",
                index: bad,
                bound: graph.node_types().len(),
            });
        }
    }
    Ok(graph
        .node_types()
        .iter()
        .enumerate()
        .map(|(t, info)| {
            let keep = match mode {
                FeatureMode::AllGiven => true,
                FeatureMode::TargetOnly(targets) => targets.contains(&t),
                FeatureMode::AllOneHot => false,
            };
            if keep && info.feature_dim > 0 {
                TypeFeatureSpec::Raw
            } else {
                TypeFeatureSpec::Embedding
            }
        })
        .collect())
}

enum TypeProjector {
    Linear { weight: ParamId, bias: ParamId },
    Table { embedding: ParamId },
}

/// Per-type projection into the shared `d0`-dimensional space. Kept types
/// get `W x + b`; embedding types pull a trainable row per node. Everything
/// is differentiable and optimized along with the encoder.
pub struct TypedProjector {
    per_type: Vec<TypeProjector>,
    out_dim: usize,
}

impl TypedProjector {
    pub fn new(
        store: &mut ParamStore,
        graph: &HeteroGraph,
        specs: &[TypeFeatureSpec],
        out_dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if specs.len() != graph.node_types().len() {
            return Err(Error::contract(format!(
                "feature specs cover {} types but the graph has {}",
                specs.len(),
                graph.node_types().len()
            )));
        }
        let mut per_type = Vec::with_capacity(specs.len());
        for (t, (spec, info)) in specs.iter().zip(graph.node_types()).enumerate() {
            let name = &info.name;
            match spec {
                TypeFeatureSpec::Raw => {
                    let weight =
                        store.add_xavier(format!("proj.{name}.weight"), info.feature_dim, out_dim, rng);
                    let bias = store.add(format!("proj.{name}.bias"), DenseMatrix::zeros(1, out_dim));
                    per_type.push(TypeProjector::Linear { weight, bias });
                }
                TypeFeatureSpec::Embedding => {
                    let embedding =
                        store.add_xavier(format!("proj.{name}.embedding"), info.count, out_dim, rng);
                    per_type.push(TypeProjector::Table { embedding });
                }
            }
            let _ = t;
        }
        Ok(TypedProjector {
            per_type,
            out_dim,
        })
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    /// Trainable entries owned by the projector (used by the mode-2
    /// parameter-count property: embeddings only, no biases).
    pub fn param_count(&self, store: &ParamStore) -> usize {
        self.per_type
            .iter()
            .map(|p| match p {
                TypeProjector::Linear { weight, bias } => {
                    store.value(*weight).len() + store.value(*bias).len()
                }
                TypeProjector::Table { embedding } => store.value(*embedding).len(),
            })
            .sum()
    }

    pub fn embedding_rows(&self, store: &ParamStore) -> usize {
        self.per_type
            .iter()
            .map(|p| match p {
                TypeProjector::Table { embedding } => store.value(*embedding).rows(),
                TypeProjector::Linear { .. } => 0,
            })
            .sum()
    }

    /// Assemble the full `node_count x d0` input matrix: row v is
    /// `W_t x_v + b_t` for kept types and `embedding_t[v]` otherwise.
    pub fn project(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        graph: &HeteroGraph,
    ) -> Result<Value> {
        let n = graph.node_count();
        let mut acc: Option<Value> = None;
        for (t, proj) in self.per_type.iter().enumerate() {
            let ids = std::sync::Arc::new(graph.nodes_of_type(t));
            if ids.is_empty() {
                continue;
            }
            let block = match proj {
                TypeProjector::Linear { weight, bias } => {
                    let raw = graph.features().get(&t).ok_or_else(|| {
                        Error::contract(format!(
                            "type '{}' marked raw but has no feature block",
                            graph.node_types()[t].name
                        ))
                    })?;
                    if raw.cols() != store.value(*weight).rows() {
                        return Err(Error::contract(format!(
                            "type '{}': feature dim {} does not match projector input {}",
                            graph.node_types()[t].name,
                            raw.cols(),
                            store.value(*weight).rows()
                        )));
                    }
                    let x = tape.constant(raw.clone());
                    let w = tape.param(store, *weight);
                    let b = tape.param(store, *bias);
                    let xw = tape.matmul(x, w)?;
                    tape.add_row_broadcast(xw, b)?
                }
                TypeProjector::Table { embedding } => tape.param(store, *embedding),
            };
            // Rows of the block follow global-id order within the type, so a
            // scatter by global id assembles the full matrix; type blocks are
            // disjoint, making the sum a plain placement.
            let order: std::sync::Arc<Vec<usize>> =
                std::sync::Arc::new((0..ids.len()).collect());
            let placed = tape.scatter_sum_rows(block, ids, order, n)?;
            acc = Some(match acc {
                None => placed,
                Some(prev) => tape.add(prev, placed)?,
            });
        }
        acc.ok_or_else(|| Error::contract("graph has no nodes to project"))
    }
}
