//! Encoder layers: GCN, GAT, and RGCN baselines plus the typed-attention
//! layer with edge-type embeddings, node/edge residuals, and output
//! normalization, stacked per task by [`encoder::Encoder`].

pub mod encoder;
pub mod gat;
pub mod gcn;
pub mod rgcn;
pub mod simple_hgn;

use rand::rngs::StdRng;

use crate::error::{Error, Result};
use crate::tensor::{EdgeIndex, Tape, Value};

pub use encoder::{Encoder, EncoderKind, EncoderSpec, ModelKind, Task};
pub use gat::{GatGraphCtx, GatLayer};
pub use gcn::{GcnGraphCtx, GcnLayer};
pub use rgcn::{RgcnGraphCtx, RgcnLayer};
pub use simple_hgn::{NodeResidual, SimpleHgnLayer};

/// Forward-pass mode. Training carries the dropout rate and the run's rng;
/// evaluation applies no dropout.
pub enum Mode<'a> {
    Eval,
    Train { dropout: f64, rng: &'a mut StdRng },
}

pub(crate) fn maybe_dropout(tape: &mut Tape, x: Value, mode: &mut Mode) -> Result<Value> {
    match mode {
        Mode::Eval => Ok(x),
        Mode::Train { dropout, rng } => tape.dropout(x, *dropout, rng),
    }
}

/// Attention layers require every node to have at least one incoming edge
/// (softmax groups would otherwise be undefined for isolated nodes).
pub(crate) fn ensure_in_edge_coverage(edges: &EdgeIndex, num_nodes: usize) -> Result<()> {
    let mut covered = vec![false; num_nodes];
    for &d in edges.dst() {
        if d < num_nodes {
            covered[d] = true;
        }
    }
    if let Some(v) = covered.iter().position(|c| !c) {
        return Err(Error::contract(format!(
            "node {v} has no incoming edges; run add_self_loops on the graph before attention layers"
        )));
    }
    Ok(())
}
