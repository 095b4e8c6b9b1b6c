use rand::rngs::StdRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::HeteroGraph;
use crate::models::gat::{GatGraphCtx, GatLayer};
use crate::models::gcn::{GcnGraphCtx, GcnLayer};
use crate::models::rgcn::{RgcnGraphCtx, RgcnLayer};
use crate::models::simple_hgn::{SimpleHgnLayer, SimpleHgnLayerSpec};
use crate::models::{maybe_dropout, Mode};
use crate::preprocess::{apply_feature_mode, FeatureMode, TypedProjector};
use crate::tensor::{ParamStore, Tape, Value};

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Node,
    Link,
    Rec,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Gcn,
    Gat,
    Rgcn,
    SimpleHgn,
}

/// Everything needed to build an encoder stack for one graph.
pub struct EncoderSpec {
    pub kind: ModelKind,
    pub task: Task,
    /// Shared input dimension d0 produced by feature preprocessing.
    pub input_dim: usize,
    /// Output dim per layer. For attention models this is the per-head dim;
    /// hidden layers emit `heads * dim`, the final layer averages to `dim`.
    pub layer_dims: Vec<usize>,
    pub heads: usize,
    pub edge_dim: usize,
    pub beta: f64,
    pub slope: f64,
    pub feature_mode: FeatureMode,
    pub l2_output: bool,
    pub node_residual: bool,
    pub type_embedding: bool,
}

pub enum EncoderKind {
    Gcn(Vec<GcnLayer>, GcnGraphCtx),
    Gat(Vec<GatLayer>, GatGraphCtx),
    Rgcn(Vec<RgcnLayer>, RgcnGraphCtx),
    SimpleHgn(Vec<SimpleHgnLayer>, GatGraphCtx),
}

/// Feature projection plus a layer stack bound to one graph, with the
/// task-specific readout.
///
/// Node and recommendation tasks thread attention weights through the edge
/// residual, average heads at the last layer, and L2-normalize the output.
/// The link variant forces the edge residual off and emits the
/// L2-normalized concatenation of every layer's output including the input
/// projection.
pub struct Encoder {
    pub projector: TypedProjector,
    pub kind: EncoderKind,
    pub task: Task,
    pub l2_output: bool,
    num_nodes: usize,
}

impl Encoder {
    pub fn build(
        store: &mut ParamStore,
        graph: &HeteroGraph,
        spec: &EncoderSpec,
        rng: &mut StdRng,
    ) -> Result<Encoder> {
        if spec.layer_dims.is_empty() {
            return Err(Error::contract("encoder needs at least one layer"));
        }
        if matches!(spec.kind, ModelKind::Gat | ModelKind::SimpleHgn) && spec.heads == 0 {
            return Err(Error::contract("attention encoders need at least one head"));
        }
        let specs = apply_feature_mode(graph, &spec.feature_mode)?;
        let projector = TypedProjector::new(store, graph, &specs, spec.input_dim, rng)?;

        // The link variant removes the edge residual.
        let beta = if spec.task == Task::Link { 0.0 } else { spec.beta };

        let kind = match spec.kind {
            ModelKind::Gcn => {
                let ctx = GcnGraphCtx::new(graph);
                let mut layers = Vec::new();
                let mut d_in = spec.input_dim;
                for (l, &d_out) in spec.layer_dims.iter().enumerate() {
                    layers.push(GcnLayer::new(store, d_in, d_out, rng, &format!("gcn{l}")));
                    d_in = d_out;
                }
                EncoderKind::Gcn(layers, ctx)
            }
            ModelKind::Rgcn => {
                let ctx = RgcnGraphCtx::new(graph)?;
                let mut layers = Vec::new();
                let mut d_in = spec.input_dim;
                for (l, &d_out) in spec.layer_dims.iter().enumerate() {
                    layers.push(RgcnLayer::new(
                        store,
                        d_in,
                        d_out,
                        ctx.num_relations(),
                        rng,
                        &format!("rgcn{l}"),
                    ));
                    d_in = d_out;
                }
                EncoderKind::Rgcn(layers, ctx)
            }
            ModelKind::Gat => {
                let ctx = GatGraphCtx::new(graph);
                let mut layers = Vec::new();
                let mut d_in = spec.input_dim;
                let last = spec.layer_dims.len() - 1;
                for (l, &d_head) in spec.layer_dims.iter().enumerate() {
                    layers.push(GatLayer::new(
                        store,
                        d_in,
                        d_head,
                        spec.heads,
                        spec.slope,
                        rng,
                        &format!("gat{l}"),
                    ));
                    d_in = if l == last { d_head } else { d_head * spec.heads };
                }
                EncoderKind::Gat(layers, ctx)
            }
            ModelKind::SimpleHgn => {
                let ctx = GatGraphCtx::new(graph);
                // Self loops add one extra type past the declared ones.
                let num_etypes = graph.edge_types().len() + usize::from(!graph.has_self_loops());
                let mut layers = Vec::new();
                let mut d_in = spec.input_dim;
                let last = spec.layer_dims.len() - 1;
                for (l, &d_head) in spec.layer_dims.iter().enumerate() {
                    layers.push(SimpleHgnLayer::new(
                        store,
                        &SimpleHgnLayerSpec {
                            name: &format!("hgn{l}"),
                            d_in,
                            d_head,
                            num_heads: spec.heads,
                            edge_dim: spec.edge_dim,
                            num_etypes,
                            beta,
                            slope: spec.slope,
                            is_final: l == last,
                            type_embedding: spec.type_embedding,
                            node_residual: spec.node_residual,
                        },
                        rng,
                    )?);
                    d_in = if l == last { d_head } else { d_head * spec.heads };
                }
                EncoderKind::SimpleHgn(layers, ctx)
            }
        };
        Ok(Encoder {
            projector,
            kind,
            task: spec.task,
            l2_output: spec.l2_output,
            num_nodes: graph.node_count(),
        })
    }

    /// Final per-node embedding (or logit) dimension.
    pub fn output_dim(&self, spec_dims: &[usize], input_dim: usize, heads: usize) -> usize {
        let last = *spec_dims.last().expect("non-empty dims");
        match (&self.kind, self.task) {
            (EncoderKind::SimpleHgn(..), Task::Link) => {
                // input projection + hidden concats + averaged final layer
                let hidden: usize = spec_dims[..spec_dims.len() - 1]
                    .iter()
                    .map(|d| d * heads)
                    .sum();
                input_dim + hidden + last
            }
            (EncoderKind::Gcn(..) | EncoderKind::Rgcn(..), _) => last,
            _ => last,
        }
    }

    /// Full forward pass: project features, run the stack, apply the
    /// task-specific readout. Returns one row per node.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        graph: &HeteroGraph,
        mode: &mut Mode,
    ) -> Result<Value> {
        let h0 = self.projector.project(tape, store, graph)?;
        match &self.kind {
            EncoderKind::Gcn(layers, ctx) => {
                let mut h = h0;
                let last = layers.len() - 1;
                for (l, layer) in layers.iter().enumerate() {
                    h = maybe_dropout(tape, h, mode)?;
                    h = layer.forward(tape, store, h, ctx, l != last)?;
                }
                Ok(h)
            }
            EncoderKind::Rgcn(layers, ctx) => {
                let mut h = h0;
                let last = layers.len() - 1;
                for (l, layer) in layers.iter().enumerate() {
                    h = maybe_dropout(tape, h, mode)?;
                    h = layer.forward(tape, store, h, ctx, l != last)?;
                }
                Ok(h)
            }
            EncoderKind::Gat(layers, ctx) => {
                let mut h = h0;
                let last = layers.len() - 1;
                for (l, layer) in layers.iter().enumerate() {
                    h = maybe_dropout(tape, h, mode)?;
                    h = layer.forward(tape, store, h, ctx, l == last, mode)?;
                }
                Ok(h)
            }
            EncoderKind::SimpleHgn(layers, ctx) => {
                let mut h = h0;
                let mut prev_alphas: Option<Vec<Value>> = None;
                let mut per_layer = vec![h0];
                for layer in layers {
                    let h_in = maybe_dropout(tape, h, mode)?;
                    let (out, alphas) = layer.forward(
                        tape,
                        store,
                        h_in,
                        &ctx.edges,
                        self.num_nodes,
                        prev_alphas.as_deref(),
                        mode,
                    )?;
                    h = out;
                    per_layer.push(out);
                    prev_alphas = Some(alphas);
                }
                let readout = match self.task {
                    Task::Node | Task::Rec => h,
                    Task::Link => tape.concat_cols(&per_layer)?,
                };
                Ok(if self.l2_output {
                    tape.l2_normalize_rows(readout)
                } else {
                    readout
                })
            }
        }
    }
}
