use rand::Rng;

use crate::error::{Error, Result};
use crate::models::{ensure_in_edge_coverage, maybe_dropout, Mode};
use crate::tensor::{EdgeIndex, ParamId, ParamStore, Tape, Value};

struct Head {
    weight: ParamId,
    attn_dst: ParamId,
    attn_src: ParamId,
}

/// Edge-type attention parameters: one embedding row per edge type
/// (including the reserved self type) shared across heads, plus a per-head
/// transform and attention slice for the type term.
struct TypeAttention {
    table: ParamId,
    per_head: Vec<TypeHead>,
}

struct TypeHead {
    rel_weight: ParamId,
    attn_type: ParamId,
}

/// Node residual applied after head concatenation on hidden layers.
pub enum NodeResidual {
    /// No skip connection (final layer, or ablated).
    None,
    /// Input and output dims match; add the input directly.
    Identity,
    /// Learned projection from the input dim to the concatenated dim.
    Proj(ParamId),
}

/// Graph attention extended with edge-type embeddings in the score, a
/// pre-activation node residual, and a convex residual on the attention
/// weights themselves.
///
/// Per head k the raw score of edge (i, j) is
/// `LeakyReLU(a . [W h_i || W h_j || W_r r_type])`, softmax-normalized per
/// destination, then combined with the previous layer's weights as
/// `alpha = (1 - beta) alpha_hat + beta alpha_prev`. Hidden layers
/// concatenate heads (plus the node residual) under ELU; the final layer
/// averages heads with neither residual nor activation.
pub struct SimpleHgnLayer {
    heads: Vec<Head>,
    type_attention: Option<TypeAttention>,
    pub residual: NodeResidual,
    pub beta: f64,
    pub slope: f64,
    pub is_final: bool,
}

/// Everything needed to allocate one layer's parameters.
pub struct SimpleHgnLayerSpec<'a> {
    pub name: &'a str,
    pub d_in: usize,
    pub d_head: usize,
    pub num_heads: usize,
    pub edge_dim: usize,
    pub num_etypes: usize,
    pub beta: f64,
    pub slope: f64,
    pub is_final: bool,
    /// Allocate the edge-type term; disabled by the type-embedding ablation.
    pub type_embedding: bool,
    /// Allocate the node residual on hidden layers.
    pub node_residual: bool,
}

impl SimpleHgnLayer {
    pub fn new(store: &mut ParamStore, spec: &SimpleHgnLayerSpec, rng: &mut impl Rng) -> Result<Self> {
        if !(0.0..=1.0).contains(&spec.beta) {
            return Err(Error::contract(format!(
                "edge-residual beta must lie in [0,1], got {}",
                spec.beta
            )));
        }
        let name = spec.name;
        let heads = (0..spec.num_heads)
            .map(|k| Head {
                weight: store.add_xavier(format!("{name}.h{k}.weight"), spec.d_in, spec.d_head, rng),
                attn_dst: store.add_xavier(format!("{name}.h{k}.attn_dst"), spec.d_head, 1, rng),
                attn_src: store.add_xavier(format!("{name}.h{k}.attn_src"), spec.d_head, 1, rng),
            })
            .collect();
        let type_attention = if spec.type_embedding {
            Some(TypeAttention {
                table: store.add_xavier(
                    format!("{name}.type_embed"),
                    spec.num_etypes,
                    spec.edge_dim,
                    rng,
                ),
                per_head: (0..spec.num_heads)
                    .map(|k| TypeHead {
                        rel_weight: store.add_xavier(
                            format!("{name}.h{k}.rel_weight"),
                            spec.edge_dim,
                            spec.d_head,
                            rng,
                        ),
                        attn_type: store.add_xavier(format!("{name}.h{k}.attn_type"), spec.d_head, 1, rng),
                    })
                    .collect(),
            })
        } else {
            None
        };
        let residual = if spec.is_final || !spec.node_residual {
            NodeResidual::None
        } else if spec.d_in == spec.d_head * spec.num_heads {
            NodeResidual::Identity
        } else {
            NodeResidual::Proj(store.add_xavier(
                format!("{name}.residual.weight"),
                spec.d_in,
                spec.d_head * spec.num_heads,
                rng,
            ))
        };
        Ok(SimpleHgnLayer {
            heads,
            type_attention,
            residual,
            beta: spec.beta,
            slope: spec.slope,
            is_final: spec.is_final,
        })
    }

    pub fn num_heads(&self) -> usize {
        self.heads.len()
    }

    fn head_alpha_hat(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        k: usize,
        wh: Value,
        edges: &EdgeIndex,
    ) -> Result<Value> {
        let head = &self.heads[k];
        let a_dst = tape.param(store, head.attn_dst);
        let a_src = tape.param(store, head.attn_src);
        let score_dst = tape.matmul(wh, a_dst)?;
        let score_src = tape.matmul(wh, a_src)?;
        let per_edge_dst = tape.gather_rows(score_dst, edges.dst_arc())?;
        let per_edge_src = tape.gather_rows(score_src, edges.src_arc())?;
        let mut raw = tape.add(per_edge_dst, per_edge_src)?;
        if let Some(ta) = &self.type_attention {
            let table = tape.param(store, ta.table);
            let wr = tape.param(store, ta.per_head[k].rel_weight);
            let a_type = tape.param(store, ta.per_head[k].attn_type);
            let transformed = tape.matmul(table, wr)?;
            let score_type = tape.matmul(transformed, a_type)?;
            let per_edge_type = tape.gather_rows(score_type, edges.etype_arc())?;
            raw = tape.add(raw, per_edge_type)?;
        }
        let activated = tape.leaky_relu(raw, self.slope);
        tape.segment_softmax(activated, edges)
    }

    fn combine_residual(
        &self,
        tape: &mut Tape,
        alpha_hat: Value,
        prev: Option<&[Value]>,
        k: usize,
    ) -> Result<Value> {
        match prev {
            // Layer one has no previous weights; beta is ignored there.
            None => Ok(alpha_hat),
            Some(_) if self.beta == 0.0 => Ok(alpha_hat),
            Some(prev_alphas) => {
                let prev_k = prev_alphas.get(k).copied().ok_or_else(|| {
                    Error::contract(format!(
                        "edge residual: previous layer provided {} heads, need head {k}",
                        prev_alphas.len()
                    ))
                })?;
                if self.beta == 1.0 {
                    return Ok(prev_k);
                }
                let scaled_hat = tape.scale(alpha_hat, 1.0 - self.beta);
                let scaled_prev = tape.scale(prev_k, self.beta);
                tape.add(scaled_hat, scaled_prev)
            }
        }
    }

    /// Per-head attention weights after the edge residual. `prev` holds the
    /// previous layer's weights (same head count, same edge set).
    pub fn attention(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        h: Value,
        edges: &EdgeIndex,
        prev: Option<&[Value]>,
    ) -> Result<Vec<Value>> {
        ensure_in_edge_coverage(edges, tape.value(h).rows())?;
        (0..self.heads.len())
            .map(|k| {
                let w = tape.param(store, self.heads[k].weight);
                let wh = tape.matmul(h, w)?;
                let alpha_hat = self.head_alpha_hat(tape, store, k, wh, edges)?;
                self.combine_residual(tape, alpha_hat, prev, k)
            })
            .collect()
    }

    /// One layer pass. Returns the new representations and the attention
    /// weights that the next layer's edge residual consumes (pre-dropout).
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        h: Value,
        edges: &EdgeIndex,
        num_nodes: usize,
        prev: Option<&[Value]>,
        mode: &mut Mode,
    ) -> Result<(Value, Vec<Value>)> {
        ensure_in_edge_coverage(edges, tape.value(h).rows())?;
        let mut alphas = Vec::with_capacity(self.heads.len());
        let mut outputs = Vec::with_capacity(self.heads.len());
        for k in 0..self.heads.len() {
            let w = tape.param(store, self.heads[k].weight);
            let wh = tape.matmul(h, w)?;
            let alpha_hat = self.head_alpha_hat(tape, store, k, wh, edges)?;
            let alpha = self.combine_residual(tape, alpha_hat, prev, k)?;
            alphas.push(alpha);
            let alpha_used = maybe_dropout(tape, alpha, mode)?;
            let gathered = tape.gather_rows(wh, edges.src_arc())?;
            let weighted = tape.mul_col_broadcast(gathered, alpha_used)?;
            outputs.push(tape.scatter_sum(weighted, edges, num_nodes)?);
        }
        let out = if self.is_final {
            let mut acc = outputs[0];
            for &o in &outputs[1..] {
                acc = tape.add(acc, o)?;
            }
            tape.scale(acc, 1.0 / self.heads.len() as f64)
        } else {
            let cat = tape.concat_cols(&outputs)?;
            let with_res = match &self.residual {
                NodeResidual::None => cat,
                NodeResidual::Identity => tape.add(cat, h)?,
                NodeResidual::Proj(w) => {
                    let wv = tape.param(store, *w);
                    let projected = tape.matmul(h, wv)?;
                    tape.add(cat, projected)?
                }
            };
            tape.elu(with_res)
        };
        Ok((out, alphas))
    }
}
