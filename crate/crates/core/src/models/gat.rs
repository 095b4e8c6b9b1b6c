use rand::Rng;

use crate::error::Result;
use crate::graph::HeteroGraph;
use crate::models::{ensure_in_edge_coverage, maybe_dropout, Mode};
use crate::tensor::{EdgeIndex, ParamId, ParamStore, Tape, Value};

/// Self-looped edge set for attention layers.
pub struct GatGraphCtx {
    pub edges: EdgeIndex,
    pub num_nodes: usize,
}

impl GatGraphCtx {
    pub fn new(graph: &HeteroGraph) -> Self {
        let looped;
        let g = if graph.has_self_loops() {
            graph
        } else {
            looped = graph.add_self_loops();
            &looped
        };
        GatGraphCtx {
            edges: g.edges().clone(),
            num_nodes: g.node_count(),
        }
    }
}

struct GatHead {
    weight: ParamId,
    attn_dst: ParamId,
    attn_src: ParamId,
}

/// Multi-head graph attention. Scores per edge are
/// `LeakyReLU(a_dst . W h_dst + a_src . W h_src)`, softmax-normalized per
/// destination; hidden layers concatenate heads under ELU, the final layer
/// averages them.
pub struct GatLayer {
    heads: Vec<GatHead>,
    pub slope: f64,
}

impl GatLayer {
    pub fn new(
        store: &mut ParamStore,
        d_in: usize,
        d_head: usize,
        num_heads: usize,
        slope: f64,
        rng: &mut impl Rng,
        name: &str,
    ) -> Self {
        let heads = (0..num_heads)
            .map(|k| GatHead {
                weight: store.add_xavier(format!("{name}.h{k}.weight"), d_in, d_head, rng),
                attn_dst: store.add_xavier(format!("{name}.h{k}.attn_dst"), d_head, 1, rng),
                attn_src: store.add_xavier(format!("{name}.h{k}.attn_src"), d_head, 1, rng),
            })
            .collect();
        GatLayer { heads, slope }
    }

    pub fn num_heads(&self) -> usize {
        self.heads.len()
    }

    fn head_alpha(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        head: &GatHead,
        wh: Value,
        edges: &EdgeIndex,
    ) -> Result<Value> {
        let a_dst = tape.param(store, head.attn_dst);
        let a_src = tape.param(store, head.attn_src);
        let score_dst = tape.matmul(wh, a_dst)?;
        let score_src = tape.matmul(wh, a_src)?;
        let per_edge_dst = tape.gather_rows(score_dst, edges.dst_arc())?;
        let per_edge_src = tape.gather_rows(score_src, edges.src_arc())?;
        let raw = tape.add(per_edge_dst, per_edge_src)?;
        let activated = tape.leaky_relu(raw, self.slope);
        tape.segment_softmax(activated, edges)
    }

    /// Per-head attention weights, normalized per destination node.
    pub fn attention_scores(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        h: Value,
        edges: &EdgeIndex,
    ) -> Result<Vec<Value>> {
        ensure_in_edge_coverage(edges, tape.value(h).rows())?;
        self.heads
            .iter()
            .map(|head| {
                let w = tape.param(store, head.weight);
                let wh = tape.matmul(h, w)?;
                self.head_alpha(tape, store, head, wh, edges)
            })
            .collect()
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        h: Value,
        ctx: &GatGraphCtx,
        last: bool,
        mode: &mut Mode,
    ) -> Result<Value> {
        ensure_in_edge_coverage(&ctx.edges, tape.value(h).rows())?;
        let mut outputs = Vec::with_capacity(self.heads.len());
        for head in &self.heads {
            let w = tape.param(store, head.weight);
            let wh = tape.matmul(h, w)?;
            let alpha = self.head_alpha(tape, store, head, wh, &ctx.edges)?;
            let alpha = maybe_dropout(tape, alpha, mode)?;
            let gathered = tape.gather_rows(wh, ctx.edges.src_arc())?;
            let weighted = tape.mul_col_broadcast(gathered, alpha)?;
            outputs.push(tape.scatter_sum(weighted, &ctx.edges, ctx.num_nodes)?);
        }
        if last {
            let mut acc = outputs[0];
            for &o in &outputs[1..] {
                acc = tape.add(acc, o)?;
            }
            Ok(tape.scale(acc, 1.0 / self.heads.len() as f64))
        } else {
            let cat = tape.concat_cols(&outputs)?;
            Ok(tape.elu(cat))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::DenseMatrix;
    use rand::SeedableRng;

    fn edges(src: Vec<usize>, dst: Vec<usize>) -> EdgeIndex {
        let n = src.len();
        EdgeIndex::new(src, dst, vec![0; n]).unwrap()
    }

    #[test]
    fn identical_neighbors_get_uniform_attention() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        let mut store = ParamStore::new();
        let layer = GatLayer::new(&mut store, 2, 3, 2, 0.2, &mut rng, "gat0");
        let mut tape = Tape::new();
        // nodes 1 and 2 share features; both point at node 0, which also
        // self-loops so every node is covered.
        let h = tape.constant(
            DenseMatrix::from_vec(3, 2, vec![0.3, -0.1, 1.0, 2.0, 1.0, 2.0]).unwrap(),
        );
        let e = edges(vec![1, 2, 0, 1, 2], vec![0, 0, 0, 1, 2]);
        let alphas = layer.attention_scores(&mut tape, &store, h, &e).unwrap();
        for a in alphas {
            let v = tape.value(a);
            // edges 0 and 1 carry the same source features into node 0.
            assert!((v.get(0, 0) - v.get(1, 0)).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_sums_to_one_per_destination() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(6);
        let mut store = ParamStore::new();
        let layer = GatLayer::new(&mut store, 3, 4, 3, 0.1, &mut rng, "gat0");
        let mut tape = Tape::new();
        let h = tape.constant(DenseMatrix::xavier_uniform(4, 3, &mut rng));
        let e = edges(
            vec![0, 1, 2, 3, 1, 2, 0, 1, 2, 3],
            vec![0, 0, 0, 0, 1, 1, 2, 2, 3, 3],
        );
        let alphas = layer.attention_scores(&mut tape, &store, h, &e).unwrap();
        for a in alphas {
            let v = tape.value(a);
            let mut sums = vec![0.0; 4];
            for (k, (_, d, _)) in e.iter().enumerate() {
                sums[d] += v.get(k, 0);
            }
            for s in sums {
                assert!((s - 1.0).abs() < 1e-9, "group sum {s}");
            }
        }
    }

    #[test]
    fn zero_in_edge_node_is_contract_error() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        let mut store = ParamStore::new();
        let layer = GatLayer::new(&mut store, 2, 2, 1, 0.2, &mut rng, "gat0");
        let mut tape = Tape::new();
        let h = tape.constant(DenseMatrix::zeros(3, 2));
        let e = edges(vec![0, 1], vec![0, 1]); // node 2 uncovered
        let err = layer
            .attention_scores(&mut tape, &store, h, &e)
            .unwrap_err()
            .to_string();
        assert!(err.contains("add_self_loops"), "{err}");
    }

    #[test]
    fn hand_computed_three_node_case() {
        // W = I, a_dst = (1, 0), a_src = 0: score(e) depends only on the
        // destination, so attention over each destination group is uniform.
        let mut rng = rand::rngs::StdRng::seed_from_u64(8);
        let mut store = ParamStore::new();
        let layer = GatLayer::new(&mut store, 2, 2, 1, 0.2, &mut rng, "gat0");
        *store.value_mut(layer.heads[0].weight) = DenseMatrix::identity(2);
        *store.value_mut(layer.heads[0].attn_dst) =
            DenseMatrix::from_vec(2, 1, vec![1.0, 0.0]).unwrap();
        *store.value_mut(layer.heads[0].attn_src) = DenseMatrix::zeros(2, 1);
        let mut tape = Tape::new();
        let h = tape.constant(
            DenseMatrix::from_vec(3, 2, vec![0.0, 5.0, 1.0, -1.0, 2.0, 0.5]).unwrap(),
        );
        // two in-edges for node 0 (from 1 and 2) plus self loops everywhere
        let e = edges(vec![1, 2, 0, 1, 2], vec![0, 0, 0, 1, 2]);
        let alphas = layer.attention_scores(&mut tape, &store, h, &e).unwrap();
        let v = tape.value(alphas[0]);
        // node 0 has three in-edges with equal scores -> 1/3 each
        assert!((v.get(0, 0) - 1.0 / 3.0).abs() < 1e-12);
        assert!((v.get(1, 0) - 1.0 / 3.0).abs() < 1e-12);
        assert!((v.get(2, 0) - 1.0 / 3.0).abs() < 1e-12);
        // single-edge groups are exactly one
        assert!((v.get(3, 0) - 1.0).abs() < 1e-12);
        assert!((v.get(4, 0) - 1.0).abs() < 1e-12);
    }
}
