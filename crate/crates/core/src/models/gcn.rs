use rand::Rng;

use crate::error::Result;
use crate::graph::HeteroGraph;
use crate::tensor::{DenseMatrix, EdgeIndex, ParamId, ParamStore, Tape, Value};

/// Pre-computed propagation structure: the self-looped edge set together
/// with symmetric normalization coefficients 1/sqrt(deg(src) * deg(dst)),
/// where degrees count incoming edges on the self-looped graph. Fixed for a
/// given graph.
pub struct GcnGraphCtx {
    pub edges: EdgeIndex,
    pub coef: DenseMatrix,
    pub num_nodes: usize,
}

impl GcnGraphCtx {
    pub fn new(graph: &HeteroGraph) -> Self {
        let looped;
        let g = if graph.has_self_loops() {
            graph
        } else {
            looped = graph.add_self_loops();
            &looped
        };
        let edges = g.edges().clone();
        let n = g.node_count();
        let mut deg = vec![0usize; n];
        for &d in edges.dst() {
            deg[d] += 1;
        }
        let coef: Vec<f64> = edges
            .iter()
            .map(|(s, d, _)| 1.0 / ((deg[s] * deg[d]) as f64).sqrt())
            .collect();
        GcnGraphCtx {
            edges,
            coef: DenseMatrix::column(coef),
            num_nodes: n,
        }
    }
}

/// One graph convolution: propagate H W over the normalized self-looped
/// adjacency, ReLU on hidden layers, identity on the last.
pub struct GcnLayer {
    pub weight: ParamId,
}

impl GcnLayer {
    pub fn new(
        store: &mut ParamStore,
        d_in: usize,
        d_out: usize,
        rng: &mut impl Rng,
        name: &str,
    ) -> Self {
        GcnLayer {
            weight: store.add_xavier(format!("{name}.weight"), d_in, d_out, rng),
        }
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        h: Value,
        ctx: &GcnGraphCtx,
        activate: bool,
    ) -> Result<Value> {
        let w = tape.param(store, self.weight);
        let hw = tape.matmul(h, w)?;
        let msg = tape.gather_rows(hw, ctx.edges.src_arc())?;
        let coef = tape.constant(ctx.coef.clone());
        let scaled = tape.mul_col_broadcast(msg, coef)?;
        let agg = tape.scatter_sum(scaled, &ctx.edges, ctx.num_nodes)?;
        Ok(if activate { tape.relu(agg) } else { agg })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EdgeTypeInfo, NodeTypeInfo};
    use std::collections::BTreeMap;

    fn single_type_graph(n: usize, src: Vec<usize>, dst: Vec<usize>) -> HeteroGraph {
        let m = src.len();
        HeteroGraph::new(
            vec![0; n],
            vec![NodeTypeInfo {
                name: "n".into(),
                count: n,
                feature_dim: 0,
            }],
            vec![EdgeTypeInfo {
                name: "e".into(),
                src_type: Some(0),
                dst_type: Some(0),
                reverse: None,
            }],
            EdgeIndex::new(src, dst, vec![0; m]).unwrap(),
            BTreeMap::new(),
            None,
            None,
        )
        .unwrap()
    }

    #[test]
    fn single_node_relu_of_x() {
        use rand::SeedableRng;
        let g = single_type_graph(1, vec![], vec![]);
        let ctx = GcnGraphCtx::new(&g);
        let mut rng = rand::rngs::StdRng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let layer = GcnLayer::new(&mut store, 2, 2, &mut rng, "gcn0");
        *store.value_mut(layer.weight) = DenseMatrix::identity(2);
        let mut tape = Tape::new();
        let h = tape.constant(DenseMatrix::from_vec(1, 2, vec![3.0, -2.0]).unwrap());
        let out = layer.forward(&mut tape, &store, h, &ctx, true).unwrap();
        // A-hat = [1] for a lone self-looped node, so output = relu(x).
        assert_eq!(tape.value(out).row(0), &[3.0, 0.0]);
    }

    #[test]
    fn isolated_nodes_transform_independently() {
        use rand::SeedableRng;
        let g = single_type_graph(2, vec![], vec![]);
        let ctx = GcnGraphCtx::new(&g);
        let mut rng = rand::rngs::StdRng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let layer = GcnLayer::new(&mut store, 2, 2, &mut rng, "gcn0");
        let mut tape = Tape::new();
        let h = tape.constant(DenseMatrix::from_vec(2, 2, vec![1.0, 2.0, -1.0, 0.5]).unwrap());
        let out = layer.forward(&mut tape, &store, h, &ctx, true).unwrap();
        // Each row must equal relu(row * W) with no cross-talk.
        let w = store.value(layer.weight);
        for r in 0..2 {
            let x = DenseMatrix::from_vec(1, 2, tape.value(h).row(r).to_vec()).unwrap();
            let expect = x.matmul(w).unwrap().map(|v| v.max(0.0));
            assert_eq!(tape.value(out).row(r), expect.row(0));
        }
    }
}
