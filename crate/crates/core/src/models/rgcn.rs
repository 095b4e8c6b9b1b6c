use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::HeteroGraph;
use crate::tensor::{DenseMatrix, EdgeIndex, ParamId, ParamStore, Tape, Value};

struct RelSlice {
    edges: EdgeIndex,
    /// 1 / |N_i^r| per edge, keyed by the edge's destination.
    coef: DenseMatrix,
}

/// Per-relation edge slices with mean-normalizer coefficients. Built on the
/// raw (non-self-looped) graph; the self contribution is a separate weight.
pub struct RgcnGraphCtx {
    per_rel: Vec<Option<RelSlice>>,
    pub num_nodes: usize,
}

impl RgcnGraphCtx {
    pub fn new(graph: &HeteroGraph) -> Result<Self> {
        if graph.has_self_loops() {
            return Err(Error::contract(
                "RgcnGraphCtx expects the raw graph; the self term is built in",
            ));
        }
        let n = graph.node_count();
        let num_rel = graph.edge_types().len();
        let mut per_rel = Vec::with_capacity(num_rel);
        for r in 0..num_rel {
            let mut src = Vec::new();
            let mut dst = Vec::new();
            for (s, d, t) in graph.edges().iter() {
                if t == r {
                    src.push(s);
                    dst.push(d);
                }
            }
            if src.is_empty() {
                per_rel.push(None);
                continue;
            }
            let mut indeg = vec![0usize; n];
            for &d in &dst {
                indeg[d] += 1;
            }
            let coef: Vec<f64> = dst.iter().map(|&d| 1.0 / indeg[d] as f64).collect();
            let m = src.len();
            per_rel.push(Some(RelSlice {
                edges: EdgeIndex::new(src, dst, vec![r; m])?,
                coef: DenseMatrix::column(coef),
            }));
        }
        Ok(RgcnGraphCtx { per_rel, num_nodes: n })
    }

    pub fn num_relations(&self) -> usize {
        self.per_rel.len()
    }
}

/// Relational graph convolution: per-relation mean aggregation under
/// relation-specific weights plus a self weight. Relations absent at a node
/// contribute zero.
pub struct RgcnLayer {
    w_rel: Vec<ParamId>,
    w_self: ParamId,
}

impl RgcnLayer {
    pub fn new(
        store: &mut ParamStore,
        d_in: usize,
        d_out: usize,
        num_relations: usize,
        rng: &mut impl Rng,
        name: &str,
    ) -> Self {
        let w_rel = (0..num_relations)
            .map(|r| store.add_xavier(format!("{name}.rel{r}.weight"), d_in, d_out, rng))
            .collect();
        let w_self = store.add_xavier(format!("{name}.self.weight"), d_in, d_out, rng);
        RgcnLayer { w_rel, w_self }
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        h: Value,
        ctx: &RgcnGraphCtx,
        activate: bool,
    ) -> Result<Value> {
        if self.w_rel.len() != ctx.per_rel.len() {
            return Err(Error::contract(format!(
                "rgcn layer has {} relation weights but the graph has {} relations",
                self.w_rel.len(),
                ctx.per_rel.len()
            )));
        }
        let w0 = tape.param(store, self.w_self);
        let mut acc = tape.matmul(h, w0)?;
        for (wr, slice) in self.w_rel.iter().zip(&ctx.per_rel) {
            let Some(slice) = slice else { continue };
            let w = tape.param(store, *wr);
            let hw = tape.matmul(h, w)?;
            let msg = tape.gather_rows(hw, slice.edges.src_arc())?;
            let coef = tape.constant(slice.coef.clone());
            let scaled = tape.mul_col_broadcast(msg, coef)?;
            let agg = tape.scatter_sum(scaled, &slice.edges, ctx.num_nodes)?;
            acc = tape.add(acc, agg)?;
        }
        Ok(if activate { tape.relu(acc) } else { acc })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EdgeTypeInfo, NodeTypeInfo};
    use rand::SeedableRng;
    use std::collections::BTreeMap;

    fn graph(n: usize, edges: Vec<(usize, usize, usize)>, num_rel: usize) -> HeteroGraph {
        let (src, (dst, et)): (Vec<_>, (Vec<_>, Vec<_>)) = edges
            .into_iter()
            .map(|(s, d, t)| (s, (d, t)))
            .unzip();
        HeteroGraph::new(
            vec![0; n],
            vec![NodeTypeInfo {
                name: "n".into(),
                count: n,
                feature_dim: 0,
            }],
            (0..num_rel)
                .map(|r| EdgeTypeInfo {
                    name: format!("r{r}"),
                    src_type: Some(0),
                    dst_type: Some(0),
                    reverse: None,
                })
                .collect(),
            EdgeIndex::new(src, dst, et).unwrap(),
            BTreeMap::new(),
            None,
            None,
        )
        .unwrap()
    }

    #[test]
    fn no_in_edges_gives_self_transform_only() {
        let g = graph(2, vec![(0, 1, 0)], 1);
        let ctx = RgcnGraphCtx::new(&g).unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(2);
        let mut store = ParamStore::new();
        let layer = RgcnLayer::new(&mut store, 2, 2, 1, &mut rng, "rgcn0");
        let mut tape = Tape::new();
        let h = tape.constant(DenseMatrix::from_vec(2, 2, vec![1.0, -1.0, 0.0, 2.0]).unwrap());
        let out = layer.forward(&mut tape, &store, h, &ctx, false).unwrap();
        // node 0 has no in-edges: out = x W0 exactly.
        let x0 = DenseMatrix::from_vec(1, 2, vec![1.0, -1.0]).unwrap();
        let expect = x0.matmul(store.value(layer.w_self)).unwrap();
        assert_eq!(tape.value(out).row(0), expect.row(0));
    }

    #[test]
    fn uniform_neighbors_give_mean_message() {
        // nodes 1 and 2 both feed node 0 through relation 0; with identical
        // features the aggregation equals a single message (mean).
        let g = graph(3, vec![(1, 0, 0), (2, 0, 0)], 1);
        let ctx = RgcnGraphCtx::new(&g).unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let layer = RgcnLayer::new(&mut store, 2, 2, 1, &mut rng, "rgcn0");
        let mut tape = Tape::new();
        let h = tape.constant(
            DenseMatrix::from_vec(3, 2, vec![0.0, 0.0, 1.5, -0.5, 1.5, -0.5]).unwrap(),
        );
        let out = layer.forward(&mut tape, &store, h, &ctx, false).unwrap();
        let xn = DenseMatrix::from_vec(1, 2, vec![1.5, -0.5]).unwrap();
        let expect = xn.matmul(store.value(layer.w_rel[0])).unwrap();
        let got = tape.value(out).row(0).to_vec();
        for (g, e) in got.iter().zip(expect.row(0)) {
            assert!((g - e).abs() < 1e-12);
        }
    }
}
