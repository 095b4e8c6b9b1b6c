use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::edges::EdgeIndex;
use crate::tensor::matrix::DenseMatrix;
use crate::tensor::optim::{ParamId, ParamStore};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Value(usize);

#[derive(Debug)]
enum Op {
    Leaf {
        param: Option<ParamId>,
    },
    MatMul {
        a: Value,
        b: Value,
    },
    Add {
        a: Value,
        b: Value,
    },
    Sub {
        a: Value,
        b: Value,
    },
    MulElem {
        a: Value,
        b: Value,
    },
    Scale {
        x: Value,
        factor: f64,
    },
    /// x (R x C) + row (1 x C) broadcast over rows.
    AddRowBroadcast {
        x: Value,
        row: Value,
    },
    /// x (R x C) * col (R x 1) broadcast over columns.
    MulColBroadcast {
        x: Value,
        col: Value,
    },
    /// x (R x C) * row (1 x C) broadcast over rows.
    MulRowBroadcast {
        x: Value,
        row: Value,
    },
    Relu {
        x: Value,
    },
    LeakyRelu {
        x: Value,
        slope: f64,
    },
    Elu {
        x: Value,
    },
    Sigmoid {
        x: Value,
    },
    Softplus {
        x: Value,
    },
    GatherRows {
        x: Value,
        idx: Arc<Vec<usize>>,
    },
    ScatterSumRows {
        x: Value,
        dst: Arc<Vec<usize>>,
    },
    SegmentSoftmax {
        x: Value,
        dst: Arc<Vec<usize>>,
        order: Arc<Vec<usize>>,
    },
    ConcatCols {
        parts: Vec<Value>,
    },
    RowSum {
        x: Value,
    },
    SumAll {
        x: Value,
    },
    MeanAll {
        x: Value,
    },
    L2NormalizeRows {
        x: Value,
    },
    SoftmaxCrossEntropy {
        logits: Value,
        labels: Arc<Vec<usize>>,
    },
    BceWithLogits {
        logits: Value,
        targets: Arc<DenseMatrix>,
    },
    Dropout {
        x: Value,
        mask: Arc<Vec<f64>>,
    },
}

struct Node {
    op: Op,
    value: DenseMatrix,
    needs_grad: bool,
}

/// Gradients collected by [`Tape::backward`], keyed by trainable leaf.
#[derive(Debug, Default)]
pub struct Gradients {
    by_param: BTreeMap<ParamId, DenseMatrix>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&DenseMatrix> {
        self.by_param.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &DenseMatrix)> {
        self.by_param.iter().map(|(k, v)| (*k, v))
    }

    pub fn len(&self) -> usize {
        self.by_param.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_param.is_empty()
    }
}

/// Reverse-mode differentiation tape over dense matrices.
///
/// Forward values are computed eagerly as ops are recorded; nodes are stored
/// in topological order by construction, so the backward pass is a single
/// reverse sweep visiting each node exactly once.
pub struct Tape {
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Value) -> &DenseMatrix {
        &self.nodes[v.0].value
    }

    fn shape(&self, v: Value) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    fn needs_grad(&self, v: Value) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, op: Op, value: DenseMatrix, needs_grad: bool) -> Value {
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        Value(self.nodes.len() - 1)
    }

    /// Record a constant (no gradient flows into it).
    pub fn constant(&mut self, m: DenseMatrix) -> Value {
        self.push(Op::Leaf { param: None }, m, false)
    }

    /// Record a trainable leaf backed by a parameter in `store`.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Value {
        self.push(
            Op::Leaf { param: Some(id) },
            store.value(id).clone(),
            true,
        )
    }

    fn shape_error(&self, op: &'static str, a: Value, b: Value) -> Error {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        Error::Shape {
            op,
            lhs_rows: ar,
            lhs_cols: ac,
            rhs_rows: br,
            rhs_cols: bc,
        }
    }

    pub fn matmul(&mut self, a: Value, b: Value) -> Result<Value> {
        let out = self.value(a).matmul(self.value(b))?;
        let ng = self.needs_grad(a) || self.needs_grad(b);
        Ok(self.push(Op::MatMul { a, b }, out, ng))
    }

    pub fn add(&mut self, a: Value, b: Value) -> Result<Value> {
        if self.shape(a) != self.shape(b) {
            return Err(self.shape_error("add", a, b));
        }
        let mut out = self.value(a).clone();
        out.add_scaled(self.value(b), 1.0);
        let ng = self.needs_grad(a) || self.needs_grad(b);
        Ok(self.push(Op::Add { a, b }, out, ng))
    }

    pub fn sub(&mut self, a: Value, b: Value) -> Result<Value> {
        if self.shape(a) != self.shape(b) {
            return Err(self.shape_error("sub", a, b));
        }
        let mut out = self.value(a).clone();
        out.add_scaled(self.value(b), -1.0);
        let ng = self.needs_grad(a) || self.needs_grad(b);
        Ok(self.push(Op::Sub { a, b }, out, ng))
    }

    pub fn mul_elem(&mut self, a: Value, b: Value) -> Result<Value> {
        if self.shape(a) != self.shape(b) {
            return Err(self.shape_error("mul_elem", a, b));
        }
        let (r, c) = self.shape(a);
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let out = DenseMatrix::from_vec(r, c, data)?;
        let ng = self.needs_grad(a) || self.needs_grad(b);
        Ok(self.push(Op::MulElem { a, b }, out, ng))
    }

    pub fn scale(&mut self, x: Value, factor: f64) -> Value {
        let out = self.value(x).map(|v| v * factor);
        let ng = self.needs_grad(x);
        self.push(Op::Scale { x, factor }, out, ng)
    }

    pub fn add_row_broadcast(&mut self, x: Value, row: Value) -> Result<Value> {
        let (_, c) = self.shape(x);
        if self.shape(row) != (1, c) {
            return Err(self.shape_error("add_row_broadcast", x, row));
        }
        let mut out = self.value(x).clone();
        let rdata: Vec<f64> = self.value(row).data().to_vec();
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(&rdata) {
                *o += b;
            }
        }
        let ng = self.needs_grad(x) || self.needs_grad(row);
        Ok(self.push(Op::AddRowBroadcast { x, row }, out, ng))
    }

    pub fn mul_col_broadcast(&mut self, x: Value, col: Value) -> Result<Value> {
        let (r, _) = self.shape(x);
        if self.shape(col) != (r, 1) {
            return Err(self.shape_error("mul_col_broadcast", x, col));
        }
        let mut out = self.value(x).clone();
        let cdata: Vec<f64> = self.value(col).data().to_vec();
        for (i, &f) in cdata.iter().enumerate() {
            for o in out.row_mut(i) {
                *o *= f;
            }
        }
        let ng = self.needs_grad(x) || self.needs_grad(col);
        Ok(self.push(Op::MulColBroadcast { x, col }, out, ng))
    }

    pub fn mul_row_broadcast(&mut self, x: Value, row: Value) -> Result<Value> {
        let (_, c) = self.shape(x);
        if self.shape(row) != (1, c) {
            return Err(self.shape_error("mul_row_broadcast", x, row));
        }
        let mut out = self.value(x).clone();
        let rdata: Vec<f64> = self.value(row).data().to_vec();
        for r in 0..out.rows() {
            for (o, f) in out.row_mut(r).iter_mut().zip(&rdata) {
                *o *= f;
            }
        }
        let ng = self.needs_grad(x) || self.needs_grad(row);
        Ok(self.push(Op::MulRowBroadcast { x, row }, out, ng))
    }

    pub fn relu(&mut self, x: Value) -> Value {
        let out = self.value(x).map(|v| v.max(0.0));
        let ng = self.needs_grad(x);
        self.push(Op::Relu { x }, out, ng)
    }

    pub fn leaky_relu(&mut self, x: Value, slope: f64) -> Value {
        let out = self.value(x).map(|v| if v > 0.0 { v } else { slope * v });
        let ng = self.needs_grad(x);
        self.push(Op::LeakyRelu { x, slope }, out, ng)
    }

    pub fn elu(&mut self, x: Value) -> Value {
        let out = self.value(x).map(|v| if v > 0.0 { v } else { v.exp_m1() });
        let ng = self.needs_grad(x);
        self.push(Op::Elu { x }, out, ng)
    }

    pub fn sigmoid(&mut self, x: Value) -> Value {
        let out = self.value(x).map(sigmoid);
        let ng = self.needs_grad(x);
        self.push(Op::Sigmoid { x }, out, ng)
    }

    /// ln(1 + e^x), numerically stable for large |x|.
    pub fn softplus(&mut self, x: Value) -> Value {
        let out = self.value(x).map(softplus);
        let ng = self.needs_grad(x);
        self.push(Op::Softplus { x }, out, ng)
    }

    /// Select rows of `x` by index; rows may repeat.
    pub fn gather_rows(&mut self, x: Value, idx: Arc<Vec<usize>>) -> Result<Value> {
        let (r, c) = self.shape(x);
        let mut out = DenseMatrix::zeros(idx.len(), c);
        for (k, &i) in idx.iter().enumerate() {
            if i >= r {
                return Err(Error::Index {
                    op: "gather_rows",
                    index: i,
                    bound: r,
                });
            }
            out.row_mut(k).copy_from_slice(self.value(x).row(i));
        }
        let ng = self.needs_grad(x);
        Ok(self.push(Op::GatherRows { x, idx }, out, ng))
    }

    /// Sum per-edge message rows into destination node rows. Row `i` of the
    /// output is the sum of message rows whose destination is `i`; nodes with
    /// no incoming edge get zero rows. Accumulation follows the stable
    /// sort-by-destination order so the reduction is deterministic.
    pub fn scatter_sum(&mut self, messages: Value, edges: &EdgeIndex, num_nodes: usize) -> Result<Value> {
        if self.shape(messages).0 != edges.len() {
            return Err(Error::contract(format!(
                "scatter_sum: {} message rows for {} edges",
                self.shape(messages).0,
                edges.len()
            )));
        }
        self.scatter_sum_rows(messages, edges.dst_arc(), edges.order_by_dst(), num_nodes)
    }

    pub fn scatter_sum_rows(
        &mut self,
        x: Value,
        dst: Arc<Vec<usize>>,
        order: Arc<Vec<usize>>,
        num_rows: usize,
    ) -> Result<Value> {
        let (r, c) = self.shape(x);
        if dst.len() != r {
            return Err(Error::contract(format!(
                "scatter_sum: {} destinations for {} rows",
                dst.len(),
                r
            )));
        }
        if let Some(&bad) = dst.iter().find(|&&d| d >= num_rows) {
            return Err(Error::Index {
                op: "scatter_sum",
                index: bad,
                bound: num_rows,
            });
        }
        let mut out = DenseMatrix::zeros(num_rows, c);
        for &e in order.iter() {
            for (o, v) in out.row_mut(dst[e]).iter_mut().zip(self.value(x).row(e)) {
                *o += v;
            }
        }
        let ng = self.needs_grad(x);
        Ok(self.push(Op::ScatterSumRows { x, dst }, out, ng))
    }

    /// Exp-normalize per-edge scores within each destination group. Each
    /// group's outputs sum to one; the per-group max is subtracted before
    /// exponentiation for stability. Empty input yields empty output.
    pub fn segment_softmax(&mut self, scores: Value, edges: &EdgeIndex) -> Result<Value> {
        if self.shape(scores) != (edges.len(), 1) {
            let (r, c) = self.shape(scores);
            return Err(Error::contract(format!(
                "segment_softmax: scores must be {}x1, got {r}x{c}",
                edges.len()
            )));
        }
        self.segment_softmax_rows(scores, edges.dst_arc(), edges.order_by_dst())
    }

    pub fn segment_softmax_rows(
        &mut self,
        x: Value,
        dst: Arc<Vec<usize>>,
        order: Arc<Vec<usize>>,
    ) -> Result<Value> {
        let (r, c) = self.shape(x);
        if c != 1 || dst.len() != r {
            return Err(Error::contract(format!(
                "segment_softmax: expected {}x1 scores, got {r}x{c}",
                dst.len()
            )));
        }
        let mut out = DenseMatrix::zeros(r, 1);
        segment_softmax_forward(self.value(x).data(), &dst, &order, out.data_mut());
        let ng = self.needs_grad(x);
        Ok(self.push(Op::SegmentSoftmax { x, dst, order }, out, ng))
    }

    /// Concatenate along columns; all parts must agree on row count.
    pub fn concat_cols(&mut self, parts: &[Value]) -> Result<Value> {
        if parts.is_empty() {
            return Err(Error::contract("concat_cols: no inputs"));
        }
        let rows = self.shape(parts[0]).0;
        let total: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        for &p in parts {
            if self.shape(p).0 != rows {
                return Err(self.shape_error("concat_cols", parts[0], p));
            }
        }
        let mut out = DenseMatrix::zeros(rows, total);
        let mut offset = 0;
        for &p in parts {
            let pc = self.shape(p).1;
            for r in 0..rows {
                out.row_mut(r)[offset..offset + pc].copy_from_slice(self.value(p).row(r));
            }
            offset += pc;
        }
        let ng = parts.iter().any(|&p| self.needs_grad(p));
        Ok(self.push(
            Op::ConcatCols {
                parts: parts.to_vec(),
            },
            out,
            ng,
        ))
    }

    /// Per-row sum, producing an R x 1 column.
    pub fn row_sum(&mut self, x: Value) -> Value {
        let (r, _) = self.shape(x);
        let mut out = DenseMatrix::zeros(r, 1);
        for i in 0..r {
            out.set(i, 0, self.value(x).row(i).iter().sum());
        }
        let ng = self.needs_grad(x);
        self.push(Op::RowSum { x }, out, ng)
    }

    pub fn sum_all(&mut self, x: Value) -> Value {
        let total: f64 = self.value(x).data().iter().sum();
        let ng = self.needs_grad(x);
        self.push(Op::SumAll { x }, DenseMatrix::scalar(total), ng)
    }

    pub fn mean_all(&mut self, x: Value) -> Value {
        let n = self.value(x).len().max(1);
        let total: f64 = self.value(x).data().iter().sum();
        let ng = self.needs_grad(x);
        self.push(Op::MeanAll { x }, DenseMatrix::scalar(total / n as f64), ng)
    }

    /// Normalize every row to unit Euclidean norm. Zero-norm rows fall back
    /// to a 1e-12 denominator and emit a warning.
    pub fn l2_normalize_rows(&mut self, x: Value) -> Value {
        let (r, c) = self.shape(x);
        let mut out = DenseMatrix::zeros(r, c);
        for i in 0..r {
            let row = self.value(x).row(i);
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            let denom = if norm > 0.0 {
                norm
            } else {
                log::warn!("l2_normalize_rows: zero-norm row {i}, using epsilon denominator");
                1e-12
            };
            for (o, v) in out.row_mut(i).iter_mut().zip(row) {
                *o = v / denom;
            }
        }
        let ng = self.needs_grad(x);
        self.push(Op::L2NormalizeRows { x }, out, ng)
    }

    /// Mean softmax cross-entropy over rows against integer class labels.
    pub fn softmax_cross_entropy(&mut self, logits: Value, labels: Arc<Vec<usize>>) -> Result<Value> {
        let (r, c) = self.shape(logits);
        if labels.len() != r {
            return Err(Error::contract(format!(
                "softmax_cross_entropy: {} labels for {} rows",
                labels.len(),
                r
            )));
        }
        let mut total = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            if y >= c {
                return Err(Error::Index {
                    op: "softmax_cross_entropy",
                    index: y,
                    bound: c,
                });
            }
            let row = self.value(logits).row(i);
            let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - row[y];
        }
        let ng = self.needs_grad(logits);
        Ok(self.push(
            Op::SoftmaxCrossEntropy { logits, labels },
            DenseMatrix::scalar(total / r.max(1) as f64),
            ng,
        ))
    }

    /// Mean binary cross-entropy with logits against a 0/1 target matrix.
    pub fn bce_with_logits(&mut self, logits: Value, targets: Arc<DenseMatrix>) -> Result<Value> {
        if self.shape(logits) != targets.shape() {
            let (r, c) = self.shape(logits);
            return Err(Error::Shape {
                op: "bce_with_logits",
                lhs_rows: r,
                lhs_cols: c,
                rhs_rows: targets.rows(),
                rhs_cols: targets.cols(),
            });
        }
        let n = targets.len().max(1) as f64;
        let mut total = 0.0;
        for (&z, &t) in self.value(logits).data().iter().zip(targets.data()) {
            // max(z,0) - z*t + ln(1 + e^{-|z|})
            total += z.max(0.0) - z * t + (-z.abs()).exp().ln_1p();
        }
        let ng = self.needs_grad(logits);
        Ok(self.push(
            Op::BceWithLogits { logits, targets },
            DenseMatrix::scalar(total / n),
            ng,
        ))
    }

    /// Inverted-scaling dropout: kept entries are scaled by 1/(1-rate) so the
    /// expectation is unchanged; the mask comes from the caller's seeded rng.
    pub fn dropout(&mut self, x: Value, rate: f64, rng: &mut impl Rng) -> Result<Value> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::contract(format!(
                "dropout rate must be in [0,1), got {rate}"
            )));
        }
        if rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 - rate;
        let mask: Arc<Vec<f64>> = Arc::new(
            (0..self.value(x).len())
                .map(|_| {
                    if rng.gen::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                })
                .collect(),
        );
        let (r, c) = self.shape(x);
        let data = self
            .value(x)
            .data()
            .iter()
            .zip(mask.iter())
            .map(|(v, m)| v * m)
            .collect();
        let out = DenseMatrix::from_vec(r, c, data)?;
        let ng = self.needs_grad(x);
        Ok(self.push(Op::Dropout { x, mask }, out, ng))
    }

    /// Reverse sweep from a scalar loss. Returns the gradient of the loss
    /// with respect to every trainable leaf reached by the sweep.
    pub fn backward(&self, loss: Value) -> Result<Gradients> {
        if !self.value(loss).is_scalar() {
            let (r, c) = self.shape(loss);
            return Err(Error::contract(format!(
                "backward: loss must be a 1x1 scalar, got {r}x{c}"
            )));
        }
        let mut grads: Vec<Option<DenseMatrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(DenseMatrix::scalar(1.0));

        for i in (0..self.nodes.len()).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backward_op(i, &g, &mut grads);
            // Leaves keep their accumulated gradient for collection below.
            if matches!(self.nodes[i].op, Op::Leaf { .. }) {
                grads[i] = Some(g);
            }
        }

        let mut out = Gradients::default();
        for (i, node) in self.nodes.iter().enumerate() {
            if let Op::Leaf { param: Some(id) } = node.op {
                let g = grads[i]
                    .take()
                    .unwrap_or_else(|| DenseMatrix::zeros(node.value.rows(), node.value.cols()));
                match out.by_param.entry(id) {
                    std::collections::btree_map::Entry::Vacant(e) => {
                        e.insert(g);
                    }
                    std::collections::btree_map::Entry::Occupied(mut e) => {
                        e.get_mut().add_scaled(&g, 1.0);
                    }
                }
            }
        }
        Ok(out)
    }

    fn accumulate(
        &self,
        grads: &mut [Option<DenseMatrix>],
        target: Value,
        update: impl FnOnce(&Tape, &mut DenseMatrix),
    ) {
        if !self.needs_grad(target) {
            return;
        }
        let (r, c) = self.shape(target);
        let slot = grads[target.0].get_or_insert_with(|| DenseMatrix::zeros(r, c));
        update(self, slot)
    }

    fn backward_op(&self, i: usize, g: &DenseMatrix, grads: &mut [Option<DenseMatrix>]) {
        match &self.nodes[i].op {
            Op::Leaf { .. } => {}
            Op::MatMul { a, b } => {
                let (a, b) = (*a, *b);
                if self.needs_grad(a) {
                    let db = self.value(b).transpose();
                    let da = g.matmul(&db).expect("shapes fixed at forward");
                    self.accumulate(grads, a, |_, slot| slot.add_scaled(&da, 1.0));
                }
                if self.needs_grad(b) {
                    let at = self.value(a).transpose();
                    let dbv = at.matmul(g).expect("shapes fixed at forward");
                    self.accumulate(grads, b, |_, slot| slot.add_scaled(&dbv, 1.0));
                }
            }
            Op::Add { a, b } => {
                let (a, b) = (*a, *b);
                self.accumulate(grads, a, |_, slot| slot.add_scaled(g, 1.0));
                self.accumulate(grads, b, |_, slot| slot.add_scaled(g, 1.0));
            }
            Op::Sub { a, b } => {
                let (a, b) = (*a, *b);
                self.accumulate(grads, a, |_, slot| slot.add_scaled(g, 1.0));
                self.accumulate(grads, b, |_, slot| slot.add_scaled(g, -1.0));
            }
            Op::MulElem { a, b } => {
                let (a, b) = (*a, *b);
                if self.needs_grad(a) {
                    self.accumulate(grads, a, |t, slot| {
                        for ((s, gv), bv) in slot
                            .data_mut()
                            .iter_mut()
                            .zip(g.data())
                            .zip(t.value(b).data())
                        {
                            *s += gv * bv;
                        }
                    });
                }
                if self.needs_grad(b) {
                    self.accumulate(grads, b, |t, slot| {
                        for ((s, gv), av) in slot
                            .data_mut()
                            .iter_mut()
                            .zip(g.data())
                            .zip(t.value(a).data())
                        {
                            *s += gv * av;
                        }
                    });
                }
            }
            Op::Scale { x, factor } => {
                let (x, factor) = (*x, *factor);
                self.accumulate(grads, x, |_, slot| slot.add_scaled(g, factor));
            }
            Op::AddRowBroadcast { x, row } => {
                let (x, row) = (*x, *row);
                self.accumulate(grads, x, |_, slot| slot.add_scaled(g, 1.0));
                self.accumulate(grads, row, |_, slot| {
                    for r in 0..g.rows() {
                        for (s, gv) in slot.data_mut().iter_mut().zip(g.row(r)) {
                            *s += gv;
                        }
                    }
                });
            }
            Op::MulColBroadcast { x, col } => {
                let (x, col) = (*x, *col);
                if self.needs_grad(x) {
                    self.accumulate(grads, x, |t, slot| {
                        for r in 0..g.rows() {
                            let f = t.value(col).get(r, 0);
                            for (s, gv) in slot.row_mut(r).iter_mut().zip(g.row(r)) {
                                *s += gv * f;
                            }
                        }
                    });
                }
                if self.needs_grad(col) {
                    self.accumulate(grads, col, |t, slot| {
                        for r in 0..g.rows() {
                            let dot: f64 = g
                                .row(r)
                                .iter()
                                .zip(t.value(x).row(r))
                                .map(|(gv, xv)| gv * xv)
                                .sum();
                            slot.data_mut()[r] += dot;
                        }
                    });
                }
            }
            Op::MulRowBroadcast { x, row } => {
                let (x, row) = (*x, *row);
                if self.needs_grad(x) {
                    self.accumulate(grads, x, |t, slot| {
                        for r in 0..g.rows() {
                            for ((s, gv), f) in slot
                                .row_mut(r)
                                .iter_mut()
                                .zip(g.row(r))
                                .zip(t.value(row).data())
                            {
                                *s += gv * f;
                            }
                        }
                    });
                }
                if self.needs_grad(row) {
                    self.accumulate(grads, row, |t, slot| {
                        for r in 0..g.rows() {
                            for ((s, gv), xv) in slot
                                .data_mut()
                                .iter_mut()
                                .zip(g.row(r))
                                .zip(t.value(x).row(r))
                            {
                                *s += gv * xv;
                            }
                        }
                    });
                }
            }
            Op::Relu { x } => {
                let x = *x;
                self.accumulate(grads, x, |t, slot| {
                    for ((s, gv), xv) in slot
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(t.value(x).data())
                    {
                        if *xv > 0.0 {
                            *s += gv;
                        }
                    }
                });
            }
            Op::LeakyRelu { x, slope } => {
                let (x, slope) = (*x, *slope);
                self.accumulate(grads, x, |t, slot| {
                    for ((s, gv), xv) in slot
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(t.value(x).data())
                    {
                        *s += gv * if *xv > 0.0 { 1.0 } else { slope };
                    }
                });
            }
            Op::Elu { x } => {
                let x = *x;
                let y = &self.nodes[i].value;
                self.accumulate(grads, x, |t, slot| {
                    for (((s, gv), xv), yv) in slot
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(t.value(x).data())
                        .zip(y.data())
                    {
                        *s += gv * if *xv > 0.0 { 1.0 } else { yv + 1.0 };
                    }
                });
            }
            Op::Sigmoid { x } => {
                let x = *x;
                let y = &self.nodes[i].value;
                self.accumulate(grads, x, |_, slot| {
                    for ((s, gv), yv) in slot.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                        *s += gv * yv * (1.0 - yv);
                    }
                });
            }
            Op::Softplus { x } => {
                let x = *x;
                self.accumulate(grads, x, |t, slot| {
                    for ((s, gv), xv) in slot
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(t.value(x).data())
                    {
                        *s += gv * sigmoid(*xv);
                    }
                });
            }
            Op::GatherRows { x, idx } => {
                let x = *x;
                let idx = Arc::clone(idx);
                self.accumulate(grads, x, |_, slot| {
                    for (k, &src) in idx.iter().enumerate() {
                        for (s, gv) in slot.row_mut(src).iter_mut().zip(g.row(k)) {
                            *s += gv;
                        }
                    }
                });
            }
            Op::ScatterSumRows { x, dst, .. } => {
                let x = *x;
                let dst = Arc::clone(dst);
                self.accumulate(grads, x, |_, slot| {
                    for (e, &d) in dst.iter().enumerate() {
                        for (s, gv) in slot.row_mut(e).iter_mut().zip(g.row(d)) {
                            *s += gv;
                        }
                    }
                });
            }
            Op::SegmentSoftmax { x, dst, order } => {
                let x = *x;
                let y = &self.nodes[i].value;
                let (dst, order) = (Arc::clone(dst), Arc::clone(order));
                self.accumulate(grads, x, |_, slot| {
                    // Per group: dx_e = y_e * (g_e - sum_j g_j * y_j)
                    let mut start = 0;
                    while start < order.len() {
                        let group_dst = dst[order[start]];
                        let mut end = start;
                        while end < order.len() && dst[order[end]] == group_dst {
                            end += 1;
                        }
                        let inner: f64 = order[start..end]
                            .iter()
                            .map(|&e| g.data()[e] * y.data()[e])
                            .sum();
                        for &e in &order[start..end] {
                            slot.data_mut()[e] += y.data()[e] * (g.data()[e] - inner);
                        }
                        start = end;
                    }
                });
            }
            Op::ConcatCols { parts } => {
                let parts = parts.clone();
                let mut offset = 0;
                for p in parts {
                    let pc = self.shape(p).1;
                    self.accumulate(grads, p, |_, slot| {
                        for r in 0..g.rows() {
                            for (s, gv) in slot
                                .row_mut(r)
                                .iter_mut()
                                .zip(&g.row(r)[offset..offset + pc])
                            {
                                *s += gv;
                            }
                        }
                    });
                    offset += pc;
                }
            }
            Op::RowSum { x } => {
                let x = *x;
                self.accumulate(grads, x, |_, slot| {
                    for r in 0..slot.rows() {
                        let gv = g.get(r, 0);
                        for s in slot.row_mut(r) {
                            *s += gv;
                        }
                    }
                });
            }
            Op::SumAll { x } => {
                let x = *x;
                let gv = g.scalar_value();
                self.accumulate(grads, x, |_, slot| {
                    for s in slot.data_mut() {
                        *s += gv;
                    }
                });
            }
            Op::MeanAll { x } => {
                let x = *x;
                let n = self.value(x).len().max(1) as f64;
                let gv = g.scalar_value() / n;
                self.accumulate(grads, x, |_, slot| {
                    for s in slot.data_mut() {
                        *s += gv;
                    }
                });
            }
            Op::L2NormalizeRows { x } => {
                let x = *x;
                let y = &self.nodes[i].value;
                self.accumulate(grads, x, |t, slot| {
                    for r in 0..slot.rows() {
                        let xin = t.value(x).row(r);
                        let norm = xin.iter().map(|v| v * v).sum::<f64>().sqrt();
                        let denom = if norm > 0.0 { norm } else { 1e-12 };
                        let yr = y.row(r);
                        let dot: f64 = yr.iter().zip(g.row(r)).map(|(yv, gv)| yv * gv).sum();
                        for ((s, gv), yv) in slot.row_mut(r).iter_mut().zip(g.row(r)).zip(yr) {
                            *s += (gv - yv * dot) / denom;
                        }
                    }
                });
            }
            Op::SoftmaxCrossEntropy { logits, labels } => {
                let logits = *logits;
                let labels = Arc::clone(labels);
                let gv = g.scalar_value();
                self.accumulate(grads, logits, |t, slot| {
                    let rows = slot.rows() as f64;
                    for (r, &y) in labels.iter().enumerate() {
                        let row = t.value(logits).row(r);
                        let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                        let denom: f64 = row.iter().map(|v| (v - max).exp()).sum();
                        for (c, (s, &z)) in slot.row_mut(r).iter_mut().zip(row).enumerate() {
                            let p = (z - max).exp() / denom;
                            let target = if c == y { 1.0 } else { 0.0 };
                            *s += gv * (p - target) / rows;
                        }
                    }
                });
            }
            Op::BceWithLogits { logits, targets } => {
                let logits = *logits;
                let targets = Arc::clone(targets);
                let gv = g.scalar_value();
                self.accumulate(grads, logits, |t, slot| {
                    let n = targets.len().max(1) as f64;
                    for ((s, &z), &tv) in slot
                        .data_mut()
                        .iter_mut()
                        .zip(t.value(logits).data())
                        .zip(targets.data())
                    {
                        *s += gv * (sigmoid(z) - tv) / n;
                    }
                });
            }
            Op::Dropout { x, mask } => {
                let x = *x;
                let mask = Arc::clone(mask);
                self.accumulate(grads, x, |_, slot| {
                    for ((s, gv), m) in slot.data_mut().iter_mut().zip(g.data()).zip(mask.iter()) {
                        *s += gv * m;
                    }
                });
            }
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn segment_softmax_forward(scores: &[f64], dst: &[usize], order: &[usize], out: &mut [f64]) {
    let mut start = 0;
    while start < order.len() {
        let group_dst = dst[order[start]];
        let mut end = start;
        while end < order.len() && dst[order[end]] == group_dst {
            end += 1;
        }
        let group = &order[start..end];
        let max = group
            .iter()
            .map(|&e| scores[e])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for &e in group {
            let v = (scores[e] - max).exp();
            out[e] = v;
            denom += v;
        }
        for &e in group {
            out[e] /= denom;
        }
        start = end;
    }
}
