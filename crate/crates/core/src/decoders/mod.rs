//! Task heads and losses: classification, link scoring (dot / DistMult),
//! recommendation scoring with a frozen pretrained bias term, and the BPR
//! machinery.

pub mod bpr_mf;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{sigmoid, DenseMatrix, ParamId, ParamStore, Tape, Value};

pub use bpr_mf::{bpr_mf_pretrain, MfEmbeddings, MfTrainConfig};

/// Labels for one batch of nodes, aligned with the logit rows.
pub enum LabelBatch {
    Single(Arc<Vec<usize>>),
    /// Multi-hot 0/1 target matrix.
    Multi(Arc<DenseMatrix>),
}

/// Softmax cross-entropy for single-label rows, sigmoid binary
/// cross-entropy averaged over node x class for multi-label rows.
pub fn classification_loss(tape: &mut Tape, logits: Value, labels: &LabelBatch) -> Result<Value> {
    match labels {
        LabelBatch::Single(ids) => tape.softmax_cross_entropy(logits, Arc::clone(ids)),
        LabelBatch::Multi(targets) => tape.bce_with_logits(logits, Arc::clone(targets)),
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum DecoderKind {
    Dot,
    Distmult,
    /// Train both and keep the one with the better validation score.
    Auto,
}

/// Link scorer over encoder outputs. DistMult keeps one trainable diagonal
/// relation vector per target edge type, initialized to ones so it starts
/// exactly at the dot product.
pub enum LinkScorer {
    Dot,
    DistMult { relation: ParamId },
}

impl LinkScorer {
    pub fn new_dot() -> Self {
        LinkScorer::Dot
    }

    pub fn new_distmult(store: &mut ParamStore, dim: usize, etype_name: &str) -> Self {
        let relation = store.add(
            format!("distmult.{etype_name}"),
            DenseMatrix::filled(1, dim, 1.0),
        );
        LinkScorer::DistMult { relation }
    }

    /// Raw scores (one per pair) on the tape: `u . v` or `u . diag(R) v`.
    pub fn pair_logits(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        embeddings: Value,
        pairs: &[(usize, usize)],
    ) -> Result<Value> {
        let heads: Arc<Vec<usize>> = Arc::new(pairs.iter().map(|&(u, _)| u).collect());
        let tails: Arc<Vec<usize>> = Arc::new(pairs.iter().map(|&(_, v)| v).collect());
        let u = tape.gather_rows(embeddings, heads)?;
        let v = tape.gather_rows(embeddings, tails)?;
        let prod = tape.mul_elem(u, v)?;
        let prod = match self {
            LinkScorer::Dot => prod,
            LinkScorer::DistMult { relation } => {
                let r = tape.param(store, *relation);
                tape.mul_row_broadcast(prod, r)?
            }
        };
        Ok(tape.row_sum(prod))
    }
}

/// Raw dot product of two embedding rows; apply [`score_probability`] when
/// a probability is needed.
pub fn dot_score(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// Raw DistMult score `u . diag(r) v` with a diagonal relation vector.
pub fn distmult_score(u: &[f64], v: &[f64], relation: &[f64]) -> f64 {
    u.iter()
        .zip(v)
        .zip(relation)
        .map(|((a, b), r)| a * r * b)
        .sum()
}

pub fn score_probability(raw: f64) -> f64 {
    sigmoid(raw)
}

/// Recommendation scoring: encoder dot plus a frozen pretrained bias dot.
/// The bias tables are plain matrices, never registered as parameters, so
/// no gradient can reach them.
pub struct RecScorer {
    pub mf: MfEmbeddings,
    /// Maps a global node id to its row in the user/item bias table.
    user_row: std::collections::BTreeMap<usize, usize>,
    item_row: std::collections::BTreeMap<usize, usize>,
}

impl RecScorer {
    pub fn new(
        mf: MfEmbeddings,
        user_nodes: &[usize],
        item_nodes: &[usize],
    ) -> Result<Self> {
        if user_nodes.len() != mf.users.rows() || item_nodes.len() != mf.items.rows() {
            return Err(Error::contract(format!(
                "bias tables cover {}x{} users/items but the graph has {}x{}",
                mf.users.rows(),
                mf.items.rows(),
                user_nodes.len(),
                item_nodes.len()
            )));
        }
        Ok(RecScorer {
            mf,
            user_row: user_nodes.iter().enumerate().map(|(i, &v)| (v, i)).collect(),
            item_row: item_nodes.iter().enumerate().map(|(i, &v)| (v, i)).collect(),
        })
    }

    /// Frozen bias term `e_u . e_v` for one (user, item) global-id pair.
    pub fn bias(&self, u: usize, v: usize) -> Result<f64> {
        let ur = *self
            .user_row
            .get(&u)
            .ok_or_else(|| Error::contract(format!("no pretrained row for user node {u}")))?;
        let vr = *self
            .item_row
            .get(&v)
            .ok_or_else(|| Error::contract(format!("no pretrained row for item node {v}")))?;
        Ok(dot_score(self.mf.users.row(ur), self.mf.items.row(vr)))
    }

    /// Raw scores for pairs: encoder dot plus the constant bias column.
    pub fn pair_scores(
        &self,
        tape: &mut Tape,
        embeddings: Value,
        pairs: &[(usize, usize)],
    ) -> Result<Value> {
        let heads: Arc<Vec<usize>> = Arc::new(pairs.iter().map(|&(u, _)| u).collect());
        let tails: Arc<Vec<usize>> = Arc::new(pairs.iter().map(|&(_, v)| v).collect());
        let u = tape.gather_rows(embeddings, heads)?;
        let v = tape.gather_rows(embeddings, tails)?;
        let prod = tape.mul_elem(u, v)?;
        let dots = tape.row_sum(prod);
        let bias: Vec<f64> = pairs
            .iter()
            .map(|&(u, v)| self.bias(u, v))
            .collect::<Result<_>>()?;
        let bias = tape.constant(DenseMatrix::column(bias));
        tape.add(dots, bias)
    }
}

/// Bayesian personalized ranking: mean of `-log sigmoid(f_pos - f_neg)`
/// over aligned positive/negative score columns.
pub fn bpr_loss(tape: &mut Tape, f_pos: Value, f_neg: Value) -> Result<Value> {
    let diff = tape.sub(f_pos, f_neg)?;
    let neg_diff = tape.scale(diff, -1.0);
    let per_pair = tape.softplus(neg_diff);
    Ok(tape.mean_all(per_pair))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn one_hot_logits_near_zero_loss() {
        let mut tape = Tape::new();
        let mut logits = DenseMatrix::zeros(3, 4);
        for (r, &c) in [1usize, 0, 3].iter().enumerate() {
            logits.set(r, c, 10.0);
        }
        let l = tape.constant(logits);
        let loss = classification_loss(
            &mut tape,
            l,
            &LabelBatch::Single(Arc::new(vec![1, 0, 3])),
        )
        .unwrap();
        assert!(tape.value(loss).scalar_value() < 1e-3);
    }

    #[test]
    fn dot_and_distmult_agree_with_unit_relation() {
        let u = [0.3, -0.7, 0.2];
        let v = [1.0, 0.5, -0.4];
        let ones = [1.0, 1.0, 1.0];
        assert_eq!(dot_score(&u, &v), distmult_score(&u, &v, &ones));
    }

    #[test]
    fn zero_relation_gives_half_probability() {
        let u = [0.3, -0.7, 0.2];
        let v = [1.0, 0.5, -0.4];
        let zero = [0.0, 0.0, 0.0];
        assert_eq!(score_probability(distmult_score(&u, &v, &zero)), 0.5);
    }

    #[test]
    fn orthogonal_unit_vectors_probability_half() {
        let u = [1.0, 0.0];
        let v = [0.0, 1.0];
        assert_eq!(score_probability(dot_score(&u, &v)), 0.5);
    }

    #[test]
    fn equal_unit_vectors_probability() {
        let u = [1.0, 0.0];
        assert!((score_probability(dot_score(&u, &u)) - 0.7310585786300049).abs() < 1e-12);
    }

    #[test]
    fn distmult_logits_reduce_to_dot_with_ones() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(17);
        let mut store = ParamStore::new();
        let emb = DenseMatrix::xavier_uniform(5, 4, &mut rng);
        let pairs = vec![(0, 1), (2, 3), (4, 0)];
        let mut tape = Tape::new();
        let e = tape.constant(emb.clone());
        let dm = LinkScorer::new_distmult(&mut store, 4, "e");
        let dot = LinkScorer::new_dot();
        let a = dm.pair_logits(&mut tape, &store, e, &pairs).unwrap();
        let b = dot.pair_logits(&mut tape, &store, e, &pairs).unwrap();
        assert_eq!(tape.value(a).data(), tape.value(b).data());
    }

    #[test]
    fn bpr_equal_scores_is_ln_two() {
        let mut tape = Tape::new();
        let p = tape.constant(DenseMatrix::column(vec![0.3, -1.0]));
        let n = tape.constant(DenseMatrix::column(vec![0.3, -1.0]));
        let loss = bpr_loss(&mut tape, p, n).unwrap();
        assert!((tape.value(loss).scalar_value() - 2.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn bpr_large_margin_vanishes() {
        let mut tape = Tape::new();
        let p = tape.constant(DenseMatrix::column(vec![20.0]));
        let n = tape.constant(DenseMatrix::column(vec![0.0]));
        let loss = bpr_loss(&mut tape, p, n).unwrap();
        assert!(tape.value(loss).scalar_value() < 1e-8);
    }

    #[test]
    fn bpr_translation_invariance() {
        // dyadic values keep the shifted subtraction exact in f64
        let mut tape = Tape::new();
        let p1 = tape.constant(DenseMatrix::column(vec![0.5, 2.0]));
        let n1 = tape.constant(DenseMatrix::column(vec![-0.25, 1.0]));
        let p2 = tape.constant(DenseMatrix::column(vec![64.5, 66.0]));
        let n2 = tape.constant(DenseMatrix::column(vec![63.75, 65.0]));
        let a = bpr_loss(&mut tape, p1, n1).unwrap();
        let b = bpr_loss(&mut tape, p2, n2).unwrap();
        assert_eq!(tape.value(a).data(), tape.value(b).data());
    }

    #[test]
    fn bpr_gradient_pushes_scores_apart() {
        let mut store = ParamStore::new();
        let p = store.add("pos", DenseMatrix::column(vec![0.2]));
        let n = store.add("neg", DenseMatrix::column(vec![0.5]));
        let mut tape = Tape::new();
        let pv = tape.param(&store, p);
        let nv = tape.param(&store, n);
        let loss = bpr_loss(&mut tape, pv, nv).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert!(grads.get(p).unwrap().data()[0] < 0.0, "positive score must rise");
        assert!(grads.get(n).unwrap().data()[0] > 0.0, "negative score must fall");
    }
}
