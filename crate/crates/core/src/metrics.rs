//! Benchmark metrics with brute-force-checkable semantics. Everything here
//! is a pure function over plain slices.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// Macro/Micro F1 for single-label predictions. Macro averages per-class F1
/// over all `num_classes` classes (a class absent from both predictions and
/// truth contributes zero); micro pools TP/FP/FN. The 0/0 convention for
/// precision and recall is zero.
pub fn macro_micro_f1_single(
    pred: &[usize],
    truth: &[usize],
    num_classes: usize,
) -> Result<(f64, f64)> {
    if pred.is_empty() || pred.len() != truth.len() {
        return Err(Error::contract(format!(
            "f1: prediction and truth lengths must match and be non-empty, got {} and {}",
            pred.len(),
            truth.len()
        )));
    }
    if num_classes == 0 {
        return Err(Error::contract("f1: need at least one class"));
    }
    let mut tp = vec![0usize; num_classes];
    let mut fp = vec![0usize; num_classes];
    let mut fne = vec![0usize; num_classes];
    for (&p, &t) in pred.iter().zip(truth) {
        if p >= num_classes || t >= num_classes {
            return Err(Error::Index {
                op: "f1",
                index: p.max(t),
                bound: num_classes,
            });
        }
        if p == t {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fne[t] += 1;
        }
    }
    Ok(f1_from_counts(&tp, &fp, &fne))
}

/// Macro/Micro F1 for multi-label predictions given 0.5-thresholded boolean
/// rows (one row per sample, one column per class).
pub fn macro_micro_f1_multi(pred: &[Vec<bool>], truth: &[Vec<bool>]) -> Result<(f64, f64)> {
    if pred.is_empty() || pred.len() != truth.len() {
        return Err(Error::contract(format!(
            "f1: prediction and truth lengths must match and be non-empty, got {} and {}",
            pred.len(),
            truth.len()
        )));
    }
    let num_classes = pred[0].len();
    if num_classes == 0 {
        return Err(Error::contract("f1: need at least one class"));
    }
    let mut tp = vec![0usize; num_classes];
    let mut fp = vec![0usize; num_classes];
    let mut fne = vec![0usize; num_classes];
    for (p_row, t_row) in pred.iter().zip(truth) {
        if p_row.len() != num_classes || t_row.len() != num_classes {
            return Err(Error::contract("f1: ragged class rows"));
        }
        for c in 0..num_classes {
            match (p_row[c], t_row[c]) {
                (true, true) => tp[c] += 1,
                (true, false) => fp[c] += 1,
                (false, true) => fne[c] += 1,
                (false, false) => {}
            }
        }
    }
    Ok(f1_from_counts(&tp, &fp, &fne))
}

fn f1_from_counts(tp: &[usize], fp: &[usize], fne: &[usize]) -> (f64, f64) {
    let per_class_f1 = |tp: usize, fp: usize, fne: usize| -> f64 {
        let denom = 2 * tp + fp + fne;
        if denom == 0 {
            0.0
        } else {
            2.0 * tp as f64 / denom as f64
        }
    };
    let macro_f1 = tp
        .iter()
        .zip(fp)
        .zip(fne)
        .map(|((&tp, &fp), &fne)| per_class_f1(tp, fp, fne))
        .sum::<f64>()
        / tp.len() as f64;
    let (tps, fps, fns) = (
        tp.iter().sum::<usize>(),
        fp.iter().sum::<usize>(),
        fne.iter().sum::<usize>(),
    );
    (macro_f1, per_class_f1(tps, fps, fns))
}

/// Probability that a random positive outranks a random negative, ties
/// counting one half (the rank-based Mann-Whitney form).
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::contract(format!(
            "roc_auc: scores and labels must match and be non-empty, got {} and {}",
            scores.len(),
            labels.len()
        )));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::contract(
            "roc_auc: need at least one positive and one negative label",
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    // average ranks over tie groups (ranks are 1-based)
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = ((i + 1 + j) as f64) / 2.0; // mean of ranks i+1..=j
        for &idx in &order[i..j] {
            if labels[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let p = positives as f64;
    let n = negatives as f64;
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

/// One head node's candidate tails, aligned score/label columns.
#[derive(Clone, Debug)]
pub struct RankedHead {
    pub scores: Vec<f64>,
    pub positive: Vec<bool>,
}

/// Mean reciprocal rank clustered by head: within each head, candidates are
/// ranked by descending score (ties broken by stable candidate order) and
/// the best-ranked positive's reciprocal rank is taken; heads are averaged.
pub fn mrr_by_head(heads: &[RankedHead]) -> Result<f64> {
    if heads.is_empty() {
        return Err(Error::contract("mrr_by_head: no head groups"));
    }
    let mut total = 0.0;
    for (i, head) in heads.iter().enumerate() {
        if head.scores.len() != head.positive.len() {
            return Err(Error::contract(format!(
                "mrr_by_head: head {i} has mismatched scores/labels"
            )));
        }
        if !head.positive.iter().any(|&p| p) {
            return Err(Error::contract(format!("mrr_by_head: head {i} has no positive")));
        }
        let mut order: Vec<usize> = (0..head.scores.len()).collect();
        // stable sort by descending score preserves candidate order on ties
        order.sort_by(|&a, &b| {
            head.scores[b]
                .partial_cmp(&head.scores[a])
                .expect("finite scores")
        });
        let best_rank = order
            .iter()
            .position(|&idx| head.positive[idx])
            .expect("checked positive");
        total += 1.0 / (best_rank + 1) as f64;
    }
    Ok(total / heads.len() as f64)
}

/// Mean over users of |top-k intersect relevant| / |relevant|. The
/// denominator is the full relevant count even when it exceeds k. Users
/// with an empty relevant set are skipped (count logged).
pub fn recall_at_k(
    ranked: &[Vec<usize>],
    relevant: &[BTreeSet<usize>],
    k: usize,
) -> Result<f64> {
    per_user_mean(ranked, relevant, k, |top, rel| {
        let hits = top.iter().filter(|i| rel.contains(i)).count();
        hits as f64 / rel.len() as f64
    })
}

/// Mean over users of DCG@k / IDCG@k with binary gains, discount
/// 1/log2(rank+1), ranks starting at one, and the ideal placing
/// min(|relevant|, k) hits first.
pub fn ndcg_at_k(ranked: &[Vec<usize>], relevant: &[BTreeSet<usize>], k: usize) -> Result<f64> {
    per_user_mean(ranked, relevant, k, |top, rel| {
        let dcg: f64 = top
            .iter()
            .enumerate()
            .filter(|(_, i)| rel.contains(i))
            .map(|(pos, _)| 1.0 / ((pos + 2) as f64).log2())
            .sum();
        let ideal: f64 = (0..rel.len().min(k))
            .map(|pos| 1.0 / ((pos + 2) as f64).log2())
            .sum();
        dcg / ideal
    })
}

fn per_user_mean(
    ranked: &[Vec<usize>],
    relevant: &[BTreeSet<usize>],
    k: usize,
    score: impl Fn(&[usize], &BTreeSet<usize>) -> f64,
) -> Result<f64> {
    if ranked.len() != relevant.len() || ranked.is_empty() {
        return Err(Error::contract(format!(
            "rank metric: rankings and relevant sets must match and be non-empty, got {} and {}",
            ranked.len(),
            relevant.len()
        )));
    }
    if k == 0 {
        return Err(Error::contract("rank metric: k must be positive"));
    }
    let mut total = 0.0;
    let mut counted = 0usize;
    let mut skipped = 0usize;
    for (r, rel) in ranked.iter().zip(relevant) {
        if rel.is_empty() {
            skipped += 1;
            continue;
        }
        let top = &r[..r.len().min(k)];
        total += score(top, rel);
        counted += 1;
    }
    if skipped > 0 {
        log::debug!("rank metric: skipped {skipped} users with empty relevant sets");
    }
    if counted == 0 {
        return Err(Error::contract("rank metric: every user had an empty relevant set"));
    }
    Ok(total / counted as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction_f1_is_one() {
        let (macro_f1, micro_f1) = macro_micro_f1_single(&[0, 1, 2, 1], &[0, 1, 2, 1], 3).unwrap();
        assert_eq!((macro_f1, micro_f1), (1.0, 1.0));
    }

    #[test]
    fn all_class0_half_truth_hand_count() {
        // 2 classes, all predicted class 0, truth half/half:
        // micro = accuracy = 0.5; macro = (2/3 + 0)/2 = 1/3.
        let pred = vec![0, 0, 0, 0];
        let truth = vec![0, 0, 1, 1];
        let (macro_f1, micro_f1) = macro_micro_f1_single(&pred, &truth, 2).unwrap();
        assert!((micro_f1 - 0.5).abs() < 1e-15);
        assert!((macro_f1 - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn macro_invariant_under_relabeling() {
        let pred = vec![0, 1, 2, 2, 1, 0, 0];
        let truth = vec![0, 2, 2, 1, 1, 0, 1];
        let (macro_a, _) = macro_micro_f1_single(&pred, &truth, 3).unwrap();
        // swap classes 0 and 2 everywhere
        let swap = |v: &[usize]| v.iter().map(|&c| [2, 1, 0][c]).collect::<Vec<_>>();
        let (macro_b, _) = macro_micro_f1_single(&swap(&pred), &swap(&truth), 3).unwrap();
        assert!((macro_a - macro_b).abs() < 1e-15);
    }

    #[test]
    fn perfectly_separated_auc_is_one() {
        let auc = roc_auc(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap();
        assert_eq!(auc, 1.0);
    }

    #[test]
    fn all_equal_scores_auc_is_half() {
        let auc = roc_auc(&[0.5; 6], &[true, false, true, false, false, true]).unwrap();
        assert!((auc - 0.5).abs() < 1e-15);
    }

    #[test]
    fn single_class_labels_rejected() {
        assert!(roc_auc(&[0.1, 0.2], &[true, true]).is_err());
    }

    #[test]
    fn mrr_rank_one_and_two() {
        let heads = vec![
            RankedHead {
                scores: vec![0.9, 0.1],
                positive: vec![true, false],
            },
            RankedHead {
                scores: vec![0.9, 0.1],
                positive: vec![false, true],
            },
        ];
        assert!((mrr_by_head(&heads[..1]).unwrap() - 1.0).abs() < 1e-15);
        assert!((mrr_by_head(&heads[1..]).unwrap() - 0.5).abs() < 1e-15);
        assert!((mrr_by_head(&heads).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn mrr_without_positive_is_error() {
        let heads = vec![RankedHead {
            scores: vec![0.3],
            positive: vec![false],
        }];
        assert!(mrr_by_head(&heads).is_err());
    }

    #[test]
    fn recall_all_relevant_in_topk() {
        let ranked = vec![vec![3, 1, 2]];
        let relevant = vec![[1, 3].into_iter().collect::<BTreeSet<_>>()];
        assert_eq!(recall_at_k(&ranked, &relevant, 20).unwrap(), 1.0);
    }

    #[test]
    fn recall_miss_is_zero() {
        let ranked = vec![vec![3, 1, 2]];
        let relevant = vec![[9].into_iter().collect::<BTreeSet<_>>()];
        assert_eq!(recall_at_k(&ranked, &relevant, 2).unwrap(), 0.0);
    }

    #[test]
    fn ndcg_single_relevant_rank_one() {
        let ranked = vec![vec![7, 1, 2]];
        let relevant = vec![[7].into_iter().collect::<BTreeSet<_>>()];
        assert_eq!(ndcg_at_k(&ranked, &relevant, 20).unwrap(), 1.0);
    }

    #[test]
    fn ndcg_single_relevant_rank_two() {
        let ranked = vec![vec![1, 7, 2]];
        let relevant = vec![[7].into_iter().collect::<BTreeSet<_>>()];
        let expect = 1.0 / 3.0_f64.log2();
        assert!((ndcg_at_k(&ranked, &relevant, 20).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn rank_metrics_monotone_transform_invariant() {
        let scores = vec![0.1, 0.7, 0.3, 0.5];
        let labels = vec![false, true, false, true];
        let transformed: Vec<f64> = scores.iter().map(|s| (s * 4.0_f64).exp()).collect();
        let a = roc_auc(&scores, &labels).unwrap();
        let b = roc_auc(&transformed, &labels).unwrap();
        assert!((a - b).abs() < 1e-15);
    }
}
