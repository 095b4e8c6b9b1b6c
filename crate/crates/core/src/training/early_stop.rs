use crate::tensor::{DenseMatrix, ParamStore};

/// Validation-driven early stopping with exact best-epoch restoration.
/// A higher score is better; ties do not count as improvement. Training
/// stops once `patience` consecutive epochs fail to improve.
pub struct EarlyStop {
    patience: usize,
    best_score: f64,
    best_epoch: usize,
    since_improve: usize,
    snapshot: Option<Vec<DenseMatrix>>,
}

impl EarlyStop {
    pub fn new(patience: usize) -> Self {
        EarlyStop {
            patience,
            best_score: f64::NEG_INFINITY,
            best_epoch: 0,
            since_improve: 0,
            snapshot: None,
        }
    }

    /// Record this epoch's validation score; returns true when training
    /// should stop. Snapshots the store on improvement.
    pub fn observe(&mut self, epoch: usize, score: f64, store: &ParamStore) -> bool {
        if score > self.best_score {
            self.best_score = score;
            self.best_epoch = epoch;
            self.since_improve = 0;
            self.snapshot = Some(store.snapshot());
            false
        } else {
            self.since_improve += 1;
            self.since_improve >= self.patience.max(1)
        }
    }

    pub fn best_score(&self) -> f64 {
        self.best_score
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    /// Restore the best-epoch parameters exactly.
    pub fn restore(&self, store: &mut ParamStore) {
        if let Some(snap) = &self.snapshot {
            store.restore(snap);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patience_zero_stops_at_first_non_improvement() {
        let store = ParamStore::new();
        let mut es = EarlyStop::new(0);
        assert!(!es.observe(0, 0.5, &store));
        assert!(es.observe(1, 0.5, &store), "tie is not improvement");
    }

    #[test]
    fn restores_best_snapshot_bitwise() {
        let mut store = ParamStore::new();
        let w = store.add("w", DenseMatrix::scalar(1.0));
        let mut es = EarlyStop::new(5);
        es.observe(0, 0.9, &store);
        *store.value_mut(w) = DenseMatrix::scalar(123.0);
        es.observe(1, 0.1, &store);
        es.restore(&mut store);
        assert_eq!(store.value(w).scalar_value().to_bits(), 1.0_f64.to_bits());
        assert_eq!(es.best_epoch(), 0);
    }

    #[test]
    fn counts_consecutive_non_improvements() {
        let store = ParamStore::new();
        let mut es = EarlyStop::new(2);
        assert!(!es.observe(0, 0.5, &store));
        assert!(!es.observe(1, 0.4, &store));
        assert!(!es.observe(2, 0.6, &store), "improvement resets counter");
        assert!(!es.observe(3, 0.1, &store));
        assert!(es.observe(4, 0.1, &store));
    }
}
