use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::matrix::DenseMatrix;
use crate::tensor::tape::Gradients;

/// Handle to a parameter in a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

struct Param {
    name: String,
    value: DenseMatrix,
    // Adam first/second moments.
    m: DenseMatrix,
    v: DenseMatrix,
}

/// Owns every trainable parameter of a model plus its optimizer state.
#[derive(Default)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: DenseMatrix) -> ParamId {
        let (r, c) = value.shape();
        self.params.push(Param {
            name: name.into(),
            value,
            m: DenseMatrix::zeros(r, c),
            v: DenseMatrix::zeros(r, c),
        });
        ParamId(self.params.len() - 1)
    }

    pub fn add_xavier(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        rng: &mut impl Rng,
    ) -> ParamId {
        self.add(name, DenseMatrix::xavier_uniform(rows, cols, rng))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn value(&self, id: ParamId) -> &DenseMatrix {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut DenseMatrix {
        &mut self.params[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn total_len(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    /// Copy of every parameter value, for early-stopping restore.
    pub fn snapshot(&self) -> Vec<DenseMatrix> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    pub fn restore(&mut self, snapshot: &[DenseMatrix]) {
        assert_eq!(snapshot.len(), self.params.len());
        for (p, s) in self.params.iter_mut().zip(snapshot) {
            p.value = s.clone();
        }
    }
}

/// Adam with decoupled weight decay. Decay is applied as
/// `p <- p - lr * wd * p` before the moment update.
pub struct Adam {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
}

impl Adam {
    pub fn new(lr: f64, weight_decay: f64) -> Result<Self> {
        if lr <= 0.0 {
            return Err(Error::contract(format!("learning rate must be > 0, got {lr}")));
        }
        if weight_decay < 0.0 {
            return Err(Error::contract(format!(
                "weight decay must be >= 0, got {weight_decay}"
            )));
        }
        Ok(Adam {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over every parameter in the store. Parameters without an
    /// entry in `grads` are treated as zero-gradient (decay still applies).
    /// A non-finite gradient aborts the whole step before touching anything.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) -> Result<()> {
        for (id, g) in grads.iter() {
            if !g.all_finite() {
                return Err(Error::numeric(format!(
                    "non-finite gradient for parameter '{}'",
                    store.name(id)
                )));
            }
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (idx, p) in store.params.iter_mut().enumerate() {
            let zero;
            let g = match grads.get(ParamId(idx)) {
                Some(g) => g,
                None => {
                    zero = DenseMatrix::zeros(p.value.rows(), p.value.cols());
                    &zero
                }
            };
            if self.weight_decay > 0.0 {
                let factor = 1.0 - self.lr * self.weight_decay;
                p.value.scale_in_place(factor);
            }
            for i in 0..p.value.len() {
                let gi = g.data()[i];
                let m = self.beta1 * p.m.data()[i] + (1.0 - self.beta1) * gi;
                let v = self.beta2 * p.v.data()[i] + (1.0 - self.beta2) * gi * gi;
                p.m.data_mut()[i] = m;
                p.v.data_mut()[i] = v;
                let m_hat = m / bc1;
                let v_hat = v / bc2;
                p.value.data_mut()[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
