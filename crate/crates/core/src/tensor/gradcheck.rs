//! Central finite-difference gradient verification.
//!
//! The checker re-runs a caller-supplied forward pass with perturbed
//! parameter entries and compares the difference quotient against the tape
//! gradient. It never touches the backward implementation, so it serves as
//! an independent oracle for it.

use crate::error::{Error, Result};
use crate::tensor::optim::{ParamId, ParamStore};

/// Outcome of one parameter-entry comparison.
#[derive(Debug, Clone)]
pub struct GradMismatch {
    pub param: String,
    pub entry: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

/// Compare tape gradients against central finite differences for every
/// entry of every parameter in `store`.
///
/// `forward` must evaluate the loss from the current store contents and is
/// called 2N+1 times for N total parameter entries. Relative error uses
/// `|a - n| / max(|a|, |n|, 1)`. Returns the mismatches above `tol`.
pub fn check_gradients(
    store: &mut ParamStore,
    forward: &mut dyn FnMut(&ParamStore) -> Result<f64>,
    backward_grads: &dyn Fn(ParamId) -> Option<Vec<f64>>,
    step: f64,
    tol: f64,
) -> Result<Vec<GradMismatch>> {
    let ids: Vec<ParamId> = store.ids().collect();
    let mut mismatches = Vec::new();
    for id in ids {
        let analytic = backward_grads(id).ok_or_else(|| {
            Error::contract(format!("no gradient recorded for parameter '{}'", store.name(id)))
        })?;
        let n = store.value(id).len();
        if analytic.len() != n {
            return Err(Error::contract(format!(
                "gradient length {} != parameter length {} for '{}'",
                analytic.len(),
                n,
                store.name(id)
            )));
        }
        for entry in 0..n {
            let original = store.value(id).data()[entry];
            store.value_mut(id).data_mut()[entry] = original + step;
            let plus = forward(store)?;
            store.value_mut(id).data_mut()[entry] = original - step;
            let minus = forward(store)?;
            store.value_mut(id).data_mut()[entry] = original;
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic[entry];
            let rel_err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0);
            if rel_err > tol {
                mismatches.push(GradMismatch {
                    param: store.name(id).to_string(),
                    entry,
                    analytic: a,
                    numeric,
                    rel_err,
                });
            }
        }
    }
    Ok(mismatches)
}
