use rand::seq::index::sample;
use rand::Rng;

use super::Params;
use crate::error::{NileError, Result};

/// All parameter values in [`Params::arrays`] order.
pub fn flatten<P: Params>(p: &P) -> Vec<f64> {
    p.arrays()
        .iter()
        .flat_map(|(_, _, a)| a.iter().copied())
        .collect()
}

/// Writes a flat vector back into `p` (inverse of [`flatten`]).
pub fn unflatten<P: Params>(p: &mut P, flat: &[f64]) {
    let mut off = 0;
    for a in p.arrays_mut() {
        let n = a.len();
        a.copy_from_slice(&flat[off..off + n]);
        off += n;
    }
    assert_eq!(off, flat.len(), "flat vector length mismatch");
}

/// Compares the analytic gradient returned by `loss_fn` with central finite
/// differences on `samples` randomly chosen coordinates (all of them when
/// `samples` ≥ the parameter count). Returns the worst relative error
/// `|a − n| / max(|a| + |n|, 1e-6)`.
pub fn grad_check<F, R>(
    mut loss_fn: F,
    params: &[f64],
    epsilon: f64,
    samples: usize,
    rng: &mut R,
) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    R: Rng,
{
    if epsilon.is_nan() || epsilon <= 0.0 || !epsilon.is_finite() {
        return Err(NileError::Config(format!(
            "grad_check epsilon must be positive, got {epsilon}"
        )));
    }
    let (loss, grad) = loss_fn(params)?;
    if !loss.is_finite() {
        return Err(NileError::Numeric(format!("loss is {loss}")));
    }
    if grad.len() != params.len() {
        return Err(NileError::Config(format!(
            "gradient has {} entries for {} parameters",
            grad.len(),
            params.len()
        )));
    }
    let idx: Vec<usize> = if samples >= params.len() {
        (0..params.len()).collect()
    } else {
        let mut v = sample(rng, params.len(), samples).into_vec();
        v.sort_unstable();
        v
    };
    let mut x = params.to_vec();
    let mut worst = 0.0f64;
    for i in idx {
        let orig = x[i];
        x[i] = orig + epsilon;
        let (lp, _) = loss_fn(&x)?;
        x[i] = orig - epsilon;
        let (lm, _) = loss_fn(&x)?;
        x[i] = orig;
        if !lp.is_finite() || !lm.is_finite() {
            return Err(NileError::Numeric("non-finite loss during probing".into()));
        }
        let numeric = (lp - lm) / (2.0 * epsilon);
        let rel = (grad[i] - numeric).abs() / (grad[i].abs() + numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    Ok(worst)
}
