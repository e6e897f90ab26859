use crate::error::{Error, Result};

/// Central differences `(L(p + h·e_j) − L(p − h·e_j)) / 2h` for every coordinate.
pub fn finite_diff_grad<F>(mut loss_fn: F, params: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::domain(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    let mut probe = params.to_vec();
    let mut grad = Vec::with_capacity(params.len());
    for j in 0..params.len() {
        let orig = probe[j];
        probe[j] = orig + step;
        let up = loss_fn(&probe);
        probe[j] = orig - step;
        let down = loss_fn(&probe);
        probe[j] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::Numeric(format!(
                "loss is non-finite when perturbing coordinate {j}"
            )));
        }
        grad.push((up - down) / (2.0 * step));
    }
    Ok(grad)
}
