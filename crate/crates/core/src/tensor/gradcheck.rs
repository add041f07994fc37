//! Finite-difference gradient checking.
//!
//! Used by the crate's own tests and available to downstream code that adds
//! operations on top of the tape. The comparison metric is the elementwise
//! relative error `|analytic - numeric| / max(1, |analytic|)`, which behaves
//! like an absolute tolerance near zero and a relative one for large
//! gradients.

/// Central-difference gradient of `f` at `point` with step `eps`.
pub fn numerical_grad<F>(mut f: F, point: &[f64], eps: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = point.to_vec();
    let mut grad = vec![0.0; point.len()];
    for i in 0..point.len() {
        let orig = probe[i];
        probe[i] = orig + eps;
        let hi = f(&probe);
        probe[i] = orig - eps;
        let lo = f(&probe);
        probe[i] = orig;
        grad[i] = (hi - lo) / (2.0 * eps);
    }
    grad
}

/// Largest elementwise relative error between an analytic gradient and a
/// numeric one: `max_i |a_i - n_i| / max(1, |a_i|)`.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// Convenience wrapper: numeric gradient of `f` at `point` compared against
/// `analytic`, returning the largest relative error.
pub fn check_gradient<F>(f: F, point: &[f64], analytic: &[f64], eps: f64) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    max_rel_error(analytic, &numerical_grad(f, point, eps))
}
