//! Central finite differences, used as the gradient oracle in tests.

use alloc::vec::Vec;

/// Estimates `∇f(x)` coordinate by coordinate with step `h`:
/// `(f(x + h·eᵢ) − f(x − h·eᵢ)) / 2h`.
pub fn finite_diff_grad<F>(mut f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    assert!(h > 0.0, "finite difference step must be positive");
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = f(&probe);
        probe[i] = orig - h;
        let down = f(&probe);
        probe[i] = orig;
        grad.push((up - down) / (2.0 * h));
    }
    grad
}

/// Largest relative error between two gradient vectors, with an absolute
/// floor so that coordinates that are both ≈0 do not blow up the ratio.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| {
            crate::math::abs(a - n) / crate::math::abs(*a).max(crate::math::abs(*n)).max(floor)
        })
        .fold(0.0, f64::max)
}
