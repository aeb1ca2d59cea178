//! Finite-difference gradient checking helpers.

use ndarray::ArrayD;

use crate::Scalar;

/// Central-difference gradient of a scalar function at `x`.
pub fn finite_diff<F: Scalar>(
    x: &ArrayD<F>,
    eps: f64,
    mut f: impl FnMut(&ArrayD<F>) -> F,
) -> ArrayD<F> {
    let mut probe = x.clone();
    let mut grad = ArrayD::<F>::zeros(x.raw_dim());
    let eps_f = F::cast(eps);
    let two_eps = F::cast(2.0 * eps);
    for idx in 0..x.len() {
        let orig = probe.as_slice().unwrap()[idx];
        probe.as_slice_mut().unwrap()[idx] = orig + eps_f;
        let plus = f(&probe);
        probe.as_slice_mut().unwrap()[idx] = orig - eps_f;
        let minus = f(&probe);
        probe.as_slice_mut().unwrap()[idx] = orig;
        grad.as_slice_mut().unwrap()[idx] = (plus - minus) / two_eps;
    }
    grad
}

/// Largest elementwise `|a - b|`.
pub fn max_abs_diff<F: Scalar>(a: &ArrayD<F>, b: &ArrayD<F>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (*x - *y).abs().to_f64_lossy())
        .fold(0.0, f64::max)
}

/// Largest elementwise `|a - b| / max(1, |a|, |b|)`.
pub fn max_rel_diff<F: Scalar>(a: &ArrayD<F>, b: &ArrayD<F>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| {
            let (x, y) = (x.to_f64_lossy(), y.to_f64_lossy());
            (x - y).abs() / x.abs().max(y.abs()).max(1.0)
        })
        .fold(0.0, f64::max)
}
