//! Numeric helpers shared across layers and losses.

use ndarray::ArrayD;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::Scalar;

/// He-normal initialization: `N(0, sqrt(2 / fan_in))`. Sampling happens in
/// f64 so f32 and f64 instantiations see the same stream.
pub fn he_normal<F: Scalar>(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> ArrayD<F> {
    let std = (2.0 / fan_in as f64).sqrt();
    let dist = Normal::new(0.0, std).expect("valid normal");
    ArrayD::from_shape_simple_fn(shape.to_vec(), || F::cast(dist.sample(rng)))
}

/// Uniform init in `[-bound, bound]`.
pub fn uniform<F: Scalar>(shape: &[usize], bound: f64, rng: &mut ChaCha8Rng) -> ArrayD<F> {
    ArrayD::from_shape_simple_fn(shape.to_vec(), || {
        F::cast(rng.random_range(-bound..bound))
    })
}

pub fn sigmoid<F: Scalar>(x: F) -> F {
    let one = F::one();
    if x >= F::zero() {
        one / (one + (-x).exp())
    } else {
        let e = x.exp();
        e / (one + e)
    }
}

/// Numerically stable binary cross-entropy on a logit. Returns
/// `(loss, dloss/dlogit)`; the gradient is `sigmoid(z) - y`.
pub fn bce_with_logit<F: Scalar>(z: F, y: F) -> (F, F) {
    // max(z, 0) - z*y + ln(1 + exp(-|z|))
    let loss = z.max(F::zero()) - z * y + (F::one() + (-z.abs()).exp()).ln();
    (loss, sigmoid(z) - y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_matches_naive_formula() {
        for &(z, y) in &[(0.0f64, 1.0), (2.5, 0.0), (-3.0, 1.0), (0.7, 0.3)] {
            let p: f64 = sigmoid(z);
            let naive = -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
            let (stable, grad) = bce_with_logit(z, y);
            assert!((stable - naive).abs() < 1e-12, "z={z} y={y}");
            assert!((grad - (p - y)).abs() < 1e-12);
        }
    }

    #[test]
    fn bce_survives_extreme_logits() {
        let (loss, _) = bce_with_logit(60.0f64, 1.0);
        assert!(loss >= 0.0 && loss < 1e-9);
        let (loss, _) = bce_with_logit(-60.0f64, 0.0);
        assert!(loss >= 0.0 && loss < 1e-9);
        let (loss, _) = bce_with_logit(-500.0f64, 1.0);
        assert!(loss.is_finite());
    }
}
