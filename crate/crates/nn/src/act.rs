//! Elementwise activations, generic over array dimension.

use ndarray::{Array, Dimension};

use crate::{math, Scalar};

/// Leaky ReLU; `slope = 0` gives plain ReLU.
pub struct LeakyRelu<F, D: Dimension> {
    pub slope: F,
    cache: Vec<Array<F, D>>,
}

impl<F: Scalar, D: Dimension> LeakyRelu<F, D> {
    pub fn new(slope: f64) -> Self {
        Self {
            slope: F::cast(slope),
            cache: Vec::new(),
        }
    }

    pub fn forward(&mut self, x: &Array<F, D>, train: bool) -> Array<F, D> {
        let slope = self.slope;
        // cache the per-element pass-through factor
        let factors = x.mapv(|v| if v > F::zero() { F::one() } else { slope });
        let y = x * &factors;
        if train {
            self.cache.push(factors);
        }
        y
    }

    pub fn backward(&mut self, gy: &Array<F, D>) -> Array<F, D> {
        let factors = self.cache.pop().expect("activation backward");
        gy * &factors
    }
}

pub struct Sigmoid<F, D: Dimension> {
    cache: Vec<Array<F, D>>,
}

impl<F: Scalar, D: Dimension> Sigmoid<F, D> {
    pub fn new() -> Self {
        Self { cache: Vec::new() }
    }

    pub fn forward(&mut self, x: &Array<F, D>, train: bool) -> Array<F, D> {
        let y = x.mapv(math::sigmoid);
        if train {
            self.cache.push(y.clone());
        }
        y
    }

    pub fn backward(&mut self, gy: &Array<F, D>) -> Array<F, D> {
        let y = self.cache.pop().expect("sigmoid backward");
        let one = F::one();
        let dydx = y.mapv(|v| v * (one - v));
        gy * &dydx
    }
}

impl<F: Scalar, D: Dimension> Default for Sigmoid<F, D> {
    fn default() -> Self {
        Self::new()
    }
}
