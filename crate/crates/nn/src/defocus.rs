//! Batched defocus layer. The forward pass is the core channel-to-space
//! permutation; the backward pass is its exact inverse, applied to the
//! incoming gradient.

use ndarray::{Array4, Axis};

use crate::Scalar;

pub struct Defocus<F> {
    pub ratio: usize,
    _marker: std::marker::PhantomData<F>,
}

impl<F: Scalar> Defocus<F> {
    pub fn new(ratio: usize) -> Self {
        assert!(ratio >= 2, "defocus ratio must be at least 2");
        Self {
            ratio,
            _marker: std::marker::PhantomData,
        }
    }

    pub fn out_shape(&self, c: usize, h: usize, w: usize) -> (usize, usize, usize) {
        let r2 = self.ratio * self.ratio;
        assert!(c % r2 == 0, "defocus channels {c} not divisible by {r2}");
        (c / r2, h * self.ratio, w * self.ratio)
    }

    pub fn forward(&self, x: &Array4<F>) -> Array4<F> {
        let (batch, c, h, w) = x.dim();
        let (co, ho, wo) = self.out_shape(c, h, w);
        let mut y = Array4::<F>::zeros((batch, co, ho, wo));
        for b in 0..batch {
            let out = gop_core::defocus::defocus(&x.index_axis(Axis(0), b), self.ratio)
                .expect("shape checked");
            y.index_axis_mut(Axis(0), b).assign(&out);
        }
        y
    }

    pub fn backward(&self, gy: &Array4<F>) -> Array4<F> {
        let (batch, c, h, w) = gy.dim();
        let r2 = self.ratio * self.ratio;
        let mut gx = Array4::<F>::zeros((batch, c * r2, h / self.ratio, w / self.ratio));
        for b in 0..batch {
            let back = gop_core::defocus::focus(&gy.index_axis(Axis(0), b), self.ratio)
                .expect("shape checked");
            gx.index_axis_mut(Axis(0), b).assign(&back);
        }
        gx
    }
}
