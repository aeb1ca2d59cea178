//! Minimal CPU neural-network toolkit: convolutions, batch norm, pooling,
//! transposed convolutions, bilinear resize, and Adam, all with hand-written
//! backward passes.
//!
//! Layers cache what their backward pass needs on a stack, so a layer object
//! can run several forward passes per step (weight sharing) as long as the
//! backward calls happen in exact reverse order. Parameter gradients
//! accumulate across backward calls until [`zero_grad`] resets them.
//!
//! Everything is generic over [`Scalar`] so the training path runs in `f32`
//! while gradient-check tests instantiate the same code in `f64`.

pub mod act;
pub mod adam;
pub mod conv;
pub mod defocus;
pub mod gradcheck;
pub mod linear;
pub mod math;
pub mod norm;
pub mod param;
pub mod pool;
pub mod resize;
mod scalar;

pub use adam::Adam;
pub use param::{HasParams, Param};
pub use scalar::Scalar;

/// Resets accumulated gradients on every parameter of a module tree.
pub fn zero_grad<F: Scalar, M: HasParams<F>>(module: &mut M) {
    module.visit_params("", &mut |_, p| p.zero_grad());
}

/// Total number of trainable scalars in a module tree.
pub fn parameter_count<F: Scalar, M: HasParams<F>>(module: &mut M) -> usize {
    let mut n = 0;
    module.visit_params("", &mut |_, p| n += p.data.len());
    n
}
