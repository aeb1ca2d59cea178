use ndarray::ArrayD;

use crate::Scalar;

/// A trainable tensor together with its accumulated gradient.
#[derive(Debug, Clone)]
pub struct Param<F> {
    pub data: ArrayD<F>,
    pub grad: ArrayD<F>,
}

impl<F: Scalar> Param<F> {
    pub fn new(data: ArrayD<F>) -> Self {
        let grad = ArrayD::zeros(data.raw_dim());
        Self { data, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(F::zero());
    }
}

/// Walks a module tree's parameters and persistent buffers (running
/// statistics). Names are dot-joined with the caller's prefix, so the same
/// visitor drives the optimizer, checkpointing, and parameter counting.
pub trait HasParams<F: Scalar> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param<F>));

    fn visit_buffers(&mut self, _prefix: &str, _f: &mut dyn FnMut(String, &mut ArrayD<F>)) {}
}

/// Dot-joins a visitor prefix with a component name.
pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}
