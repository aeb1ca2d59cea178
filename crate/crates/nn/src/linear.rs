//! Fully-connected layer.

use ndarray::{Array2, Axis};
use rand_chacha::ChaCha8Rng;

use crate::param::{join, HasParams, Param};
use crate::{math, Scalar};

/// `y = x W^T + b` with `x: (B, In)`, `W: (Out, In)`.
pub struct Linear<F> {
    pub weight: Param<F>,
    pub bias: Param<F>,
    pub in_features: usize,
    pub out_features: usize,
    cache: Vec<Array2<F>>,
}

impl<F: Scalar> Linear<F> {
    pub fn new(in_features: usize, out_features: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            weight: Param::new(math::he_normal(&[out_features, in_features], in_features, rng)),
            bias: Param::new(ndarray::ArrayD::zeros(vec![out_features])),
            in_features,
            out_features,
            cache: Vec::new(),
        }
    }

    pub fn forward(&mut self, x: &Array2<F>, train: bool) -> Array2<F> {
        assert_eq!(x.ncols(), self.in_features, "linear input width");
        let w = self
            .weight
            .data
            .view()
            .into_shape_with_order((self.out_features, self.in_features))
            .unwrap();
        let b = self.bias.data.view().into_shape_with_order(self.out_features).unwrap();
        let mut y = x.dot(&w.t());
        for mut row in y.rows_mut() {
            row += &b;
        }
        if train {
            self.cache.push(x.clone());
        }
        y
    }

    pub fn backward(&mut self, gy: &Array2<F>) -> Array2<F> {
        let x = self.cache.pop().expect("linear backward");
        let w = self
            .weight
            .data
            .view()
            .into_shape_with_order((self.out_features, self.in_features))
            .unwrap()
            .to_owned();
        let gw = gy.t().dot(&x);
        self.weight.grad += &gw.into_dyn();
        self.bias.grad += &gy.sum_axis(Axis(0)).into_dyn();
        gy.dot(&w)
    }
}

impl<F: Scalar> HasParams<F> for Linear<F> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param<F>)) {
        f(join(prefix, "weight"), &mut self.weight);
        f(join(prefix, "bias"), &mut self.bias);
    }
}
