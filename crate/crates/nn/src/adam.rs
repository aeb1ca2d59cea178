//! Adam optimizer keyed by parameter name.

use std::collections::BTreeMap;

use ndarray::ArrayD;

use crate::{HasParams, Scalar};

pub struct Adam<F> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: BTreeMap<String, ArrayD<F>>,
    pub v: BTreeMap<String, ArrayD<F>>,
}

impl<F: Scalar> Adam<F> {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn step<M: HasParams<F>>(&mut self, model: &mut M) {
        self.t += 1;
        let lr = F::cast(self.lr);
        let b1 = F::cast(self.beta1);
        let b2 = F::cast(self.beta2);
        let eps = F::cast(self.eps);
        let one = F::one();
        let bias1 = F::cast(1.0 - self.beta1.powi(self.t as i32));
        let bias2 = F::cast(1.0 - self.beta2.powi(self.t as i32));
        let m_map = &mut self.m;
        let v_map = &mut self.v;
        model.visit_params("", &mut |name, p| {
            let m = m_map
                .entry(name.clone())
                .or_insert_with(|| ArrayD::zeros(p.data.raw_dim()));
            let v = v_map
                .entry(name)
                .or_insert_with(|| ArrayD::zeros(p.data.raw_dim()));
            ndarray::Zip::from(&mut p.data)
                .and(&p.grad)
                .and(m)
                .and(v)
                .for_each(|w, &g, m, v| {
                    *m = b1 * *m + (one - b1) * g;
                    *v = b2 * *v + (one - b2) * g * g;
                    let m_hat = *m / bias1;
                    let v_hat = *v / bias2;
                    *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
                });
        });
    }
}
