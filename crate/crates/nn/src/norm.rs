//! Batch normalization over `(B, H, W)` per channel.

use ndarray::{Array1, Array4, ArrayD, Axis};

use crate::param::{join, HasParams, Param};
use crate::Scalar;

pub struct BatchNorm2d<F> {
    pub gamma: Param<F>,
    pub beta: Param<F>,
    pub running_mean: ArrayD<F>,
    pub running_var: ArrayD<F>,
    pub channels: usize,
    pub momentum: f64,
    pub eps: f64,
    cache: Vec<BnCache<F>>,
}

struct BnCache<F> {
    x_hat: Array4<F>,
    inv_std: Array1<F>,
}

impl<F: Scalar> BatchNorm2d<F> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Param::new(ArrayD::ones(vec![channels])),
            beta: Param::new(ArrayD::zeros(vec![channels])),
            running_mean: ArrayD::zeros(vec![channels]),
            running_var: ArrayD::ones(vec![channels]),
            channels,
            momentum: 0.1,
            eps: 1e-5,
            cache: Vec::new(),
        }
    }

    pub fn forward(&mut self, x: &Array4<F>, train: bool) -> Array4<F> {
        let (batch, c, h, w) = x.dim();
        assert_eq!(c, self.channels, "batchnorm channels");
        let n = (batch * h * w) as f64;
        let eps = F::cast(self.eps);
        let gamma = self.gamma.data.view().into_shape_with_order(c).unwrap().to_owned();
        let beta = self.beta.data.view().into_shape_with_order(c).unwrap().to_owned();

        if !train {
            let mut y = x.clone();
            for ch in 0..c {
                let mean = self.running_mean[[ch]];
                let inv = (self.running_var[[ch]] + eps).sqrt().recip();
                let (g, b) = (gamma[ch], beta[ch]);
                for bi in 0..batch {
                    y.index_axis_mut(Axis(0), bi)
                        .index_axis_mut(Axis(0), ch)
                        .mapv_inplace(|v| (v - mean) * inv * g + b);
                }
            }
            return y;
        }

        let mut mean = Array1::<F>::zeros(c);
        let mut var = Array1::<F>::zeros(c);
        for ch in 0..c {
            let mut sum = F::zero();
            let mut sq = F::zero();
            for bi in 0..batch {
                for v in x.index_axis(Axis(0), bi).index_axis(Axis(0), ch).iter() {
                    sum += *v;
                    sq += *v * *v;
                }
            }
            let m = sum / F::cast(n);
            mean[ch] = m;
            var[ch] = (sq / F::cast(n) - m * m).max(F::zero());
        }

        let mut x_hat = x.clone();
        let mut inv_std = Array1::<F>::zeros(c);
        for ch in 0..c {
            let inv = (var[ch] + eps).sqrt().recip();
            inv_std[ch] = inv;
            let m = mean[ch];
            for bi in 0..batch {
                x_hat
                    .index_axis_mut(Axis(0), bi)
                    .index_axis_mut(Axis(0), ch)
                    .mapv_inplace(|v| (v - m) * inv);
            }
        }

        let mom = F::cast(self.momentum);
        let one_m = F::one() - mom;
        for ch in 0..c {
            self.running_mean[[ch]] = one_m * self.running_mean[[ch]] + mom * mean[ch];
            self.running_var[[ch]] = one_m * self.running_var[[ch]] + mom * var[ch];
        }

        let mut y = x_hat.clone();
        for ch in 0..c {
            let (g, b) = (gamma[ch], beta[ch]);
            for bi in 0..batch {
                y.index_axis_mut(Axis(0), bi)
                    .index_axis_mut(Axis(0), ch)
                    .mapv_inplace(|v| v * g + b);
            }
        }
        self.cache.push(BnCache { x_hat, inv_std });
        y
    }

    /// Drops the most recent cache entry; for probing forwards whose
    /// backward will never run.
    pub fn discard_cache(&mut self) {
        self.cache.pop();
    }

    pub fn backward(&mut self, gy: &Array4<F>) -> Array4<F> {
        let BnCache { x_hat, inv_std } = self.cache.pop().expect("batchnorm backward");
        let (batch, c, h, w) = gy.dim();
        let n = F::cast((batch * h * w) as f64);
        let gamma = self.gamma.data.view().into_shape_with_order(c).unwrap().to_owned();

        let mut gx = Array4::<F>::zeros(gy.raw_dim());
        for ch in 0..c {
            let mut sum_gy = F::zero();
            let mut sum_gy_xhat = F::zero();
            for bi in 0..batch {
                let gyv = gy.index_axis(Axis(0), bi);
                let gyc = gyv.index_axis(Axis(0), ch);
                let xhv = x_hat.index_axis(Axis(0), bi);
                let xhc = xhv.index_axis(Axis(0), ch);
                for (g, xh) in gyc.iter().zip(xhc.iter()) {
                    sum_gy += *g;
                    sum_gy_xhat += *g * *xh;
                }
            }
            self.beta.grad[[ch]] += sum_gy;
            self.gamma.grad[[ch]] += sum_gy_xhat;

            let scale = gamma[ch] * inv_std[ch] / n;
            for bi in 0..batch {
                let gyv = gy.index_axis(Axis(0), bi);
                let gyc = gyv.index_axis(Axis(0), ch);
                let xhv = x_hat.index_axis(Axis(0), bi);
                let xhc = xhv.index_axis(Axis(0), ch);
                let mut gxv = gx.index_axis_mut(Axis(0), bi);
                let mut gxc = gxv.index_axis_mut(Axis(0), ch);
                for ((out, g), xh) in gxc.iter_mut().zip(gyc.iter()).zip(xhc.iter()) {
                    *out = scale * (n * *g - sum_gy - *xh * sum_gy_xhat);
                }
            }
        }
        gx
    }
}

impl<F: Scalar> HasParams<F> for BatchNorm2d<F> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param<F>)) {
        f(join(prefix, "gamma"), &mut self.gamma);
        f(join(prefix, "beta"), &mut self.beta);
    }

    fn visit_buffers(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut ArrayD<F>)) {
        f(join(prefix, "running_mean"), &mut self.running_mean);
        f(join(prefix, "running_var"), &mut self.running_var);
    }
}
