//! Max pooling and global average pooling.

use ndarray::{Array2, Array4, Axis};

use crate::Scalar;

pub struct MaxPool2d<F> {
    pub kernel: usize,
    pub stride: usize,
    cache: Vec<PoolCache>,
    _marker: std::marker::PhantomData<F>,
}

struct PoolCache {
    input_dim: (usize, usize, usize, usize),
    /// flattened input index of each maximum, per output element
    argmax: Vec<usize>,
}

impl<F: Scalar> MaxPool2d<F> {
    pub fn new(kernel: usize, stride: usize) -> Self {
        Self {
            kernel,
            stride,
            cache: Vec::new(),
            _marker: std::marker::PhantomData,
        }
    }

    pub fn out_spatial(&self, h: usize, w: usize) -> (usize, usize) {
        ((h - self.kernel) / self.stride + 1, (w - self.kernel) / self.stride + 1)
    }

    pub fn forward(&mut self, x: &Array4<F>, train: bool) -> Array4<F> {
        let x = crate::conv::standardize(x);
        let x = x.as_ref();
        let (batch, c, h, w) = x.dim();
        let (h_out, w_out) = self.out_spatial(h, w);
        let mut y = Array4::<F>::zeros((batch, c, h_out, w_out));
        let mut argmax = vec![0usize; batch * c * h_out * w_out];
        let xs = x.as_slice().unwrap();
        let ys = y.as_slice_mut().unwrap();
        let mut oi = 0;
        for b in 0..batch {
            for ch in 0..c {
                let base = (b * c + ch) * h * w;
                for oh in 0..h_out {
                    for ow in 0..w_out {
                        let mut best = F::neg_infinity();
                        let mut best_idx = 0;
                        for ki in 0..self.kernel {
                            let ih = oh * self.stride + ki;
                            for kj in 0..self.kernel {
                                let iw = ow * self.stride + kj;
                                let idx = base + ih * w + iw;
                                if xs[idx] > best {
                                    best = xs[idx];
                                    best_idx = idx;
                                }
                            }
                        }
                        ys[oi] = best;
                        argmax[oi] = best_idx;
                        oi += 1;
                    }
                }
            }
        }
        if train {
            self.cache.push(PoolCache {
                input_dim: (batch, c, h, w),
                argmax,
            });
        }
        y
    }

    pub fn backward(&mut self, gy: &Array4<F>) -> Array4<F> {
        let cache = self.cache.pop().expect("maxpool backward");
        let mut gx = Array4::<F>::zeros(cache.input_dim);
        let gxs = gx.as_slice_mut().unwrap();
        for (g, &idx) in gy.iter().zip(cache.argmax.iter()) {
            gxs[idx] += *g;
        }
        gx
    }
}

/// Mean over the spatial dimensions: `(B, C, H, W) -> (B, C)`.
pub struct GlobalAvgPool<F> {
    cache: Vec<(usize, usize)>,
    _marker: std::marker::PhantomData<F>,
}

impl<F: Scalar> GlobalAvgPool<F> {
    pub fn new() -> Self {
        Self {
            cache: Vec::new(),
            _marker: std::marker::PhantomData,
        }
    }

    pub fn forward(&mut self, x: &Array4<F>, train: bool) -> Array2<F> {
        let (_, _, h, w) = x.dim();
        if train {
            self.cache.push((h, w));
        }
        let scale = F::cast(1.0 / (h * w) as f64);
        x.sum_axis(Axis(3)).sum_axis(Axis(2)) * scale
    }

    pub fn backward(&mut self, gy: &Array2<F>) -> Array4<F> {
        let (h, w) = self.cache.pop().expect("gap backward");
        let (batch, c) = gy.dim();
        let scale = F::cast(1.0 / (h * w) as f64);
        let mut gx = Array4::<F>::zeros((batch, c, h, w));
        for b in 0..batch {
            for ch in 0..c {
                let v = gy[(b, ch)] * scale;
                gx.index_axis_mut(Axis(0), b)
                    .index_axis_mut(Axis(0), ch)
                    .fill(v);
            }
        }
        gx
    }
}

impl<F: Scalar> Default for GlobalAvgPool<F> {
    fn default() -> Self {
        Self::new()
    }
}
