//! Bilinear resize (align_corners = false), used both as the heatmap
//! output resize and as the interpolation-upsampling ablation path.

use ndarray::Array4;

use crate::Scalar;

#[derive(Debug, Clone, Copy)]
pub enum ResizeTarget {
    Exact(usize, usize),
    Scale(usize),
}

pub struct BilinearResize<F> {
    pub target: ResizeTarget,
    cache: Vec<(usize, usize, usize, usize)>,
    _marker: std::marker::PhantomData<F>,
}

/// Per-axis source taps: low index, high index, high-tap weight.
fn taps(out_len: usize, in_len: usize) -> Vec<(usize, usize, f64)> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            let src = (o as f64 + 0.5) * scale - 0.5;
            if src <= 0.0 {
                (0, 0, 0.0)
            } else {
                let lo = src.floor() as usize;
                let hi = (lo + 1).min(in_len - 1);
                (lo.min(in_len - 1), hi, src - src.floor())
            }
        })
        .collect()
}

impl<F: Scalar> BilinearResize<F> {
    pub fn new(target: ResizeTarget) -> Self {
        Self {
            target,
            cache: Vec::new(),
            _marker: std::marker::PhantomData,
        }
    }

    pub fn out_spatial(&self, h: usize, w: usize) -> (usize, usize) {
        match self.target {
            ResizeTarget::Exact(oh, ow) => (oh, ow),
            ResizeTarget::Scale(r) => (h * r, w * r),
        }
    }

    pub fn forward(&mut self, x: &Array4<F>, train: bool) -> Array4<F> {
        let x = crate::conv::standardize(x);
        let x = x.as_ref();
        let (batch, c, h, w) = x.dim();
        let (oh, ow) = self.out_spatial(h, w);
        let ys = taps(oh, h);
        let xs_taps = taps(ow, w);
        let mut y = Array4::<F>::zeros((batch, c, oh, ow));
        let xv = x.as_slice().unwrap();
        let yv = y.as_slice_mut().unwrap();
        for b in 0..batch {
            for ch in 0..c {
                let in_base = (b * c + ch) * h * w;
                let out_base = (b * c + ch) * oh * ow;
                for (oi, &(y0, y1, wy)) in ys.iter().enumerate() {
                    for (oj, &(x0, x1, wx)) in xs_taps.iter().enumerate() {
                        let v00 = xv[in_base + y0 * w + x0].to_f64_lossy();
                        let v01 = xv[in_base + y0 * w + x1].to_f64_lossy();
                        let v10 = xv[in_base + y1 * w + x0].to_f64_lossy();
                        let v11 = xv[in_base + y1 * w + x1].to_f64_lossy();
                        let top = v00 * (1.0 - wx) + v01 * wx;
                        let bot = v10 * (1.0 - wx) + v11 * wx;
                        yv[out_base + oi * ow + oj] = F::cast(top * (1.0 - wy) + bot * wy);
                    }
                }
            }
        }
        if train {
            self.cache.push((h, w, oh, ow));
        }
        y
    }

    pub fn backward(&mut self, gy: &Array4<F>) -> Array4<F> {
        let gy = crate::conv::standardize(gy);
        let gy = gy.as_ref();
        let (h, w, oh, ow) = self.cache.pop().expect("resize backward");
        let (batch, c, _, _) = gy.dim();
        let ys = taps(oh, h);
        let xs_taps = taps(ow, w);
        let mut gx = Array4::<F>::zeros((batch, c, h, w));
        let gyv = gy.as_slice().unwrap();
        let gxv = gx.as_slice_mut().unwrap();
        for b in 0..batch {
            for ch in 0..c {
                let in_base = (b * c + ch) * h * w;
                let out_base = (b * c + ch) * oh * ow;
                for (oi, &(y0, y1, wy)) in ys.iter().enumerate() {
                    for (oj, &(x0, x1, wx)) in xs_taps.iter().enumerate() {
                        let g = gyv[out_base + oi * ow + oj].to_f64_lossy();
                        gxv[in_base + y0 * w + x0] += F::cast(g * (1.0 - wy) * (1.0 - wx));
                        gxv[in_base + y0 * w + x1] += F::cast(g * (1.0 - wy) * wx);
                        gxv[in_base + y1 * w + x0] += F::cast(g * wy * (1.0 - wx));
                        gxv[in_base + y1 * w + x1] += F::cast(g * wy * wx);
                    }
                }
            }
        }
        gx
    }
}
