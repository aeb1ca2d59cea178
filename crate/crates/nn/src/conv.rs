//! 2-D convolution and transposed convolution via im2col + GEMM.

use ndarray::{Array1, Array2, Array4, ArrayView3, ArrayViewMut3, Axis};
use rand_chacha::ChaCha8Rng;

use crate::param::{join, HasParams, Param};
use crate::{math, Scalar};

pub(crate) fn conv_out_dim(input: usize, kernel: usize, stride: usize, padding: usize) -> usize {
    (input + 2 * padding - kernel) / stride + 1
}

/// Copies into standard layout only when needed (im2col reads raw slices).
pub(crate) fn standardize<F: Scalar>(x: &Array4<F>) -> std::borrow::Cow<'_, Array4<F>> {
    if x.as_slice().is_some() {
        std::borrow::Cow::Borrowed(x)
    } else {
        std::borrow::Cow::Owned(x.as_standard_layout().into_owned())
    }
}

/// Unfolds `(C, H, W)` into `(C*k*k, H_out*W_out)` columns.
fn im2col<F: Scalar>(
    x: &ArrayView3<'_, F>,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Array2<F> {
    let (c_in, h, w) = x.dim();
    let h_out = conv_out_dim(h, kernel, stride, padding);
    let w_out = conv_out_dim(w, kernel, stride, padding);
    let cols = h_out * w_out;
    let mut out = Array2::<F>::zeros((c_in * kernel * kernel, cols));
    let xs = x.as_slice().expect("standard layout");
    let os = out.as_slice_mut().expect("standard layout");
    for c in 0..c_in {
        for ki in 0..kernel {
            for kj in 0..kernel {
                let row = (c * kernel + ki) * kernel + kj;
                let row_base = row * cols;
                for oh in 0..h_out {
                    let ih = (oh * stride + ki) as isize - padding as isize;
                    if ih < 0 || ih >= h as isize {
                        continue;
                    }
                    let x_base = (c * h + ih as usize) * w;
                    let o_base = row_base + oh * w_out;
                    for ow in 0..w_out {
                        let iw = (ow * stride + kj) as isize - padding as isize;
                        if iw >= 0 && iw < w as isize {
                            os[o_base + ow] = xs[x_base + iw as usize];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of [`im2col`]: scatter-adds columns back onto an image.
fn col2im<F: Scalar>(
    cols: &Array2<F>,
    target: &mut ArrayViewMut3<'_, F>,
    kernel: usize,
    stride: usize,
    padding: usize,
    h_out: usize,
    w_out: usize,
) {
    let (c_in, h, w) = target.dim();
    let n_cols = h_out * w_out;
    let cs = cols.as_slice().expect("standard layout");
    let ts = target.as_slice_mut().expect("standard layout");
    for c in 0..c_in {
        for ki in 0..kernel {
            for kj in 0..kernel {
                let row = (c * kernel + ki) * kernel + kj;
                let row_base = row * n_cols;
                for oh in 0..h_out {
                    let ih = (oh * stride + ki) as isize - padding as isize;
                    if ih < 0 || ih >= h as isize {
                        continue;
                    }
                    let t_base = (c * h + ih as usize) * w;
                    let c_base = row_base + oh * w_out;
                    for ow in 0..w_out {
                        let iw = (ow * stride + kj) as isize - padding as isize;
                        if iw >= 0 && iw < w as isize {
                            ts[t_base + iw as usize] += cs[c_base + ow];
                        }
                    }
                }
            }
        }
    }
}

/// 2-D convolution. Weight layout `(C_out, C_in, k, k)`.
pub struct Conv2d<F> {
    pub weight: Param<F>,
    pub bias: Option<Param<F>>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    cache: Vec<Array4<F>>,
}

impl<F: Scalar> Conv2d<F> {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        let weight = math::he_normal(&[out_channels, in_channels, kernel, kernel], fan_in, rng);
        Self {
            weight: Param::new(weight),
            bias: bias.then(|| Param::new(ndarray::ArrayD::zeros(vec![out_channels]))),
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            cache: Vec::new(),
        }
    }

    pub fn out_spatial(&self, h: usize, w: usize) -> (usize, usize) {
        (
            conv_out_dim(h, self.kernel, self.stride, self.padding),
            conv_out_dim(w, self.kernel, self.stride, self.padding),
        )
    }

    pub fn forward(&mut self, x: &Array4<F>, train: bool) -> Array4<F> {
        let x = standardize(x);
        let x = x.as_ref();
        let (batch, c_in, h, w) = x.dim();
        assert_eq!(c_in, self.in_channels, "conv input channels");
        let (h_out, w_out) = self.out_spatial(h, w);
        let w2 = self
            .weight
            .data
            .view()
            .into_shape_with_order((self.out_channels, c_in * self.kernel * self.kernel))
            .unwrap();
        let mut y = Array4::<F>::zeros((batch, self.out_channels, h_out, w_out));
        for b in 0..batch {
            let cols = im2col(&x.index_axis(Axis(0), b), self.kernel, self.stride, self.padding);
            let out = w2.dot(&cols);
            let mut yb = y.index_axis_mut(Axis(0), b);
            let ys = yb.as_slice_mut().unwrap();
            ys.copy_from_slice(out.as_slice().unwrap());
        }
        if let Some(bias) = &self.bias {
            let bias = bias.data.view().into_shape_with_order(self.out_channels).unwrap();
            for b in 0..batch {
                for c in 0..self.out_channels {
                    let v = bias[c];
                    y.index_axis_mut(Axis(0), b)
                        .index_axis_mut(Axis(0), c)
                        .mapv_inplace(|e| e + v);
                }
            }
        }
        if train {
            self.cache.push(x.clone());
        }
        y
    }

    pub fn backward(&mut self, gy: &Array4<F>) -> Array4<F> {
        let gy = standardize(gy);
        let gy = gy.as_ref();
        let x = self.cache.pop().expect("conv backward without forward");
        let (batch, c_in, _h, _w) = x.dim();
        let (_, c_out, h_out, w_out) = gy.dim();
        let k2 = self.kernel * self.kernel;
        let w2 = self
            .weight
            .data
            .view()
            .into_shape_with_order((c_out, c_in * k2))
            .unwrap()
            .to_owned();
        let mut gx = Array4::<F>::zeros(x.raw_dim());
        let mut gw = Array2::<F>::zeros((c_out, c_in * k2));
        let mut gb = Array1::<F>::zeros(c_out);
        for b in 0..batch {
            let gyb = gy.index_axis(Axis(0), b);
            let gy2 = gyb
                .view()
                .into_shape_with_order((c_out, h_out * w_out))
                .unwrap()
                .to_owned();
            let cols = im2col(&x.index_axis(Axis(0), b), self.kernel, self.stride, self.padding);
            gw = gw + gy2.dot(&cols.t());
            if self.bias.is_some() {
                gb = gb + gy2.sum_axis(Axis(1));
            }
            let gcols = w2.t().dot(&gy2);
            col2im(
                &gcols,
                &mut gx.index_axis_mut(Axis(0), b),
                self.kernel,
                self.stride,
                self.padding,
                h_out,
                w_out,
            );
        }
        let gw = gw
            .into_shape_with_order((c_out, c_in, self.kernel, self.kernel))
            .unwrap();
        self.weight.grad += &gw.into_dyn();
        if let Some(bias) = &mut self.bias {
            bias.grad += &gb.into_dyn();
        }
        gx
    }
}

impl<F: Scalar> HasParams<F> for Conv2d<F> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param<F>)) {
        f(join(prefix, "weight"), &mut self.weight);
        if let Some(b) = &mut self.bias {
            f(join(prefix, "bias"), b);
        }
    }
}

/// Transposed 2-D convolution. Weight layout `(C_in, C_out, k, k)`;
/// output spatial size `(H_in - 1) * stride - 2*padding + k`.
pub struct Deconv2d<F> {
    pub weight: Param<F>,
    pub bias: Option<Param<F>>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    cache: Vec<Array4<F>>,
}

impl<F: Scalar> Deconv2d<F> {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        let weight = math::he_normal(&[in_channels, out_channels, kernel, kernel], fan_in, rng);
        Self {
            weight: Param::new(weight),
            bias: bias.then(|| Param::new(ndarray::ArrayD::zeros(vec![out_channels]))),
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            cache: Vec::new(),
        }
    }

    pub fn out_spatial(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h - 1) * self.stride + self.kernel - 2 * self.padding,
            (w - 1) * self.stride + self.kernel - 2 * self.padding,
        )
    }

    pub fn forward(&mut self, x: &Array4<F>, train: bool) -> Array4<F> {
        let x = standardize(x);
        let x = x.as_ref();
        let (batch, c_in, h, w) = x.dim();
        assert_eq!(c_in, self.in_channels, "deconv input channels");
        let (h_out, w_out) = self.out_spatial(h, w);
        let k2 = self.kernel * self.kernel;
        let w2 = self
            .weight
            .data
            .view()
            .into_shape_with_order((c_in, self.out_channels * k2))
            .unwrap();
        let mut y = Array4::<F>::zeros((batch, self.out_channels, h_out, w_out));
        for b in 0..batch {
            let xb = x.index_axis(Axis(0), b);
            let x2 = xb.view().into_shape_with_order((c_in, h * w)).unwrap().to_owned();
            // forward of a transposed conv is the input-gradient of the
            // adjoint convolution
            let cols = w2.t().dot(&x2);
            col2im(
                &cols,
                &mut y.index_axis_mut(Axis(0), b),
                self.kernel,
                self.stride,
                self.padding,
                h,
                w,
            );
        }
        if let Some(bias) = &self.bias {
            let bias = bias.data.view().into_shape_with_order(self.out_channels).unwrap();
            for b in 0..batch {
                for c in 0..self.out_channels {
                    let v = bias[c];
                    y.index_axis_mut(Axis(0), b)
                        .index_axis_mut(Axis(0), c)
                        .mapv_inplace(|e| e + v);
                }
            }
        }
        if train {
            self.cache.push(x.clone());
        }
        y
    }

    pub fn backward(&mut self, gy: &Array4<F>) -> Array4<F> {
        let gy = standardize(gy);
        let gy = gy.as_ref();
        let x = self.cache.pop().expect("deconv backward without forward");
        let (batch, c_in, h, w) = x.dim();
        let (_, c_out, _, _) = gy.dim();
        let k2 = self.kernel * self.kernel;
        let w2 = self
            .weight
            .data
            .view()
            .into_shape_with_order((c_in, c_out * k2))
            .unwrap()
            .to_owned();
        let mut gx = Array4::<F>::zeros(x.raw_dim());
        let mut gw = Array2::<F>::zeros((c_in, c_out * k2));
        let mut gb = Array1::<F>::zeros(c_out);
        for b in 0..batch {
            let gyb = gy.index_axis(Axis(0), b);
            let gy_cols = im2col(&gyb, self.kernel, self.stride, self.padding);
            let xb = x.index_axis(Axis(0), b);
            let x2 = xb.view().into_shape_with_order((c_in, h * w)).unwrap().to_owned();
            gw = gw + x2.dot(&gy_cols.t());
            let gx2 = w2.dot(&gy_cols);
            let mut gxb = gx.index_axis_mut(Axis(0), b);
            gxb.as_slice_mut()
                .unwrap()
                .copy_from_slice(gx2.as_slice().unwrap());
            if self.bias.is_some() {
                let gy2 = gyb
                    .view()
                    .into_shape_with_order((c_out, gyb.len() / c_out))
                    .unwrap()
                    .to_owned();
                gb = gb + gy2.sum_axis(Axis(1));
            }
        }
        let gw = gw
            .into_shape_with_order((c_in, c_out, self.kernel, self.kernel))
            .unwrap();
        self.weight.grad += &gw.into_dyn();
        if let Some(bias) = &mut self.bias {
            bias.grad += &gb.into_dyn();
        }
        gx
    }
}

impl<F: Scalar> HasParams<F> for Deconv2d<F> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param<F>)) {
        f(join(prefix, "weight"), &mut self.weight);
        if let Some(b) = &mut self.bias {
            f(join(prefix, "bias"), b);
        }
    }
}
