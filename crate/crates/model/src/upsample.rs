//! Feature upsampling: channel-to-space rearrangement by default, or the
//! channel-compressing convolution + bilinear interpolation alternative for
//! the ablation. Both map `(C, H, W)` to `(C/r^2, r*H, r*W)`.

use gop_nn::conv::Conv2d;
use gop_nn::defocus::Defocus;
use gop_nn::resize::{BilinearResize, ResizeTarget};
use gop_nn::{HasParams, Param, Scalar};
use ndarray::Array4;
use rand_chacha::ChaCha8Rng;

enum Kind<F> {
    Defocus(Defocus<F>),
    Interpolate {
        compress: Conv2d<F>,
        resize: BilinearResize<F>,
    },
}

pub struct Upsample<F> {
    kind: Kind<F>,
    in_channels: usize,
    ratio: usize,
}

impl<F: Scalar> Upsample<F> {
    pub fn new(channels: usize, ratio: usize, interpolate: bool, rng: &mut ChaCha8Rng) -> Self {
        let kind = if interpolate {
            Kind::Interpolate {
                compress: Conv2d::new(channels, channels / (ratio * ratio), 1, 1, 0, true, rng),
                resize: BilinearResize::new(ResizeTarget::Scale(ratio)),
            }
        } else {
            Kind::Defocus(Defocus::new(ratio))
        };
        Self {
            kind,
            in_channels: channels,
            ratio,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.in_channels / (self.ratio * self.ratio)
    }

    pub fn forward(&mut self, x: &Array4<F>, train: bool) -> Array4<F> {
        match &mut self.kind {
            Kind::Defocus(d) => d.forward(x),
            Kind::Interpolate { compress, resize } => {
                let y = compress.forward(x, train);
                resize.forward(&y, train)
            }
        }
    }

    pub fn backward(&mut self, gy: &Array4<F>) -> Array4<F> {
        match &mut self.kind {
            Kind::Defocus(d) => d.backward(gy),
            Kind::Interpolate { compress, resize } => {
                let g = resize.backward(gy);
                compress.backward(&g)
            }
        }
    }
}

impl<F: Scalar> HasParams<F> for Upsample<F> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param<F>)) {
        if let Kind::Interpolate { compress, .. } = &mut self.kind {
            compress.visit_params(&gop_nn::param::join(prefix, "compress"), f);
        }
    }
}
