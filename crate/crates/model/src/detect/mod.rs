//! Single-scale anchor-based detection over rearranged pyramid features.

pub mod ciou;
pub mod grid;

use gop_nn::act::LeakyRelu;
use gop_nn::conv::Conv2d;
use gop_nn::norm::BatchNorm2d;
use gop_nn::param::join;
use gop_nn::{HasParams, Param, Scalar};
use ndarray::{concatenate, Array4, ArrayD, Axis, Ix4};
use rand_chacha::ChaCha8Rng;

use crate::extractor::DetFeatures;
use crate::upsample::Upsample;
use crate::ModelConfig;

pub use grid::GridMeta;

const SLOPE: f64 = 0.1;

struct ConvBnAct<F> {
    conv: Conv2d<F>,
    bn: BatchNorm2d<F>,
    act: LeakyRelu<F, Ix4>,
}

impl<F: Scalar> ConvBnAct<F> {
    fn new(in_ch: usize, out_ch: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            conv: Conv2d::new(in_ch, out_ch, 3, 1, 1, false, rng),
            bn: BatchNorm2d::new(out_ch),
            act: LeakyRelu::new(SLOPE),
        }
    }

    fn forward(&mut self, x: &Array4<F>, train: bool) -> Array4<F> {
        let y = self.conv.forward(x, train);
        let y = self.bn.forward(&y, train);
        self.act.forward(&y, train)
    }

    fn backward(&mut self, gy: &Array4<F>) -> Array4<F> {
        let g = self.act.backward(gy);
        let g = self.bn.backward(&g);
        self.conv.backward(&g)
    }
}

impl<F: Scalar> HasParams<F> for ConvBnAct<F> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param<F>)) {
        self.conv.visit_params(&join(prefix, "conv"), f);
        self.bn.visit_params(&join(prefix, "bn"), f);
    }
    fn visit_buffers(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut ArrayD<F>)) {
        self.bn.visit_buffers(&join(prefix, "bn"), f);
    }
}

/// Pyramid fusion neck producing one raw detection grid at stride 4.
/// The coarse levels are progressively upsampled (rearrangement, or
/// conv + interpolation under the ablation) and fused by concatenation.
pub struct DetectionNeck<F> {
    conv5: ConvBnAct<F>,
    up5: Upsample<F>,
    conv4: ConvBnAct<F>,
    up4: Upsample<F>,
    conv3: ConvBnAct<F>,
    mid: ConvBnAct<F>,
    head: Conv2d<F>,
}

impl<F: Scalar> DetectionNeck<F> {
    pub fn new(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let r = cfg.defocus_ratio;
        let r2 = r * r;
        let [_, c3, c4, c5] = cfg.block_channels;
        let w = cfg.det_channels;
        let interp = cfg.ablation.interpolate_upsample;
        Self {
            conv5: ConvBnAct::new(c5 / r2, w, rng),
            up5: Upsample::new(w, r, interp, rng),
            conv4: ConvBnAct::new(c4 / r2 + w / r2, w, rng),
            up4: Upsample::new(w, r, interp, rng),
            conv3: ConvBnAct::new(c3 / r2 + w / r2, w, rng),
            mid: ConvBnAct::new(w, w, rng),
            head: Conv2d::new(w, cfg.grid_channels(), 1, 1, 0, true, rng),
        }
    }

    pub fn forward(&mut self, feats: &DetFeatures<F>, train: bool) -> Array4<F> {
        let p5 = self.conv5.forward(&feats.d5, train);
        let p5_up = self.up5.forward(&p5, train);
        let f4 = concatenate(Axis(1), &[feats.d4.view(), p5_up.view()]).unwrap();
        let p4 = self.conv4.forward(&f4, train);
        let p4_up = self.up4.forward(&p4, train);
        let f3 = concatenate(Axis(1), &[feats.d3.view(), p4_up.view()]).unwrap();
        let p3 = self.conv3.forward(&f3, train);
        let p3 = self.mid.forward(&p3, train);
        self.head.forward(&p3, train)
    }

    /// Gradients w.r.t. the three rearranged pyramid inputs.
    pub fn backward(&mut self, g_grid: &Array4<F>) -> DetFeatures<F> {
        let g = self.head.backward(g_grid);
        let g = self.mid.backward(&g);
        let g_f3 = self.conv3.backward(&g);
        let d3_ch = g_f3.dim().1 - self.up4.out_channels();
        let g_d3 = g_f3.slice(ndarray::s![.., ..d3_ch, .., ..]).to_owned();
        let g_p4_up = g_f3.slice(ndarray::s![.., d3_ch.., .., ..]).to_owned();
        let g_p4 = self.up4.backward(&g_p4_up);
        let g_f4 = self.conv4.backward(&g_p4);
        let d4_ch = g_f4.dim().1 - self.up5.out_channels();
        let g_d4 = g_f4.slice(ndarray::s![.., ..d4_ch, .., ..]).to_owned();
        let g_p5_up = g_f4.slice(ndarray::s![.., d4_ch.., .., ..]).to_owned();
        let g_p5 = self.up5.backward(&g_p5_up);
        let g_d5 = self.conv5.backward(&g_p5);
        DetFeatures {
            d3: g_d3,
            d4: g_d4,
            d5: g_d5,
        }
    }
}

impl<F: Scalar> HasParams<F> for DetectionNeck<F> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param<F>)) {
        self.conv5.visit_params(&join(prefix, "conv5"), f);
        self.up5.visit_params(&join(prefix, "up5"), f);
        self.conv4.visit_params(&join(prefix, "conv4"), f);
        self.up4.visit_params(&join(prefix, "up4"), f);
        self.conv3.visit_params(&join(prefix, "conv3"), f);
        self.mid.visit_params(&join(prefix, "mid"), f);
        self.head.visit_params(&join(prefix, "head"), f);
    }
    fn visit_buffers(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut ArrayD<F>)) {
        self.conv5.visit_buffers(&join(prefix, "conv5"), f);
        self.conv4.visit_buffers(&join(prefix, "conv4"), f);
        self.conv3.visit_buffers(&join(prefix, "conv3"), f);
        self.mid.visit_buffers(&join(prefix, "mid"), f);
    }
}
