//! Gaze heatmap branch with the head-delay strategy: the head location mask
//! enters here, strictly after the shared backbone.

use gop_nn::act::{LeakyRelu, Sigmoid};
use gop_nn::conv::{Conv2d, Deconv2d};
use gop_nn::linear::Linear;
use gop_nn::norm::BatchNorm2d;
use gop_nn::param::join;
use gop_nn::pool::{GlobalAvgPool, MaxPool2d};
use gop_nn::resize::{BilinearResize, ResizeTarget};
use gop_nn::{HasParams, Param, Scalar};
use ndarray::{concatenate, Array2, Array4, ArrayD, Axis, Ix2, Ix4};
use rand_chacha::ChaCha8Rng;

use crate::ModelConfig;

const SLOPE: f64 = 0.1;

struct ConvBnAct<F> {
    conv: Conv2d<F>,
    bn: BatchNorm2d<F>,
    act: LeakyRelu<F, Ix4>,
}

impl<F: Scalar> ConvBnAct<F> {
    fn new(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Self {
            conv: Conv2d::new(in_ch, out_ch, kernel, stride, padding, false, rng),
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

struct DeconvBnAct<F> {
    deconv: Deconv2d<F>,
    bn: BatchNorm2d<F>,
    act: LeakyRelu<F, Ix4>,
}

impl<F: Scalar> DeconvBnAct<F> {
    fn new(in_ch: usize, out_ch: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            deconv: Deconv2d::new(in_ch, out_ch, 4, 2, 1, false, rng),
            bn: BatchNorm2d::new(out_ch),
            act: LeakyRelu::new(SLOPE),
        }
    }

    fn forward(&mut self, x: &Array4<F>, train: bool) -> Array4<F> {
        let y = self.deconv.forward(x, train);
        let y = self.bn.forward(&y, train);
        self.act.forward(&y, train)
    }

    fn backward(&mut self, gy: &Array4<F>) -> Array4<F> {
        let g = self.act.backward(gy);
        let g = self.bn.backward(&g);
        self.deconv.backward(&g)
    }
}

impl<F: Scalar> HasParams<F> for DeconvBnAct<F> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param<F>)) {
        self.deconv.visit_params(&join(prefix, "deconv"), f);
        self.bn.visit_params(&join(prefix, "bn"), f);
    }
    fn visit_buffers(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut ArrayD<F>)) {
        self.bn.visit_buffers(&join(prefix, "bn"), f);
    }
}

/// Five stride-2 convolutions taking the binary head-location mask from
/// image resolution down to the C5 grid.
pub struct HeadLocEncoder<F> {
    stages: Vec<ConvBnAct<F>>,
}

impl<F: Scalar> HeadLocEncoder<F> {
    pub fn new(gaze_channels: usize, rng: &mut ChaCha8Rng) -> Self {
        let g = gaze_channels;
        let widths = [(g / 4).max(2), (g / 2).max(4), (g / 2).max(4), g, g];
        let mut stages = Vec::with_capacity(5);
        let mut in_ch = 1;
        for &out_ch in &widths {
            stages.push(ConvBnAct::new(in_ch, out_ch, 3, 2, 1, rng));
            in_ch = out_ch;
        }
        Self { stages }
    }

    pub fn forward(&mut self, mask: &Array4<F>, train: bool) -> Array4<F> {
        let mut cur = mask.clone();
        for stage in &mut self.stages {
            cur = stage.forward(&cur, train);
        }
        cur
    }

    /// Propagates gradients into the convolution weights; the mask itself is
    /// data, so the returned input gradient is dropped by the caller.
    pub fn backward(&mut self, gy: &Array4<F>) {
        let mut grad = gy.clone();
        for stage in self.stages.iter_mut().rev() {
            grad = stage.backward(&grad);
        }
    }
}

impl<F: Scalar> HasParams<F> for HeadLocEncoder<F> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param<F>)) {
        for (i, s) in self.stages.iter_mut().enumerate() {
            s.visit_params(&join(prefix, &format!("stage{i}")), f);
        }
    }
    fn visit_buffers(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut ArrayD<F>)) {
        for (i, s) in self.stages.iter_mut().enumerate() {
            s.visit_buffers(&join(prefix, &format!("stage{i}")), f);
        }
    }
}

/// Attention over the C5 grid from the pooled mask and the pooled
/// gaze-specific head feature.
pub struct HeadAttention<F> {
    pools: Vec<MaxPool2d<F>>,
    gap: GlobalAvgPool<F>,
    fc1: Linear<F>,
    act: LeakyRelu<F, Ix2>,
    fc2: Linear<F>,
    squash: Sigmoid<F, Ix2>,
    mask_features: usize,
    c5size: usize,
}

impl<F: Scalar> HeadAttention<F> {
    pub fn new(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        // three 2x max-pools leave the mask at image_size / 8
        let pooled = cfg.image_size / 8;
        let mask_features = pooled * pooled;
        let c5 = cfg.c5_size();
        Self {
            pools: (0..3).map(|_| MaxPool2d::new(2, 2)).collect(),
            gap: GlobalAvgPool::new(),
            fc1: Linear::new(
                mask_features + cfg.gaze_channels_effective(),
                cfg.attention_hidden,
                rng,
            ),
            act: LeakyRelu::new(SLOPE),
            fc2: Linear::new(cfg.attention_hidden, c5 * c5, rng),
            squash: Sigmoid::new(),
            mask_features,
            c5size: c5,
        }
    }

    pub fn forward(&mut self, mask: &Array4<F>, f_head: &Array4<F>, train: bool) -> Array4<F> {
        let batch = mask.dim().0;
        // the mask path carries no trainable parameters and receives no
        // gradient, so it always runs cache-free
        let mut pooled = mask.clone();
        for pool in &mut self.pools {
            pooled = pool.forward(&pooled, false);
        }
        let mask_flat = pooled
            .into_shape_clone((batch, self.mask_features))
            .unwrap();
        let head_pooled = self.gap.forward(f_head, train);
        let joint = concatenate(Axis(1), &[mask_flat.view(), head_pooled.view()]).unwrap();
        let z = self.fc1.forward(&joint, train);
        let z = self.act.forward(&z, train);
        let z = self.fc2.forward(&z, train);
        let att = self.squash.forward(&z, train);
        att.into_shape_clone((batch, 1, self.c5size, self.c5size))
            .unwrap()
    }

    /// Returns the gradient w.r.t. the gaze-specific head feature.
    pub fn backward(&mut self, g_att: &Array4<F>) -> Array4<F> {
        let batch = g_att.dim().0;
        let g = g_att
            .to_shape((batch, self.c5size * self.c5size))
            .unwrap()
            .into_owned();
        let g = self.squash.backward(&g);
        let g = self.fc2.backward(&g);
        let g = self.act.backward(&g);
        let g_joint = self.fc1.backward(&g);
        let g_head: Array2<F> = g_joint
            .slice(ndarray::s![.., self.mask_features..])
            .to_owned();
        self.gap.backward(&g_head)
    }
}

impl<F: Scalar> HasParams<F> for HeadAttention<F> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param<F>)) {
        self.fc1.visit_params(&join(prefix, "fc1"), f);
        self.fc2.visit_params(&join(prefix, "fc2"), f);
    }
}

/// Encoder-decoder heatmap regressor: two convolutions, three stride-2
/// deconvolutions, a 1x1 projection, bilinear resize to the heatmap grid,
/// and a sigmoid keeping the output in (0, 1).
pub struct GazePredictor<F> {
    fuse: ConvBnAct<F>,
    enc1: ConvBnAct<F>,
    enc2: ConvBnAct<F>,
    dec1: DeconvBnAct<F>,
    dec2: DeconvBnAct<F>,
    dec3: DeconvBnAct<F>,
    out_conv: Conv2d<F>,
    resize: BilinearResize<F>,
    squash: Sigmoid<F, Ix4>,
}

impl<F: Scalar> GazePredictor<F> {
    pub fn new(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let g = cfg.gaze_channels_effective();
        let hm = cfg.heatmap_size;
        Self {
            fuse: ConvBnAct::new(2 * g, g, 3, 1, 1, rng),
            enc1: ConvBnAct::new(g, g, 3, 1, 1, rng),
            enc2: ConvBnAct::new(g, g / 2, 3, 1, 1, rng),
            dec1: DeconvBnAct::new(g / 2, g / 4, rng),
            dec2: DeconvBnAct::new(g / 4, g / 8, rng),
            dec3: DeconvBnAct::new(g / 8, g / 8, rng),
            out_conv: Conv2d::new(g / 8, 1, 1, 1, 0, true, rng),
            resize: BilinearResize::new(ResizeTarget::Exact(hm, hm)),
            squash: Sigmoid::new(),
        }
    }

    fn decode(&mut self, fused: &Array4<F>, train: bool) -> Array4<F> {
        let y = self.enc1.forward(fused, train);
        let y = self.enc2.forward(&y, train);
        let y = self.dec1.forward(&y, train);
        let y = self.dec2.forward(&y, train);
        let y = self.dec3.forward(&y, train);
        let y = self.out_conv.forward(&y, train);
        let y = self.resize.forward(&y, train);
        self.squash.forward(&y, train)
    }

    fn decode_backward(&mut self, gy: &Array4<F>) -> Array4<F> {
        let g = self.squash.backward(gy);
        let g = self.resize.backward(&g);
        let g = self.out_conv.backward(&g);
        let g = self.dec3.backward(&g);
        let g = self.dec2.backward(&g);
        let g = self.dec1.backward(&g);
        let g = self.enc2.backward(&g);
        self.enc1.backward(&g)
    }
}

impl<F: Scalar> HasParams<F> for GazePredictor<F> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param<F>)) {
        self.fuse.visit_params(&join(prefix, "fuse"), f);
        self.enc1.visit_params(&join(prefix, "enc1"), f);
        self.enc2.visit_params(&join(prefix, "enc2"), f);
        self.dec1.visit_params(&join(prefix, "dec1"), f);
        self.dec2.visit_params(&join(prefix, "dec2"), f);
        self.dec3.visit_params(&join(prefix, "dec3"), f);
        self.out_conv.visit_params(&join(prefix, "out_conv"), f);
    }
    fn visit_buffers(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut ArrayD<F>)) {
        self.fuse.visit_buffers(&join(prefix, "fuse"), f);
        self.enc1.visit_buffers(&join(prefix, "enc1"), f);
        self.enc2.visit_buffers(&join(prefix, "enc2"), f);
        self.dec1.visit_buffers(&join(prefix, "dec1"), f);
        self.dec2.visit_buffers(&join(prefix, "dec2"), f);
        self.dec3.visit_buffers(&join(prefix, "dec3"), f);
    }
}

/// The full gaze branch: head-location encoding, scene fusion, head
/// attention, and heatmap regression.
pub struct GazeHead<F> {
    pub loc_encoder: HeadLocEncoder<F>,
    pub attention: HeadAttention<F>,
    pub predictor: GazePredictor<F>,
    product_cache: Vec<(Array4<F>, Array4<F>)>,
}

impl<F: Scalar> GazeHead<F> {
    pub fn new(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        Self {
            loc_encoder: HeadLocEncoder::new(cfg.gaze_channels_effective(), rng),
            attention: HeadAttention::new(cfg, rng),
            predictor: GazePredictor::new(cfg, rng),
            product_cache: Vec::new(),
        }
    }

    /// Attention map over the C5 grid, exposed for inspection.
    pub fn attention_map(&mut self, mask: &Array4<F>, f_head: &Array4<F>) -> Array4<F> {
        self.attention.forward(mask, f_head, false)
    }

    pub fn forward(
        &mut self,
        mask: &Array4<F>,
        f_scene: &Array4<F>,
        f_head: &Array4<F>,
        train: bool,
    ) -> Array4<F> {
        let loc = self.loc_encoder.forward(mask, train);
        let joint = concatenate(Axis(1), &[f_scene.view(), loc.view()]).unwrap();
        let fused = self.predictor.fuse.forward(&joint, train);
        let att = self.attention.forward(mask, f_head, train);
        let gated = &fused * &att;
        if train {
            self.product_cache.push((fused, att));
        }
        self.predictor.decode(&gated, train)
    }

    /// Returns gradients w.r.t. the gaze-specific scene and head features.
    pub fn backward(&mut self, g_heatmap: &Array4<F>) -> (Array4<F>, Array4<F>) {
        let g_gated = self.predictor.decode_backward(g_heatmap);
        let (fused, att) = self.product_cache.pop().expect("gaze backward");
        let g_fused = &g_gated * &att;
        let g_att = (&g_gated * &fused).sum_axis(Axis(1)).insert_axis(Axis(1));
        let g_f_head = self.attention.backward(&g_att);
        let g_joint = self.predictor.fuse.backward(&g_fused);
        let channels = g_joint.dim().1 / 2;
        let g_f_scene = g_joint.slice(ndarray::s![.., ..channels, .., ..]).to_owned();
        let g_loc = g_joint.slice(ndarray::s![.., channels.., .., ..]).to_owned();
        self.loc_encoder.backward(&g_loc);
        (g_f_scene, g_f_head)
    }
}

impl<F: Scalar> HasParams<F> for GazeHead<F> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param<F>)) {
        self.loc_encoder.visit_params(&join(prefix, "loc"), f);
        self.attention.visit_params(&join(prefix, "attention"), f);
        self.predictor.visit_params(&join(prefix, "predictor"), f);
    }
    fn visit_buffers(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut ArrayD<F>)) {
        self.loc_encoder.visit_buffers(&join(prefix, "loc"), f);
        self.predictor.visit_buffers(&join(prefix, "predictor"), f);
    }
}
