//! Specific-general-specific feature extraction: input-specific stems, one
//! shared residual backbone over both scene and head images, and
//! task-specific output blocks.

use gop_nn::act::LeakyRelu;
use rand_chacha::rand_core::SeedableRng;
use gop_nn::conv::Conv2d;
use gop_nn::norm::BatchNorm2d;
use gop_nn::param::join;
use gop_nn::{HasParams, Param, Scalar};
use ndarray::{Array4, ArrayD, Ix4};
use rand_chacha::ChaCha8Rng;

use crate::upsample::Upsample;
use crate::ModelConfig;

const SLOPE: f64 = 0.1;

/// Input-specific block: stride-2 7x7 convolution + norm + nonlinearity.
pub struct InputStem<F> {
    conv: Conv2d<F>,
    bn: BatchNorm2d<F>,
    act: LeakyRelu<F, Ix4>,
}

impl<F: Scalar> InputStem<F> {
    pub fn new(out_channels: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            conv: Conv2d::new(3, out_channels, 7, 2, 3, false, rng),
            bn: BatchNorm2d::new(out_channels),
            act: LeakyRelu::new(SLOPE),
        }
    }

    pub fn forward(&mut self, x: &Array4<F>, train: bool) -> Array4<F> {
        let y = self.conv.forward(x, train);
        let y = self.bn.forward(&y, train);
        self.act.forward(&y, train)
    }

    pub fn backward(&mut self, gy: &Array4<F>) -> Array4<F> {
        let g = self.act.backward(gy);
        let g = self.bn.backward(&g);
        self.conv.backward(&g)
    }
}

impl<F: Scalar> HasParams<F> for InputStem<F> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param<F>)) {
        self.conv.visit_params(&join(prefix, "conv"), f);
        self.bn.visit_params(&join(prefix, "bn"), f);
    }
    fn visit_buffers(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut ArrayD<F>)) {
        self.bn.visit_buffers(&join(prefix, "bn"), f);
    }
}

/// Basic residual block: two 3x3 convolutions with a projection shortcut
/// when the shape changes.
pub struct ResidualBlock<F> {
    conv1: Conv2d<F>,
    bn1: BatchNorm2d<F>,
    act1: LeakyRelu<F, Ix4>,
    conv2: Conv2d<F>,
    bn2: BatchNorm2d<F>,
    proj: Option<(Conv2d<F>, BatchNorm2d<F>)>,
    act_out: LeakyRelu<F, Ix4>,
    shortcut_cache: Vec<Array4<F>>,
}

impl<F: Scalar> ResidualBlock<F> {
    pub fn new(in_ch: usize, out_ch: usize, stride: usize, rng: &mut ChaCha8Rng) -> Self {
        let proj = (stride != 1 || in_ch != out_ch).then(|| {
            (
                Conv2d::new(in_ch, out_ch, 1, stride, 0, false, rng),
                BatchNorm2d::new(out_ch),
            )
        });
        Self {
            conv1: Conv2d::new(in_ch, out_ch, 3, stride, 1, false, rng),
            bn1: BatchNorm2d::new(out_ch),
            act1: LeakyRelu::new(SLOPE),
            conv2: Conv2d::new(out_ch, out_ch, 3, 1, 1, false, rng),
            bn2: BatchNorm2d::new(out_ch),
            proj,
            act_out: LeakyRelu::new(SLOPE),
            shortcut_cache: Vec::new(),
        }
    }

    pub fn forward(&mut self, x: &Array4<F>, train: bool) -> Array4<F> {
        let main = self.conv1.forward(x, train);
        let main = self.bn1.forward(&main, train);
        let main = self.act1.forward(&main, train);
        let main = self.conv2.forward(&main, train);
        let main = self.bn2.forward(&main, train);
        let short = match &mut self.proj {
            Some((conv, bn)) => {
                let s = conv.forward(x, train);
                bn.forward(&s, train)
            }
            None => {
                if train {
                    self.shortcut_cache.push(x.clone());
                }
                x.clone()
            }
        };
        self.act_out.forward(&(main + short), train)
    }

    pub fn backward(&mut self, gy: &Array4<F>) -> Array4<F> {
        let g_sum = self.act_out.backward(gy);
        let g_short = match &mut self.proj {
            Some((conv, bn)) => {
                let g = bn.backward(&g_sum);
                conv.backward(&g)
            }
            None => {
                self.shortcut_cache.pop().expect("residual backward");
                g_sum.clone()
            }
        };
        let g = self.bn2.backward(&g_sum);
        let g = self.conv2.backward(&g);
        let g = self.act1.backward(&g);
        let g = self.bn1.backward(&g);
        let g_main = self.conv1.backward(&g);
        g_main + g_short
    }
}

impl<F: Scalar> HasParams<F> for ResidualBlock<F> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param<F>)) {
        self.conv1.visit_params(&join(prefix, "conv1"), f);
        self.bn1.visit_params(&join(prefix, "bn1"), f);
        self.conv2.visit_params(&join(prefix, "conv2"), f);
        self.bn2.visit_params(&join(prefix, "bn2"), f);
        if let Some((conv, bn)) = &mut self.proj {
            conv.visit_params(&join(prefix, "proj_conv"), f);
            bn.visit_params(&join(prefix, "proj_bn"), f);
        }
    }
    fn visit_buffers(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut ArrayD<F>)) {
        self.bn1.visit_buffers(&join(prefix, "bn1"), f);
        self.bn2.visit_buffers(&join(prefix, "bn2"), f);
        if let Some((_, bn)) = &mut self.proj {
            bn.visit_buffers(&join(prefix, "proj_bn"), f);
        }
    }
}

/// Feature pyramid emitted by the backbone (strides 8, 16, 32).
pub struct Pyramid<F> {
    pub c3: Array4<F>,
    pub c4: Array4<F>,
    pub c5: Array4<F>,
}

/// Four stages of two residual blocks each; every stage halves the spatial
/// size. One parameter set serves both the scene and head passes.
pub struct Backbone<F> {
    stages: Vec<Vec<ResidualBlock<F>>>,
}

impl<F: Scalar> Backbone<F> {
    pub fn new(stem_channels: usize, widths: &[usize; 4], rng: &mut ChaCha8Rng) -> Self {
        let mut stages = Vec::with_capacity(4);
        let mut in_ch = stem_channels;
        for &out_ch in widths {
            stages.push(vec![
                ResidualBlock::new(in_ch, out_ch, 2, rng),
                ResidualBlock::new(out_ch, out_ch, 1, rng),
            ]);
            in_ch = out_ch;
        }
        Self { stages }
    }

    pub fn forward(&mut self, x: &Array4<F>, train: bool) -> Pyramid<F> {
        let mut cur = x.clone();
        let mut levels: Vec<Array4<F>> = Vec::with_capacity(4);
        for stage in &mut self.stages {
            for block in stage.iter_mut() {
                cur = block.forward(&cur, train);
            }
            levels.push(cur.clone());
        }
        let c5 = levels.pop().unwrap();
        let c4 = levels.pop().unwrap();
        let c3 = levels.pop().unwrap();
        Pyramid { c3, c4, c5 }
    }

    /// Backward with gradients injected at the pyramid levels; `g3`/`g4`
    /// may be absent for passes that only consumed C5.
    pub fn backward(
        &mut self,
        g3: Option<&Array4<F>>,
        g4: Option<&Array4<F>>,
        g5: &Array4<F>,
    ) -> Array4<F> {
        let mut grad = g5.clone();
        for (idx, stage) in self.stages.iter_mut().enumerate().rev() {
            for block in stage.iter_mut().rev() {
                grad = block.backward(&grad);
            }
            match idx {
                3 => {
                    if let Some(g4) = g4 {
                        grad = grad + g4;
                    }
                }
                2 => {
                    if let Some(g3) = g3 {
                        grad = grad + g3;
                    }
                }
                _ => {}
            }
        }
        grad
    }
}

impl<F: Scalar> HasParams<F> for Backbone<F> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param<F>)) {
        for (si, stage) in self.stages.iter_mut().enumerate() {
            for (bi, block) in stage.iter_mut().enumerate() {
                block.visit_params(&join(prefix, &format!("stage{}.block{bi}", si + 2)), f);
            }
        }
    }
    fn visit_buffers(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut ArrayD<F>)) {
        for (si, stage) in self.stages.iter_mut().enumerate() {
            for (bi, block) in stage.iter_mut().enumerate() {
                block.visit_buffers(&join(prefix, &format!("stage{}.block{bi}", si + 2)), f);
            }
        }
    }
}

/// Defocused detector inputs derived from the scene pyramid.
pub struct DetFeatures<F> {
    pub d3: Array4<F>,
    pub d4: Array4<F>,
    pub d5: Array4<F>,
}

/// The full specific-general-specific extractor.
pub struct SgsExtractor<F> {
    pub stem_scene: InputStem<F>,
    /// Absent when the shared-input-stem ablation is on.
    pub stem_head: Option<InputStem<F>>,
    pub backbone: Backbone<F>,
    pub phi_scene: Option<Conv2d<F>>,
    pub phi_head: Option<Conv2d<F>>,
    up3: Upsample<F>,
    up4: Upsample<F>,
    up5: Upsample<F>,
}

impl<F: Scalar> SgsExtractor<F> {
    pub fn new(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let [_, c3, c4, c5] = cfg.block_channels;
        let interp = cfg.ablation.interpolate_upsample;
        let r = cfg.defocus_ratio;
        let gaze = cfg.gaze_channels;
        Self {
            stem_scene: InputStem::new(cfg.stem_channels, rng),
            stem_head: (!cfg.ablation.shared_input_stem)
                .then(|| InputStem::new(cfg.stem_channels, rng)),
            backbone: Backbone::new(cfg.stem_channels, &cfg.block_channels, rng),
            phi_scene: (!cfg.ablation.no_gaze_specific)
                .then(|| Conv2d::new(c5, gaze, 1, 1, 0, true, rng)),
            phi_head: (!cfg.ablation.no_gaze_specific)
                .then(|| Conv2d::new(c5, gaze, 1, 1, 0, true, rng)),
            up3: Upsample::new(c3, r, interp, rng),
            up4: Upsample::new(c4, r, interp, rng),
            up5: Upsample::new(c5, r, interp, rng),
        }
    }

    /// Input-specific convolutions for the two inputs (Eq. 1). With the
    /// shared-stem ablation both run through one block.
    pub fn input_specific(
        &mut self,
        scene: &Array4<F>,
        head: &Array4<F>,
        train: bool,
    ) -> (Array4<F>, Array4<F>) {
        let s = self.stem_scene.forward(scene, train);
        let h = match &mut self.stem_head {
            Some(stem) => stem.forward(head, train),
            None => self.stem_scene.forward(head, train),
        };
        (s, h)
    }

    pub fn shared_backbone(&mut self, f: &Array4<F>, train: bool) -> Pyramid<F> {
        self.backbone.forward(f, train)
    }

    /// Object-specific features: every detector input level rearranged to
    /// double resolution at a quarter of the channels.
    pub fn detection_features(&mut self, pyr: &Pyramid<F>, train: bool) -> DetFeatures<F> {
        DetFeatures {
            d3: self.up3.forward(&pyr.c3, train),
            d4: self.up4.forward(&pyr.c4, train),
            d5: self.up5.forward(&pyr.c5, train),
        }
    }

    pub fn detection_features_backward(
        &mut self,
        g: &DetFeatures<F>,
    ) -> (Array4<F>, Array4<F>, Array4<F>) {
        // reverse of detection_features' forward order
        let g5 = self.up5.backward(&g.d5);
        let g4 = self.up4.backward(&g.d4);
        let g3 = self.up3.backward(&g.d3);
        (g3, g4, g5)
    }

    /// Gaze-specific output convolutions (Eq. 4); identity under the
    /// no-gaze-specific ablation.
    pub fn gaze_scene_feature(&mut self, c5: &Array4<F>, train: bool) -> Array4<F> {
        match &mut self.phi_scene {
            Some(conv) => conv.forward(c5, train),
            None => c5.clone(),
        }
    }

    pub fn gaze_head_feature(&mut self, c5: &Array4<F>, train: bool) -> Array4<F> {
        match &mut self.phi_head {
            Some(conv) => conv.forward(c5, train),
            None => c5.clone(),
        }
    }

    pub fn gaze_scene_feature_backward(&mut self, g: &Array4<F>) -> Array4<F> {
        match &mut self.phi_scene {
            Some(conv) => conv.backward(g),
            None => g.clone(),
        }
    }

    pub fn gaze_head_feature_backward(&mut self, g: &Array4<F>) -> Array4<F> {
        match &mut self.phi_head {
            Some(conv) => conv.backward(g),
            None => g.clone(),
        }
    }
}

impl<F: Scalar> HasParams<F> for SgsExtractor<F> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param<F>)) {
        self.stem_scene.visit_params(&join(prefix, "stem_scene"), f);
        if let Some(stem) = &mut self.stem_head {
            stem.visit_params(&join(prefix, "stem_head"), f);
        }
        self.backbone.visit_params(&join(prefix, "backbone"), f);
        if let Some(conv) = &mut self.phi_scene {
            conv.visit_params(&join(prefix, "phi_scene"), f);
        }
        if let Some(conv) = &mut self.phi_head {
            conv.visit_params(&join(prefix, "phi_head"), f);
        }
        self.up3.visit_params(&join(prefix, "up3"), f);
        self.up4.visit_params(&join(prefix, "up4"), f);
        self.up5.visit_params(&join(prefix, "up5"), f);
    }
    fn visit_buffers(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut ArrayD<F>)) {
        self.stem_scene.visit_buffers(&join(prefix, "stem_scene"), f);
        if let Some(stem) = &mut self.stem_head {
            stem.visit_buffers(&join(prefix, "stem_head"), f);
        }
        self.backbone.visit_buffers(&join(prefix, "backbone"), f);
    }
}

/// The traditional two-network baseline: separate backbones for scene and
/// head. Used only for parameter accounting comparisons.
pub struct TwoBackboneBaseline<F> {
    pub stem_scene: InputStem<F>,
    pub stem_head: InputStem<F>,
    pub backbone_scene: Backbone<F>,
    pub backbone_head: Backbone<F>,
    pub phi_scene: Option<Conv2d<F>>,
}

impl<F: Scalar> TwoBackboneBaseline<F> {
    pub fn new(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let c5 = cfg.block_channels[3];
        Self {
            stem_scene: InputStem::new(cfg.stem_channels, rng),
            stem_head: InputStem::new(cfg.stem_channels, rng),
            backbone_scene: Backbone::new(cfg.stem_channels, &cfg.block_channels, rng),
            backbone_head: Backbone::new(cfg.stem_channels, &cfg.block_channels, rng),
            phi_scene: (!cfg.ablation.no_gaze_specific)
                .then(|| Conv2d::new(c5, cfg.gaze_channels, 1, 1, 0, true, rng)),
        }
    }
}

impl<F: Scalar> HasParams<F> for TwoBackboneBaseline<F> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param<F>)) {
        self.stem_scene.visit_params(&join(prefix, "stem_scene"), f);
        self.stem_head.visit_params(&join(prefix, "stem_head"), f);
        self.backbone_scene
            .visit_params(&join(prefix, "backbone_scene"), f);
        self.backbone_head
            .visit_params(&join(prefix, "backbone_head"), f);
        if let Some(conv) = &mut self.phi_scene {
            conv.visit_params(&join(prefix, "phi_scene"), f);
        }
    }
}

/// Extractor variants for parameter accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtractorVariant {
    SgsShared,
    TwoBackboneBaseline,
}

/// Trainable parameter count of an extractor variant.
pub fn parameter_count(cfg: &ModelConfig, variant: ExtractorVariant) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    match variant {
        ExtractorVariant::SgsShared => {
            gop_nn::parameter_count(&mut SgsExtractor::<f32>::new(cfg, &mut rng))
        }
        ExtractorVariant::TwoBackboneBaseline => {
            gop_nn::parameter_count(&mut TwoBackboneBaseline::<f32>::new(cfg, &mut rng))
        }
    }
}
