//! Full network assembly: shared-backbone extraction, detection grid, and
//! gaze heatmap, with one backward pass threading gradients through both
//! backbone passes.

use gop_nn::param::join;
use gop_nn::{HasParams, Param, Scalar};
use ndarray::{Array4, ArrayD};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::detect::{DetectionNeck, GridMeta};
use crate::extractor::{DetFeatures, Pyramid, SgsExtractor};
use crate::gaze::GazeHead;
use crate::{ModelConfig, ModelError};

pub struct ModelOutputs<F> {
    /// Raw detection grid `(B, A*(5+C), H/4, W/4)`.
    pub grid: Array4<F>,
    /// Gaze heatmap in `(0, 1)`, shape `(B, 1, heatmap, heatmap)`.
    pub heatmap: Array4<F>,
}

pub struct GopModel<F> {
    pub cfg: ModelConfig,
    pub extractor: SgsExtractor<F>,
    pub detect: DetectionNeck<F>,
    pub gaze: GazeHead<F>,
}

impl<F: Scalar> GopModel<F> {
    pub fn new(cfg: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            cfg: cfg.clone(),
            extractor: SgsExtractor::new(cfg, &mut rng),
            detect: DetectionNeck::new(cfg, &mut rng),
            gaze: GazeHead::new(cfg, &mut rng),
        })
    }

    pub fn grid_meta(&self) -> GridMeta {
        GridMeta {
            anchors: self.cfg.anchors.clone(),
            stride: self.cfg.grid_stride(),
            num_categories: self.cfg.num_categories,
            image_size: self.cfg.image_size,
        }
    }

    /// Full forward pass. The backbone runs twice with one weight set:
    /// once on the scene stream, once on the head stream. The head-location
    /// mask feeds only the gaze branch, never the backbone.
    pub fn forward(
        &mut self,
        scene: &Array4<F>,
        head: &Array4<F>,
        mask: &Array4<F>,
        train: bool,
    ) -> ModelOutputs<F> {
        let (s_sp, h_sp) = self.extractor.input_specific(scene, head, train);
        let pyr = self.extractor.shared_backbone(&s_sp, train);
        let det_in = self.extractor.detection_features(&pyr, train);
        let f_scene = self.extractor.gaze_scene_feature(&pyr.c5, train);
        let head_pyr = self.extractor.shared_backbone(&h_sp, train);
        let f_head = self.extractor.gaze_head_feature(&head_pyr.c5, train);
        let grid = self.detect.forward(&det_in, train);
        let heatmap = self.gaze.forward(mask, &f_scene, &f_head, train);
        ModelOutputs { grid, heatmap }
    }

    /// Backward pass for [`Self::forward`] with `train = true`. Parameter
    /// gradients accumulate; inputs are data so their gradients are
    /// discarded.
    pub fn backward(&mut self, g_grid: &Array4<F>, g_heatmap: &Array4<F>) {
        let (g_f_scene, g_f_head) = self.gaze.backward(g_heatmap);
        let g_det_in = self.detect.backward(g_grid);

        let g_c5_head = self.extractor.gaze_head_feature_backward(&g_f_head);
        // head pass consumed only C5
        let g_h_sp = self.extractor.backbone.backward(None, None, &g_c5_head);

        let g_c5_gaze = self.extractor.gaze_scene_feature_backward(&g_f_scene);
        let (g_c3, g_c4, g_c5_det) = self.extractor.detection_features_backward(&g_det_in);
        let g_c5 = g_c5_det + g_c5_gaze;
        let g_s_sp = self
            .extractor
            .backbone
            .backward(Some(&g_c3), Some(&g_c4), &g_c5);

        // stems last, mirroring input_specific; with a shared stem the head
        // pass was pushed second, so it must pop first
        match &mut self.extractor.stem_head {
            Some(stem) => {
                let _ = stem.backward(&g_h_sp);
                let _ = self.extractor.stem_scene.backward(&g_s_sp);
            }
            None => {
                let _ = self.extractor.stem_scene.backward(&g_h_sp);
                let _ = self.extractor.stem_scene.backward(&g_s_sp);
            }
        }
    }

    /// Scene-stream pyramid only, cache-free; for inspection and tests.
    pub fn scene_pyramid(&mut self, scene: &Array4<F>) -> Pyramid<F> {
        let zeros_head = scene.clone();
        let (s_sp, _) = self.extractor.input_specific(scene, &zeros_head, false);
        self.extractor.shared_backbone(&s_sp, false)
    }

    /// Rearranged detector inputs for a scene, cache-free.
    pub fn scene_det_features(&mut self, scene: &Array4<F>) -> DetFeatures<F> {
        let pyr = self.scene_pyramid(scene);
        self.extractor.detection_features(&pyr, false)
    }
}

impl<F: Scalar> HasParams<F> for GopModel<F> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param<F>)) {
        self.extractor.visit_params(&join(prefix, "extractor"), f);
        self.detect.visit_params(&join(prefix, "detect"), f);
        self.gaze.visit_params(&join(prefix, "gaze"), f);
    }
    fn visit_buffers(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut ArrayD<F>)) {
        self.extractor.visit_buffers(&join(prefix, "extractor"), f);
        self.detect.visit_buffers(&join(prefix, "detect"), f);
        self.gaze.visit_buffers(&join(prefix, "gaze"), f);
    }
}
