use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
}

/// Ablation switches. Each builds a runnable model variant:
/// - `shared_input_stem`: one input convolution serves both scene and head
///   instead of two input-specific ones.
/// - `no_gaze_specific`: drop the gaze-specific output convolutions and feed
///   raw backbone features to the gaze branch.
/// - `interpolate_upsample`: replace every channel-to-space rearrangement
///   with a channel-compressing convolution followed by bilinear
///   interpolation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationFlags {
    pub shared_input_stem: bool,
    pub no_gaze_specific: bool,
    pub interpolate_upsample: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Square input resolution; must be divisible by 32.
    pub image_size: usize,
    pub stem_channels: usize,
    /// Channel widths of the four backbone stages (C2..C5).
    pub block_channels: [usize; 4],
    /// Width of the gaze-specific features and the gaze branch.
    pub gaze_channels: usize,
    /// Working width of the detection neck.
    pub det_channels: usize,
    pub attention_hidden: usize,
    pub defocus_ratio: usize,
    /// Anchor box sizes in pixels (width, height).
    pub anchors: Vec<(f64, f64)>,
    pub num_categories: usize,
    pub heatmap_size: usize,
    pub ablation: AblationFlags,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            image_size: 224,
            stem_channels: 16,
            block_channels: [16, 32, 64, 128],
            gaze_channels: 32,
            det_channels: 32,
            attention_hidden: 64,
            defocus_ratio: 2,
            anchors: vec![(12.0, 16.0), (19.0, 40.0), (28.0, 64.0)],
            num_categories: 24,
            heatmap_size: 64,
            ablation: AblationFlags::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |m: String| Err(ModelError::InvalidConfig(m));
        if self.image_size == 0 || self.image_size % 32 != 0 {
            return err(format!(
                "image_size {} must be a positive multiple of 32",
                self.image_size
            ));
        }
        if self.defocus_ratio < 2 {
            return err("defocus_ratio must be at least 2".into());
        }
        let r2 = self.defocus_ratio * self.defocus_ratio;
        for (i, &c) in self.block_channels.iter().enumerate() {
            if c == 0 {
                return err(format!("block_channels[{i}] must be positive"));
            }
            // C3..C5 feed the detector through the rearrangement
            if i >= 1 && c % r2 != 0 {
                return err(format!(
                    "block_channels[{i}] = {c} must be divisible by r^2 = {r2}"
                ));
            }
        }
        if self.stem_channels == 0 {
            return err("stem_channels must be positive".into());
        }
        if self.det_channels % r2 != 0 {
            return err(format!(
                "det_channels {} must be divisible by r^2 = {r2}",
                self.det_channels
            ));
        }
        if self.gaze_channels_effective() % 8 != 0 {
            return err(format!(
                "gaze channel width {} must be divisible by 8",
                self.gaze_channels_effective()
            ));
        }
        if self.anchors.is_empty() || self.anchors.iter().any(|&(w, h)| w <= 0.0 || h <= 0.0) {
            return err("anchors must be non-empty with positive sizes".into());
        }
        if self.num_categories == 0 {
            return err("num_categories must be positive".into());
        }
        if self.heatmap_size == 0 {
            return err("heatmap_size must be positive".into());
        }
        Ok(())
    }

    /// Gaze branch width; with `no_gaze_specific` the raw C5 width flows in.
    pub fn gaze_channels_effective(&self) -> usize {
        if self.ablation.no_gaze_specific {
            self.block_channels[3]
        } else {
            self.gaze_channels
        }
    }

    /// Spatial size of C5 (backbone stride 32).
    pub fn c5_size(&self) -> usize {
        self.image_size / 32
    }

    /// Spatial size and stride of the single detection grid
    /// (defocused C3 level, stride 4).
    pub fn grid_size(&self) -> usize {
        self.image_size / 4
    }

    pub fn grid_stride(&self) -> usize {
        4
    }

    /// Channels per anchor in the raw grid: 4 box offsets, 1 objectness,
    /// `num_categories` class logits.
    pub fn anchor_channels(&self) -> usize {
        5 + self.num_categories
    }

    pub fn grid_channels(&self) -> usize {
        self.anchors.len() * self.anchor_channels()
    }

    /// Heatmap spatial size before the final resize (stride-4 decode).
    pub fn pre_resize_heatmap(&self) -> usize {
        self.image_size / 4
    }
}
