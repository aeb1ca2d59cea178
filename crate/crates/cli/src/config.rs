//! Run configuration: one TOML or JSON document covering the model, the
//! dataset, the optimizer, the losses, and evaluation.

use std::path::{Path, PathBuf};

use gop_core::losses::GazeLossConfig;
use gop_data::SceneSpec;
use gop_model::ModelConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Environment variable prefixed to relative output directories.
pub const OUTPUT_ROOT_ENV: &str = "GOP_OUTPUT_ROOT";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    /// Toy default; the full-scale schedule is 100.
    pub epochs: usize,
    /// Overrides the epoch-derived step count when set.
    pub max_steps: Option<usize>,
    pub seed: u64,
    /// Random crop + color jitter, the two transformations kept.
    pub augment: bool,
    /// Checkpoint every N steps; 0 keeps only the final checkpoint.
    pub checkpoint_every: usize,
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            batch_size: 32,
            epochs: 20,
            max_steps: None,
            seed: 0,
            augment: true,
            checkpoint_every: 0,
            log_every: 10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub nms_iou: f64,
    pub top_k: usize,
    pub score_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            nms_iou: 0.3,
            top_k: 100,
            score_threshold: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub scene: SceneSpec,
    pub dataset_dir: PathBuf,
    pub output_dir: PathBuf,
    pub train: TrainConfig,
    pub loss: GazeLossConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            scene: SceneSpec::default(),
            dataset_dir: PathBuf::from("data/train"),
            output_dir: PathBuf::from("runs/default"),
            train: TrainConfig::default(),
            loss: GazeLossConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        let cfg: Self = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?,
            _ => toml::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.scene
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.loss
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if self.scene.image_size as usize != self.model.image_size {
            return Err(CliError::Config(format!(
                "scene image_size {} differs from model image_size {}",
                self.scene.image_size, self.model.image_size
            )));
        }
        if self.loss.heatmap_height != self.model.heatmap_size
            || self.loss.heatmap_width != self.model.heatmap_size
        {
            return Err(CliError::Config(
                "loss heatmap grid must match model heatmap_size".into(),
            ));
        }
        if self.scene.categories as usize != self.model.num_categories {
            return Err(CliError::Config(format!(
                "scene categories {} differ from model num_categories {}",
                self.scene.categories, self.model.num_categories
            )));
        }
        if self.train.lr <= 0.0 {
            return Err(CliError::Config("learning rate must be positive".into()));
        }
        if self.train.batch_size == 0 {
            return Err(CliError::Config("batch_size must be at least 1".into()));
        }
        if !(0.0 < self.eval.nms_iou && self.eval.nms_iou < 1.0) || self.eval.top_k == 0 {
            return Err(CliError::Config("bad NMS settings".into()));
        }
        Ok(())
    }

    /// Output directory, honoring the output-root environment variable for
    /// relative paths.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if self.output_dir.is_relative() => {
                PathBuf::from(root).join(&self.output_dir)
            }
            _ => self.output_dir.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_validates() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn toml_round_trip() {
        let cfg = RunConfig::default();
        let text = toml::to_string_pretty(&cfg).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back.train.batch_size, cfg.train.batch_size);
        assert_eq!(back.model, cfg.model);
    }

    #[test]
    fn mismatched_sizes_rejected() {
        let mut cfg = RunConfig::default();
        cfg.scene.image_size = 128;
        assert!(cfg.validate().is_err());
    }
}
