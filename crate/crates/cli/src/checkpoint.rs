//! Checkpoints: a flat name-to-tensor map plus optimizer state, versioned,
//! JSON-serialized with base64 little-endian f32 payloads so reloads are
//! bitwise exact.

use std::collections::BTreeMap;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use gop_model::GopModel;
use gop_nn::{Adam, HasParams};
use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::CliError;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorData {
    pub shape: Vec<usize>,
    pub data: String,
}

impl TensorData {
    fn from_array(a: &ArrayD<f32>) -> Self {
        let mut bytes = Vec::with_capacity(a.len() * 4);
        for v in a.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        Self {
            shape: a.shape().to_vec(),
            data: B64.encode(bytes),
        }
    }

    fn to_array(&self, name: &str) -> Result<ArrayD<f32>, CliError> {
        let bytes = B64
            .decode(&self.data)
            .map_err(|e| CliError::Checkpoint(format!("tensor {name}: {e}")))?;
        if bytes.len() != self.shape.iter().product::<usize>() * 4 {
            return Err(CliError::Checkpoint(format!(
                "tensor {name}: payload length does not match shape {:?}",
                self.shape
            )));
        }
        let values: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        ArrayD::from_shape_vec(self.shape.clone(), values)
            .map_err(|e| CliError::Checkpoint(format!("tensor {name}: {e}")))
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct OptimizerState {
    pub t: u64,
    pub m: BTreeMap<String, TensorData>,
    pub v: BTreeMap<String, TensorData>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub l_det: f64,
    pub l_gaze: f64,
    pub l_eng: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: RunConfig,
    pub step: usize,
    pub epoch: usize,
    pub params: BTreeMap<String, TensorData>,
    pub buffers: BTreeMap<String, TensorData>,
    pub optimizer: OptimizerState,
    pub metric_history: Vec<LossRecord>,
}

impl Checkpoint {
    pub fn capture(
        config: &RunConfig,
        model: &mut GopModel<f32>,
        adam: &Adam<f32>,
        step: usize,
        epoch: usize,
        metric_history: Vec<LossRecord>,
    ) -> Self {
        let mut params = BTreeMap::new();
        model.visit_params("", &mut |name, p| {
            params.insert(name, TensorData::from_array(&p.data));
        });
        let mut buffers = BTreeMap::new();
        model.visit_buffers("", &mut |name, b| {
            buffers.insert(name, TensorData::from_array(b));
        });
        let optimizer = OptimizerState {
            t: adam.t,
            m: adam
                .m
                .iter()
                .map(|(k, v)| (k.clone(), TensorData::from_array(v)))
                .collect(),
            v: adam
                .v
                .iter()
                .map(|(k, v)| (k.clone(), TensorData::from_array(v)))
                .collect(),
        };
        Self {
            format_version: FORMAT_VERSION,
            config: config.clone(),
            step,
            epoch,
            params,
            buffers,
            optimizer,
            metric_history,
        }
    }

    /// Rebuilds the model and optimizer this checkpoint was captured from.
    pub fn restore(&self) -> Result<(GopModel<f32>, Adam<f32>), CliError> {
        if self.format_version != FORMAT_VERSION {
            return Err(CliError::Checkpoint(format!(
                "format version {} unsupported (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        let mut model = GopModel::<f32>::new(&self.config.model, self.config.train.seed)?;
        let mut missing = Vec::new();
        model.visit_params("", &mut |name, p| {
            match self.params.get(&name) {
                Some(t) => match t.to_array(&name) {
                    Ok(a) if a.shape() == p.data.shape() => p.data = a,
                    Ok(a) => missing.push(format!(
                        "{name}: shape {:?} != {:?}",
                        a.shape(),
                        p.data.shape()
                    )),
                    Err(e) => missing.push(e.to_string()),
                },
                None => missing.push(format!("{name}: absent")),
            };
        });
        model.visit_buffers("", &mut |name, b| {
            match self.buffers.get(&name) {
                Some(t) => match t.to_array(&name) {
                    Ok(a) if a.shape() == b.shape() => *b = a,
                    Ok(_) => missing.push(format!("buffer {name}: shape mismatch")),
                    Err(e) => missing.push(e.to_string()),
                },
                None => missing.push(format!("buffer {name}: absent")),
            };
        });
        if !missing.is_empty() {
            return Err(CliError::Checkpoint(missing.join("; ")));
        }

        let mut adam = Adam::new(self.config.train.lr);
        adam.t = self.optimizer.t;
        for (k, t) in &self.optimizer.m {
            adam.m.insert(k.clone(), t.to_array(k)?);
        }
        for (k, t) in &self.optimizer.v {
            adam.v.insert(k.clone(), t.to_array(k)?);
        }
        Ok((model, adam))
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(CliError::io(parent))?;
        }
        let json = serde_json::to_string(self)
            .map_err(|e| CliError::Checkpoint(format!("serialize: {e}")))?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, json).map_err(CliError::io(&tmp))?;
        std::fs::rename(&tmp, path).map_err(CliError::io(path))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Checkpoint(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use gop_model::ModelConfig;
    use ndarray::Array4;

    fn tiny() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.model = ModelConfig {
            image_size: 64,
            stem_channels: 4,
            block_channels: [4, 8, 16, 32],
            gaze_channels: 8,
            det_channels: 8,
            attention_hidden: 8,
            num_categories: 6,
            heatmap_size: 16,
            ..ModelConfig::default()
        };
        cfg.scene.image_size = 64;
        cfg.scene.categories = 6;
        cfg.loss.heatmap_height = 16;
        cfg.loss.heatmap_width = 16;
        cfg
    }

    #[test]
    fn checkpoint_reload_reproduces_forward_bitwise() {
        let cfg = tiny();
        let mut model = GopModel::<f32>::new(&cfg.model, 5).unwrap();
        let adam = Adam::new(cfg.train.lr);

        let scene = Array4::from_shape_fn((1, 3, 64, 64), |(_, c, y, x)| {
            ((c + y + x) % 7) as f32 / 7.0 - 0.5
        });
        let mask = Array4::from_shape_fn(
            (1, 1, 64, 64),
            |(_, _, y, x)| if y > 40 && x > 20 && x < 33 { 1.0 } else { 0.0 },
        );
        let before = model.forward(&scene, &scene, &mask, false);

        let ckpt = Checkpoint::capture(&cfg, &mut model, &adam, 7, 1, Vec::new());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        ckpt.save(&path).unwrap();

        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded.step, 7);
        let (mut restored, _) = loaded.restore().unwrap();
        let after = restored.forward(&scene, &scene, &mask, false);
        assert_eq!(before.grid, after.grid);
        assert_eq!(before.heatmap, after.heatmap);
    }

    #[test]
    fn truncated_checkpoint_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(&path, "{\"format_version\": 1").unwrap();
        assert!(matches!(
            Checkpoint::load(&path),
            Err(CliError::Checkpoint(_))
        ));
    }
}
