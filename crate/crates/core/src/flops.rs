//! Multiply-accumulate accounting for network stage lists.
//!
//! Costs are counted as MACs, one number per stage:
//! - convolution: `C_in * C_out * k^2 * H_out * W_out`
//! - deconvolution: `C_in * C_out * k^2 * H_in * W_in` (each input element
//!   is scattered over a `k^2` window)
//! - interpolation: one MAC per output element per kernel-support tap
//!   (bilinear support = 4)
//! - defocus: 0 (pure permutation)

use serde::{Deserialize, Serialize};

use crate::CoreError;

fn default_support() -> u64 {
    4
}

/// One stage of a network cost descriptor. Unknown `kind` tags are rejected
/// at parse time.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Stage {
    Convolution {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        in_channels: u64,
        out_channels: u64,
        kernel: u64,
        out_h: u64,
        out_w: u64,
    },
    Deconvolution {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        in_channels: u64,
        out_channels: u64,
        kernel: u64,
        in_h: u64,
        in_w: u64,
    },
    Interpolation {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        channels: u64,
        out_h: u64,
        out_w: u64,
        #[serde(default = "default_support")]
        kernel_support: u64,
    },
    Defocus {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        channels: u64,
        in_h: u64,
        in_w: u64,
        ratio: u64,
    },
}

impl Stage {
    pub fn macs(&self) -> u64 {
        match self {
            Stage::Convolution {
                in_channels,
                out_channels,
                kernel,
                out_h,
                out_w,
                ..
            } => in_channels * out_channels * kernel * kernel * out_h * out_w,
            Stage::Deconvolution {
                in_channels,
                out_channels,
                kernel,
                in_h,
                in_w,
                ..
            } => in_channels * out_channels * kernel * kernel * in_h * in_w,
            Stage::Interpolation {
                channels,
                out_h,
                out_w,
                kernel_support,
                ..
            } => kernel_support * channels * out_h * out_w,
            Stage::Defocus { .. } => 0,
        }
    }

    pub fn label(&self) -> String {
        let (name, kind) = match self {
            Stage::Convolution { name, .. } => (name, "convolution"),
            Stage::Deconvolution { name, .. } => (name, "deconvolution"),
            Stage::Interpolation { name, .. } => (name, "interpolation"),
            Stage::Defocus { name, .. } => (name, "defocus"),
        };
        name.clone().unwrap_or_else(|| kind.to_string())
    }
}

/// Per-stage MAC counts plus the total.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlopReport {
    pub total_macs: u64,
    pub per_stage: Vec<StageReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageReport {
    pub name: String,
    pub macs: u64,
}

pub fn flop_count(stages: &[Stage]) -> FlopReport {
    let per_stage: Vec<StageReport> = stages
        .iter()
        .map(|s| StageReport {
            name: s.label(),
            macs: s.macs(),
        })
        .collect();
    FlopReport {
        total_macs: per_stage.iter().map(|s| s.macs).sum(),
        per_stage,
    }
}

/// Parses a JSON stage list; unknown stage kinds fail with the serde error
/// naming the offending tag.
pub fn parse_stages(json: &str) -> Result<Vec<Stage>, CoreError> {
    serde_json::from_str(json).map_err(|e| CoreError::InvalidInput(format!("stage list: {e}")))
}
