//! The gaze-object-prediction network: a specific-general-specific feature
//! extractor with one shared backbone, a single-scale anchor-based detection
//! head over channel-to-space rearranged features, and a gaze heatmap branch
//! that receives head-location cues only after the backbone.

pub mod config;
pub mod cost;
pub mod detect;
pub mod extractor;
pub mod gaze;
pub mod model;
pub mod upsample;

pub use config::{AblationFlags, ModelConfig, ModelError};
pub use model::{GopModel, ModelOutputs};
