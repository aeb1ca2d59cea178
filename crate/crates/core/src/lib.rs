//! Geometry, metric, and loss primitives for gaze object prediction.
//!
//! Everything in this crate is a pure function of its inputs: box algebra
//! (IoU, UoC, wUoC), NMS, average precision, gaze metrics (AUC, L2 distance,
//! angular error), heatmap energy pooling, the Gaussian ground-truth heatmap,
//! the energy aggregation loss, the channel-to-space `defocus` rearrangement
//! with its exact inverse, and a MAC-counting utility for cost comparisons.

pub mod ap;
pub mod bbox;
pub mod defocus;
mod error;
pub mod flops;
pub mod gaze_metrics;
pub mod heatmap;
pub mod losses;
pub mod nms;
pub mod records;
pub mod report;

pub use bbox::{iou, uoc, wuoc, BoundingBox, GazeVector};
pub use error::CoreError;
pub use heatmap::Heatmap;
pub use report::MetricReport;

/// Image size in pixels as `(width, height)`.
pub type ImageSize = (u32, u32);
