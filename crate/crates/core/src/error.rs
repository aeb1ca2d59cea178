use thiserror::Error;

/// Errors raised by the geometry and metric primitives.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid bounding box ({x1}, {y1}, {x2}, {y2}): {reason}")]
    InvalidBox {
        x1: f64,
        y1: f64,
        x2: f64,
        y2: f64,
        reason: &'static str,
    },

    #[error("score {0} outside [0, 1]")]
    InvalidScore(f64),

    #[error("box covers no cells after scaling to the {grid_w}x{grid_h} heatmap grid")]
    BoxCoversNoCells { grid_w: usize, grid_h: usize },

    #[error("cannot select a gaze object from an empty box list")]
    EmptyBoxList,

    #[error("box at index {0} carries no detection score")]
    MissingScore(usize),

    #[error("iou threshold {0} outside (0, 1)")]
    InvalidIouThreshold(f64),

    #[error("heatmap grids differ: {h1}x{w1} vs {h2}x{w2}")]
    GridMismatch {
        h1: usize,
        w1: usize,
        h2: usize,
        w2: usize,
    },

    #[error("AUC ground truth must contain at least one positive and one negative cell")]
    DegenerateAucLabels,

    #[error("gaze vector has zero length")]
    ZeroLengthGazeVector,

    #[error("heatmap carries no energy")]
    ZeroEnergyHeatmap,

    #[error("heatmap values must be finite and non-negative")]
    InvalidHeatmapValues,

    #[error("channel count {channels} not divisible by r^2 = {r_squared}")]
    ChannelsNotDivisible { channels: usize, r_squared: usize },

    #[error("spatial size {h}x{w} not divisible by r = {r}")]
    SpatialNotDivisible { h: usize, w: usize, r: usize },

    #[error("rearrangement ratio must be at least 2, got {0}")]
    InvalidRatio(usize),

    #[error("non-finite loss component: {0}")]
    NonFiniteLoss(&'static str),

    #[error("{0}")]
    InvalidInput(String),
}
