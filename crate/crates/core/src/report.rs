//! Aggregate metric report for one evaluation run.

use serde::{Deserialize, Serialize};

use crate::CoreError;

/// Per-dataset metric aggregate. `wuoc_mean` is the gaze-object score under
/// predicted-heatmap selection; `wuoc_gt_gaze` (when present) is the same
/// protocol with the ground-truth heatmap doing the selecting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub auc: f64,
    pub l2_dist: f64,
    pub angular_err: f64,
    pub ap: f64,
    pub ap50: f64,
    pub ap75: f64,
    pub wuoc_mean: f64,
    pub sample_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wuoc_gt_gaze: Option<f64>,
}

impl MetricReport {
    pub fn validate(&self) -> Result<(), CoreError> {
        let fields = [
            ("auc", self.auc),
            ("l2_dist", self.l2_dist),
            ("angular_err", self.angular_err),
            ("ap", self.ap),
            ("ap50", self.ap50),
            ("ap75", self.ap75),
            ("wuoc_mean", self.wuoc_mean),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(CoreError::InvalidInput(format!("non-finite metric {name}")));
            }
        }
        if self.sample_count == 0 {
            return Err(CoreError::InvalidInput("empty metric report".into()));
        }
        Ok(())
    }
}
