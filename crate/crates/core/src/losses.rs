//! Gaze-side training objectives: heatmap MSE, energy aggregation, and the
//! weighted total loss.

use ndarray::{Array2, ArrayView2};
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::heatmap::box_cells;
use crate::{BoundingBox, CoreError, ImageSize};

/// Guard for the mean-energy denominator; only reached by heatmaps whose
/// total energy underflows to zero.
const ENERGY_EPS: f64 = 1e-12;

/// Gaze loss configuration: Gaussian target shape and loss-term weights.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GazeLossConfig {
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub heatmap_height: usize,
    pub heatmap_width: usize,
    pub lambda_det: f64,
    pub lambda_gaze: f64,
    pub lambda_eng: f64,
}

impl Default for GazeLossConfig {
    fn default() -> Self {
        Self {
            sigma_x: 3.0,
            sigma_y: 3.0,
            heatmap_height: 64,
            heatmap_width: 64,
            lambda_det: 1.0,
            lambda_gaze: 1.0,
            lambda_eng: 1.0,
        }
    }
}

impl GazeLossConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.sigma_x <= 0.0 || self.sigma_y <= 0.0 {
            return Err(CoreError::InvalidInput("sigmas must be positive".into()));
        }
        if self.lambda_det < 0.0 || self.lambda_gaze < 0.0 || self.lambda_eng < 0.0 {
            return Err(CoreError::InvalidInput(
                "loss weights must be non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn gaussian_spec(&self) -> crate::heatmap::GaussianSpec {
        crate::heatmap::GaussianSpec {
            sigma_x: self.sigma_x,
            sigma_y: self.sigma_y,
            height: self.heatmap_height,
            width: self.heatmap_width,
        }
    }
}

/// Mean squared error between a predicted and a target heatmap.
pub fn gaze_mse_loss<F: Float>(
    m: &ArrayView2<'_, F>,
    t: &ArrayView2<'_, F>,
) -> Result<F, CoreError> {
    if m.dim() != t.dim() {
        let ((h1, w1), (h2, w2)) = (m.dim(), t.dim());
        return Err(CoreError::GridMismatch { h1, w1, h2, w2 });
    }
    let mut sum = F::zero();
    for (a, b) in m.iter().zip(t.iter()) {
        let d = *a - *b;
        sum = sum + d * d;
    }
    Ok(sum / F::from(m.len()).unwrap())
}

/// MSE plus its gradient with respect to the prediction: `2 (M - T) / (H W)`.
pub fn gaze_mse_loss_grad<F: Float>(
    m: &ArrayView2<'_, F>,
    t: &ArrayView2<'_, F>,
) -> Result<(F, Array2<F>), CoreError> {
    let loss = gaze_mse_loss(m, t)?;
    let scale = F::from(2.0).unwrap() / F::from(m.len()).unwrap();
    let mut grad = Array2::zeros(m.dim());
    for ((g, a), b) in grad.iter_mut().zip(m.iter()).zip(t.iter()) {
        *g = (*a - *b) * scale;
    }
    Ok((loss, grad))
}

/// Energy aggregation loss: `-E_b / E_I`, the negative ratio of the mean
/// energy inside the gaze box to the mean energy over the whole grid.
/// Always in `[-(H*W)/N, 0)` for non-negative heatmaps with positive energy,
/// and invariant under positive scaling of the heatmap.
pub fn energy_aggregation_loss<F: Float>(
    m: &ArrayView2<'_, F>,
    gaze_box: &BoundingBox,
    image_size: ImageSize,
) -> Result<F, CoreError> {
    Ok(energy_aggregation_loss_grad(m, gaze_box, image_size)?.0)
}

/// Energy aggregation loss with its gradient with respect to every cell.
///
/// With `S` the total energy, `N` the in-box cell count and `H*W` cells:
/// `dL/dM_ij = -[ij inside]/(N*E_I) + E_b/(E_I^2 * H * W)`.
pub fn energy_aggregation_loss_grad<F: Float>(
    m: &ArrayView2<'_, F>,
    gaze_box: &BoundingBox,
    image_size: ImageSize,
) -> Result<(F, Array2<F>), CoreError> {
    let (h, w) = m.dim();
    let region = box_cells(gaze_box, image_size, h, w)?;

    let mut total = 0.0f64;
    let mut box_sum = 0.0f64;
    for ((i, j), v) in m.indexed_iter() {
        let v = v.to_f64().unwrap();
        if !v.is_finite() || v < 0.0 {
            return Err(CoreError::InvalidHeatmapValues);
        }
        total += v;
        if region.contains(i, j) {
            box_sum += v;
        }
    }
    if total <= 0.0 {
        return Err(CoreError::ZeroEnergyHeatmap);
    }

    let n = region.cell_count() as f64;
    let cells = (h * w) as f64;
    let e_b = box_sum / n;
    let e_i = (total / cells).max(ENERGY_EPS);
    let loss = -e_b / e_i;

    let inside_term = -1.0 / (n * e_i);
    let outside_term = e_b / (e_i * e_i * cells);
    let grad = Array2::from_shape_fn((h, w), |(i, j)| {
        let g = if region.contains(i, j) {
            inside_term + outside_term
        } else {
            outside_term
        };
        F::from(g).unwrap()
    });
    Ok((F::from(loss).unwrap(), grad))
}

/// Weighted sum of the three loss terms. Errors on non-finite components.
pub fn total_loss(
    l_det: f64,
    l_gaze: f64,
    l_eng: f64,
    cfg: &GazeLossConfig,
) -> Result<f64, CoreError> {
    if !l_det.is_finite() {
        return Err(CoreError::NonFiniteLoss("l_det"));
    }
    if !l_gaze.is_finite() {
        return Err(CoreError::NonFiniteLoss("l_gaze"));
    }
    if !l_eng.is_finite() {
        return Err(CoreError::NonFiniteLoss("l_eng"));
    }
    Ok(cfg.lambda_det * l_det + cfg.lambda_gaze * l_gaze + cfg.lambda_eng * l_eng)
}
