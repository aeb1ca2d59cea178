//! Heatmap grids, box-energy pooling, and the gaze-object selection rule.

use ndarray::{Array2, ArrayView2};
use num_traits::Float;

use crate::{BoundingBox, CoreError, ImageSize};

/// 2-D non-negative grid indexed `[row, col]` = `[y, x]`. Holds both
/// predicted gaze heatmaps and ground-truth targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    data: Array2<f64>,
}

impl Heatmap {
    /// Wraps a grid, rejecting negative or non-finite cells.
    pub fn from_array(data: Array2<f64>) -> Result<Self, CoreError> {
        if data.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(CoreError::InvalidHeatmapValues);
        }
        Ok(Self { data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            data: Array2::zeros((height, width)),
        }
    }

    pub fn height(&self) -> usize {
        self.data.nrows()
    }

    pub fn width(&self) -> usize {
        self.data.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.data
    }

    /// Cell with the largest value; first in row-major order on ties.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (0, 0);
        let mut best_v = f64::NEG_INFINITY;
        for ((i, j), &v) in self.data.indexed_iter() {
            if v > best_v {
                best_v = v;
                best = (i, j);
            }
        }
        best
    }

    /// Center of the peak cell in normalized `(x, y)` image coordinates.
    pub fn argmax_point(&self) -> (f64, f64) {
        let (i, j) = self.argmax();
        (
            (j as f64 + 0.5) / self.width() as f64,
            (i as f64 + 0.5) / self.height() as f64,
        )
    }
}

/// Inclusive-exclusive cell index range on a heatmap grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellRegion {
    pub y0: usize,
    pub y1: usize,
    pub x0: usize,
    pub x1: usize,
}

impl CellRegion {
    pub fn cell_count(&self) -> usize {
        (self.y1 - self.y0) * (self.x1 - self.x0)
    }

    pub fn contains(&self, y: usize, x: usize) -> bool {
        y >= self.y0 && y < self.y1 && x >= self.x0 && x < self.x1
    }
}

/// Cells of a `grid_h x grid_w` grid whose centers fall inside `b` after
/// scaling the box from image coordinates onto the grid.
///
/// Cell `(i, j)` has center `(j + 0.5, i + 0.5)` in grid coordinates;
/// membership is half-open: `x1 <= cx < x2`. Errors when no cell center is
/// covered, which signals a box smaller than one heatmap cell.
pub fn box_cells(
    b: &BoundingBox,
    image_size: ImageSize,
    grid_h: usize,
    grid_w: usize,
) -> Result<CellRegion, CoreError> {
    b.validate()?;
    let sx = grid_w as f64 / image_size.0 as f64;
    let sy = grid_h as f64 / image_size.1 as f64;
    let x0 = ((b.x1 * sx - 0.5).ceil().max(0.0)) as usize;
    let x1 = ((b.x2 * sx - 0.5).ceil().min(grid_w as f64)).max(0.0) as usize;
    let y0 = ((b.y1 * sy - 0.5).ceil().max(0.0)) as usize;
    let y1 = ((b.y2 * sy - 0.5).ceil().min(grid_h as f64)).max(0.0) as usize;
    if x0 >= x1 || y0 >= y1 {
        return Err(CoreError::BoxCoversNoCells { grid_w, grid_h });
    }
    Ok(CellRegion { y0, y1, x0, x1 })
}

/// Mean of the heatmap cells whose centers fall inside `b` (the box-energy
/// pooling used by both the energy aggregation loss and the gaze-object
/// selection rule). Generic over the element type so the f32 training path
/// and the f64 evaluation path share one implementation.
pub fn box_mean_energy<F: Float>(
    m: &ArrayView2<'_, F>,
    b: &BoundingBox,
    image_size: ImageSize,
) -> Result<F, CoreError> {
    let (h, w) = m.dim();
    let region = box_cells(b, image_size, h, w)?;
    let mut sum = F::zero();
    for i in region.y0..region.y1 {
        for j in region.x0..region.x1 {
            sum = sum + m[(i, j)];
        }
    }
    Ok(sum / F::from(region.cell_count()).unwrap())
}

/// Index of the box with the largest mean heatmap energy. Ties break toward
/// the higher detection score, then the lower index.
pub fn select_gaze_object(
    m: &Heatmap,
    boxes: &[BoundingBox],
    image_size: ImageSize,
) -> Result<usize, CoreError> {
    if boxes.is_empty() {
        return Err(CoreError::EmptyBoxList);
    }
    let view = m.view();
    let mut best: Option<(usize, f64, f64)> = None;
    for (idx, b) in boxes.iter().enumerate() {
        let energy = box_mean_energy(&view, b, image_size)?;
        let score = b.score.unwrap_or(0.0);
        let better = match best {
            None => true,
            Some((_, be, bs)) => energy > be || (energy == be && score > bs),
        };
        if better {
            best = Some((idx, energy, score));
        }
    }
    Ok(best.expect("non-empty box list").0)
}

/// Shape of the Gaussian ground-truth heatmap.
#[derive(Debug, Clone, Copy)]
pub struct GaussianSpec {
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub height: usize,
    pub width: usize,
}

impl Default for GaussianSpec {
    fn default() -> Self {
        Self {
            sigma_x: 3.0,
            sigma_y: 3.0,
            height: 64,
            width: 64,
        }
    }
}

impl GaussianSpec {
    /// Integer grid cell the normalized gaze point `q` quantizes to.
    pub fn center_cell(&self, q: (f64, f64)) -> (usize, usize) {
        let cx = ((q.0 * self.width as f64).floor() as isize).clamp(0, self.width as isize - 1);
        let cy = ((q.1 * self.height as f64).floor() as isize).clamp(0, self.height as isize - 1);
        (cy as usize, cx as usize)
    }
}

/// Ground-truth heatmap: an isotropic Gaussian centered on the quantized
/// gaze cell, normalized so the peak is exactly 1.
pub fn gaussian_gt_heatmap(q: (f64, f64), spec: &GaussianSpec) -> Heatmap {
    let (cy, cx) = spec.center_cell(q);
    let mut data = Array2::zeros((spec.height, spec.width));
    let (sx2, sy2) = (spec.sigma_x * spec.sigma_x, spec.sigma_y * spec.sigma_y);
    for i in 0..spec.height {
        for j in 0..spec.width {
            let dx = j as f64 - cx as f64;
            let dy = i as f64 - cy as f64;
            // Normalizing by the peak cancels the 1/(2*pi*sx*sy) factor.
            data[(i, j)] = (-0.5 * (dx * dx / sx2 + dy * dy / sy2)).exp();
        }
    }
    Heatmap { data }
}

/// Binary AUC target: cells within three standard deviations of the
/// quantized gaze cell are positive.
pub fn binarize_gaze_target(q: (f64, f64), spec: &GaussianSpec) -> Array2<bool> {
    let (cy, cx) = spec.center_cell(q);
    let (rx2, ry2) = (
        (3.0 * spec.sigma_x).powi(2),
        (3.0 * spec.sigma_y).powi(2),
    );
    Array2::from_shape_fn((spec.height, spec.width), |(i, j)| {
        let dx = j as f64 - cx as f64;
        let dy = i as f64 - cy as f64;
        dx * dx / rx2 + dy * dy / ry2 <= 1.0
    })
}
