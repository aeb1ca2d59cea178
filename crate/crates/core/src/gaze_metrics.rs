//! Gaze estimation metrics: heatmap AUC, L2 distance, angular error.

use ndarray::Array2;

use crate::{CoreError, GazeVector, Heatmap};

/// Area under the ROC curve, treating heatmap cells as confidence scores
/// for the binary labels in `gt`. Ties receive half credit (Mann-Whitney
/// convention), so a constant heatmap scores exactly 0.5.
pub fn gaze_auc(m: &Heatmap, gt: &Array2<bool>) -> Result<f64, CoreError> {
    if (m.height(), m.width()) != gt.dim() {
        let (h2, w2) = gt.dim();
        return Err(CoreError::GridMismatch {
            h1: m.height(),
            w1: m.width(),
            h2,
            w2,
        });
    }
    let positives = gt.iter().filter(|v| **v).count();
    let negatives = gt.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(CoreError::DegenerateAucLabels);
    }

    // Average ranks over ties, then the rank-sum statistic.
    let mut cells: Vec<(f64, bool)> = m
        .view()
        .iter()
        .copied()
        .zip(gt.iter().copied())
        .collect();
    cells.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let mut rank_sum_pos = 0.0;
    let mut start = 0;
    while start < cells.len() {
        let mut end = start;
        while end < cells.len() && cells[end].0 == cells[start].0 {
            end += 1;
        }
        // ranks are 1-based; tied values share the mean rank of their block
        let mean_rank = (start + 1 + end) as f64 / 2.0;
        for cell in &cells[start..end] {
            if cell.1 {
                rank_sum_pos += mean_rank;
            }
        }
        start = end;
    }

    let p = positives as f64;
    let n = negatives as f64;
    let u = rank_sum_pos - p * (p + 1.0) / 2.0;
    Ok(u / (p * n))
}

/// Euclidean distance between two points in normalized coordinates.
pub fn l2_distance(pred: (f64, f64), gt: (f64, f64)) -> f64 {
    ((pred.0 - gt.0).powi(2) + (pred.1 - gt.1).powi(2)).sqrt()
}

/// Angle in degrees between the two gaze directions, via the clamped
/// arccosine of the normalized dot product. Errors on zero-length vectors.
pub fn angular_error(pred: &GazeVector, gt: &GazeVector) -> Result<f64, CoreError> {
    let (px, py) = pred.direction();
    let (gx, gy) = gt.direction();
    let np = (px * px + py * py).sqrt();
    let ng = (gx * gx + gy * gy).sqrt();
    if np == 0.0 || ng == 0.0 {
        return Err(CoreError::ZeroLengthGazeVector);
    }
    let cos = ((px * gx + py * gy) / (np * ng)).clamp(-1.0, 1.0);
    Ok(cos.acos().to_degrees())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn auc_perfect_ranking() {
        let mut grid = Array2::zeros((4, 4));
        grid[(1, 2)] = 1.0;
        let m = Heatmap::from_array(grid).unwrap();
        let gt = Array2::from_shape_fn((4, 4), |(i, j)| (i, j) == (1, 2));
        assert_eq!(gaze_auc(&m, &gt).unwrap(), 1.0);
    }

    #[test]
    fn auc_constant_heatmap_is_chance() {
        let m = Heatmap::from_array(Array2::from_elem((4, 4), 0.3)).unwrap();
        let gt = Array2::from_shape_fn((4, 4), |(i, _)| i == 0);
        assert_eq!(gaze_auc(&m, &gt).unwrap(), 0.5);
    }

    #[test]
    fn auc_rejects_degenerate_labels() {
        let m = Heatmap::zeros(4, 4);
        let all_neg = Array2::from_elem((4, 4), false);
        assert!(matches!(
            gaze_auc(&m, &all_neg),
            Err(CoreError::DegenerateAucLabels)
        ));
    }

    #[test]
    fn auc_matches_pair_counting_on_small_grid() {
        // brute-force oracle: count concordant pairs, half credit for ties
        let vals = [
            [0.1, 0.9, 0.3, 0.3],
            [0.5, 0.2, 0.8, 0.1],
            [0.5, 0.6, 0.4, 0.2],
            [0.0, 0.3, 0.7, 0.9],
        ];
        let grid = Array2::from_shape_fn((4, 4), |(i, j)| vals[i][j]);
        let gt = Array2::from_shape_fn((4, 4), |(i, j)| (i + j) % 3 == 0);
        let m = Heatmap::from_array(grid.clone()).unwrap();

        let mut num = 0.0;
        let mut count = 0u32;
        for (pi, &pos) in gt.indexed_iter() {
            if !pos {
                continue;
            }
            for (ni, &neg_pos) in gt.indexed_iter() {
                if neg_pos {
                    continue;
                }
                count += 1;
                if grid[pi] > grid[ni] {
                    num += 1.0;
                } else if grid[pi] == grid[ni] {
                    num += 0.5;
                }
            }
        }
        let oracle = num / count as f64;
        assert!((gaze_auc(&m, &gt).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn distances_and_angles() {
        assert_eq!(l2_distance((0.5, 0.5), (0.5, 0.5)), 0.0);
        assert!((l2_distance((0.0, 0.0), (0.3, 0.4)) - 0.5).abs() < 1e-12);

        let o = (0.5, 0.5);
        let right = GazeVector::new(o, (1.0, 0.5));
        let left = GazeVector::new(o, (0.0, 0.5));
        let up = GazeVector::new(o, (0.5, 0.0));
        assert_eq!(angular_error(&right, &right).unwrap(), 0.0);
        assert!((angular_error(&right, &left).unwrap() - 180.0).abs() < 1e-9);
        assert!((angular_error(&right, &up).unwrap() - 90.0).abs() < 1e-9);

        let zero = GazeVector::new(o, o);
        assert!(matches!(
            angular_error(&zero, &right),
            Err(CoreError::ZeroLengthGazeVector)
        ));
    }
}
