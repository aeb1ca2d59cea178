//! Greedy per-category non-maximum suppression.

use crate::{iou, BoundingBox, CoreError};

/// Per-category greedy suppression by descending score, then a global
/// `top_k` cut. Every surviving pair within a category has IoU below
/// `iou_threshold`. Ties in score break toward the lower input index, so the
/// result is deterministic and, for distinct scores, independent of input
/// order.
pub fn nms(
    boxes: &[BoundingBox],
    iou_threshold: f64,
    top_k: usize,
) -> Result<Vec<BoundingBox>, CoreError> {
    if !(0.0 < iou_threshold && iou_threshold < 1.0) {
        return Err(CoreError::InvalidIouThreshold(iou_threshold));
    }
    if top_k == 0 {
        return Err(CoreError::InvalidInput("top_k must be at least 1".into()));
    }
    for (i, b) in boxes.iter().enumerate() {
        b.validate()?;
        if b.score.is_none() {
            return Err(CoreError::MissingScore(i));
        }
    }

    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| {
        let (sa, sb) = (boxes[a].score.unwrap(), boxes[b].score.unwrap());
        sb.partial_cmp(&sa).unwrap().then(a.cmp(&b))
    });

    let mut kept: Vec<usize> = Vec::new();
    for &i in &order {
        let suppressed = kept.iter().any(|&k| {
            boxes[k].category_id == boxes[i].category_id
                && iou(&boxes[k], &boxes[i]) >= iou_threshold
        });
        if !suppressed {
            kept.push(i);
        }
    }

    kept.truncate(top_k);
    Ok(kept.into_iter().map(|i| boxes[i]).collect())
}
