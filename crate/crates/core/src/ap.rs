//! Average precision over per-image detections.

use std::collections::BTreeSet;

use crate::{iou, BoundingBox, CoreError};

/// AP at the standard reporting thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApScores {
    /// Mean over IoU thresholds 0.50:0.05:0.95.
    pub ap: f64,
    pub ap50: f64,
    pub ap75: f64,
}

/// 101-point interpolated average precision at one IoU threshold, averaged
/// over categories that have at least one ground-truth box.
///
/// `preds[i]` and `gts[i]` hold the detections and ground truth of image
/// `i`. Detections are matched greedily in descending score order; each
/// ground-truth box is matched at most once, to the detection that reaches
/// the highest IoU at or above the threshold.
pub fn average_precision(
    preds: &[Vec<BoundingBox>],
    gts: &[Vec<BoundingBox>],
    iou_threshold: f64,
) -> Result<f64, CoreError> {
    if preds.len() != gts.len() {
        return Err(CoreError::InvalidInput(format!(
            "prediction images ({}) and ground-truth images ({}) differ",
            preds.len(),
            gts.len()
        )));
    }
    for b in preds.iter().flatten() {
        b.validate()?;
        if b.score.is_none() {
            return Err(CoreError::MissingScore(0));
        }
    }

    let categories: BTreeSet<u32> = gts.iter().flatten().map(|g| g.category_id).collect();
    if categories.is_empty() {
        return Ok(0.0);
    }

    let mut total = 0.0;
    for &cat in &categories {
        total += category_ap(preds, gts, cat, iou_threshold);
    }
    Ok(total / categories.len() as f64)
}

/// AP / AP50 / AP75 in one pass.
pub fn ap_set(preds: &[Vec<BoundingBox>], gts: &[Vec<BoundingBox>]) -> Result<ApScores, CoreError> {
    let ap50 = average_precision(preds, gts, 0.50)?;
    let ap75 = average_precision(preds, gts, 0.75)?;
    let mut sum = 0.0;
    for k in 0..10 {
        let thr = 0.5 + 0.05 * k as f64;
        sum += average_precision(preds, gts, thr)?;
    }
    Ok(ApScores {
        ap: sum / 10.0,
        ap50,
        ap75,
    })
}

fn category_ap(
    preds: &[Vec<BoundingBox>],
    gts: &[Vec<BoundingBox>],
    category: u32,
    iou_threshold: f64,
) -> f64 {
    // (image, box index, score), globally sorted by descending score with a
    // deterministic tie-break.
    let mut dets: Vec<(usize, usize, f64)> = Vec::new();
    for (img, boxes) in preds.iter().enumerate() {
        for (bi, b) in boxes.iter().enumerate() {
            if b.category_id == category {
                dets.push((img, bi, b.score.unwrap()));
            }
        }
    }
    dets.sort_by(|a, b| {
        b.2.partial_cmp(&a.2)
            .unwrap()
            .then(a.0.cmp(&b.0))
            .then(a.1.cmp(&b.1))
    });

    let gt_indices: Vec<Vec<usize>> = gts
        .iter()
        .map(|boxes| {
            boxes
                .iter()
                .enumerate()
                .filter(|(_, g)| g.category_id == category)
                .map(|(i, _)| i)
                .collect()
        })
        .collect();
    let total_gt: usize = gt_indices.iter().map(Vec::len).sum();
    if total_gt == 0 {
        return 0.0;
    }

    let mut matched: Vec<Vec<bool>> = gts.iter().map(|g| vec![false; g.len()]).collect();
    let mut tp_flags = Vec::with_capacity(dets.len());
    for &(img, bi, _) in &dets {
        let det = &preds[img][bi];
        let mut best: Option<(usize, f64)> = None;
        for &gi in &gt_indices[img] {
            if matched[img][gi] {
                continue;
            }
            let overlap = iou(det, &gts[img][gi]);
            if overlap >= iou_threshold && best.is_none_or(|(_, b)| overlap > b) {
                best = Some((gi, overlap));
            }
        }
        match best {
            Some((gi, _)) => {
                matched[img][gi] = true;
                tp_flags.push(true);
            }
            None => tp_flags.push(false),
        }
    }

    interpolated_ap(&tp_flags, total_gt)
}

/// 101-point interpolation over the precision/recall curve.
fn interpolated_ap(tp_flags: &[bool], total_gt: usize) -> f64 {
    let mut curve = Vec::with_capacity(tp_flags.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for &is_tp in tp_flags {
        if is_tp {
            tp += 1;
        } else {
            fp += 1;
        }
        let recall = tp as f64 / total_gt as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        curve.push((recall, precision));
    }

    let mut sum = 0.0;
    for k in 0..=100 {
        let r = k as f64 / 100.0;
        let p = curve
            .iter()
            .filter(|(recall, _)| *recall >= r - 1e-12)
            .map(|(_, p)| *p)
            .fold(0.0, f64::max);
        sum += p;
    }
    sum / 101.0
}
