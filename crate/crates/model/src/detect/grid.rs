//! Anchor grid decoding, target assignment, and the detection loss
//! (classification BCE + objectness BCE + CIoU regression).

use gop_core::{BoundingBox, CoreError};
use gop_nn::{math, Scalar};
use ndarray::{Array4, ArrayView3};

use super::ciou::{ciou_loss_grad, CenterBox};

/// Geometry of the single-scale detection grid.
#[derive(Debug, Clone)]
pub struct GridMeta {
    pub anchors: Vec<(f64, f64)>,
    pub stride: usize,
    pub num_categories: usize,
    pub image_size: usize,
}

impl GridMeta {
    pub fn anchor_channels(&self) -> usize {
        5 + self.num_categories
    }

    pub fn grid_size(&self) -> usize {
        self.image_size / self.stride
    }
}

/// Anchors above this IoU with any ground-truth box are excluded from the
/// negative objectness targets unless they are the assigned positive.
pub const IGNORE_IOU: f64 = 0.5;

/// Decodes one image's raw grid into scored boxes:
/// center `(cell + sigmoid(tx, ty)) * stride`, size `anchor * exp(tw, th)`,
/// score `sigmoid(obj) * max_c sigmoid(s_c)`, clipped to the image.
pub fn decode_boxes<F: Scalar>(
    grid: &ArrayView3<'_, F>,
    meta: &GridMeta,
    score_threshold: f64,
) -> Result<Vec<BoundingBox>, CoreError> {
    let (channels, gh, gw) = grid.dim();
    let ac = meta.anchor_channels();
    if channels != meta.anchors.len() * ac {
        return Err(CoreError::InvalidInput(format!(
            "grid has {channels} channels, expected {}",
            meta.anchors.len() * ac
        )));
    }
    if grid.iter().any(|v| !v.to_f64_lossy().is_finite()) {
        return Err(CoreError::InvalidInput("non-finite logits".into()));
    }
    let stride = meta.stride as f64;
    let img = (meta.image_size as u32, meta.image_size as u32);
    let mut out = Vec::new();
    for (a, &(aw, ah)) in meta.anchors.iter().enumerate() {
        let base = a * ac;
        for gy in 0..gh {
            for gx in 0..gw {
                let at = |k: usize| grid[(base + k, gy, gx)].to_f64_lossy();
                let x = (gx as f64 + sigmoid64(at(0))) * stride;
                let y = (gy as f64 + sigmoid64(at(1))) * stride;
                let w = aw * at(2).exp();
                let h = ah * at(3).exp();
                let obj = sigmoid64(at(4));
                let mut best_c = 0usize;
                let mut best_s = f64::NEG_INFINITY;
                for c in 0..meta.num_categories {
                    let s = at(5 + c);
                    if s > best_s {
                        best_s = s;
                        best_c = c;
                    }
                }
                let score = obj * sigmoid64(best_s);
                if score < score_threshold {
                    continue;
                }
                let raw = BoundingBox {
                    x1: x - w / 2.0,
                    y1: y - h / 2.0,
                    x2: x + w / 2.0,
                    y2: y + h / 2.0,
                    category_id: best_c as u32,
                    score: Some(score),
                };
                if let Some(clipped) = raw.clip(img) {
                    out.push(clipped);
                }
            }
        }
    }
    Ok(out)
}

fn sigmoid64(x: f64) -> f64 {
    math::sigmoid(x)
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Inverse of the decode transform for one ground-truth box on its assigned
/// anchor/cell: returns `(tx, ty, tw, th)`.
pub fn encode_box(gt: CenterBox, anchor: (f64, f64), cell: (usize, usize), stride: usize) -> [f64; 4] {
    let [x, y, w, h] = gt;
    let s = stride as f64;
    [
        logit((x / s - cell.0 as f64).clamp(1e-6, 1.0 - 1e-6)),
        logit((y / s - cell.1 as f64).clamp(1e-6, 1.0 - 1e-6)),
        (w / anchor.0).ln(),
        (h / anchor.1).ln(),
    ]
}

/// One positive anchor assignment.
#[derive(Debug, Clone)]
pub struct PositiveAnchor {
    pub anchor: usize,
    pub gy: usize,
    pub gx: usize,
    pub gt: CenterBox,
    pub class: usize,
}

/// Per-image detection targets.
#[derive(Debug, Clone, Default)]
pub struct Targets {
    pub positives: Vec<PositiveAnchor>,
    /// `(anchor, gy, gx)` triples excluded from the objectness loss.
    pub ignored: Vec<(usize, usize, usize)>,
}

/// Shape-only IoU of two sizes sharing a center.
fn shape_iou(w1: f64, h1: f64, w2: f64, h2: f64) -> f64 {
    let inter = w1.min(w2) * h1.min(h2);
    inter / (w1 * h1 + w2 * h2 - inter)
}

/// Assigns every ground-truth box to the best shape-matching anchor at its
/// center cell. Unassigned anchors whose prior box (placed at the cell
/// center) overlaps any ground truth above [`IGNORE_IOU`] are marked
/// ignored.
pub fn assign_targets(gts: &[BoundingBox], meta: &GridMeta) -> Targets {
    let g = meta.grid_size();
    let stride = meta.stride as f64;
    let mut targets = Targets::default();
    let mut taken = std::collections::HashSet::new();

    for gt in gts {
        let (cx, cy) = gt.center();
        let (w, h) = (gt.width(), gt.height());
        let gx = ((cx / stride) as usize).min(g - 1);
        let gy = ((cy / stride) as usize).min(g - 1);
        let mut order: Vec<usize> = (0..meta.anchors.len()).collect();
        order.sort_by(|&a, &b| {
            let ia = shape_iou(w, h, meta.anchors[a].0, meta.anchors[a].1);
            let ib = shape_iou(w, h, meta.anchors[b].0, meta.anchors[b].1);
            ib.partial_cmp(&ia).unwrap().then(a.cmp(&b))
        });
        for a in order {
            if taken.insert((a, gy, gx)) {
                targets.positives.push(PositiveAnchor {
                    anchor: a,
                    gy,
                    gx,
                    gt: [cx, cy, w, h],
                    class: gt.category_id as usize,
                });
                break;
            }
        }
    }

    // ignore band: anchor priors near a ground-truth box but not assigned
    let max_aw = meta.anchors.iter().map(|a| a.0).fold(0.0, f64::max);
    let max_ah = meta.anchors.iter().map(|a| a.1).fold(0.0, f64::max);
    let mut ignored = std::collections::HashSet::new();
    for gt in gts {
        let x_lo = (((gt.x1 - max_aw) / stride).floor().max(0.0)) as usize;
        let x_hi = (((gt.x2 + max_aw) / stride).ceil() as usize).min(g);
        let y_lo = (((gt.y1 - max_ah) / stride).floor().max(0.0)) as usize;
        let y_hi = (((gt.y2 + max_ah) / stride).ceil() as usize).min(g);
        for gy in y_lo..y_hi {
            for gx in x_lo..x_hi {
                let ccx = (gx as f64 + 0.5) * stride;
                let ccy = (gy as f64 + 0.5) * stride;
                for (a, &(aw, ah)) in meta.anchors.iter().enumerate() {
                    if taken.contains(&(a, gy, gx)) || ignored.contains(&(a, gy, gx)) {
                        continue;
                    }
                    let prior = BoundingBox {
                        x1: ccx - aw / 2.0,
                        y1: ccy - ah / 2.0,
                        x2: ccx + aw / 2.0,
                        y2: ccy + ah / 2.0,
                        category_id: 0,
                        score: None,
                    };
                    if gop_core::iou(&prior, gt) > IGNORE_IOU {
                        ignored.insert((a, gy, gx));
                    }
                }
            }
        }
    }
    targets.ignored = ignored.into_iter().collect();
    targets.ignored.sort_unstable();
    targets
}

/// Loss components, each already normalized.
#[derive(Debug, Clone, Copy, Default)]
pub struct DetLoss {
    pub total: f64,
    pub cls: f64,
    pub obj: f64,
    pub reg: f64,
    pub num_positives: usize,
}

/// Detection loss over a batch of raw grids, with its gradient.
///
/// Classification: BCE over the class logits of positive anchors, averaged
/// over classes (the `1/(C+1)` factor) and positives. Objectness: BCE over
/// all non-ignored anchors with 0/1 targets, averaged. Regression: CIoU on
/// positives through the decode transform, averaged.
pub fn detection_loss<F: Scalar>(
    grid: &Array4<F>,
    targets: &[Targets],
    meta: &GridMeta,
) -> (DetLoss, Array4<F>) {
    let (batch, _, gh, gw) = grid.dim();
    assert_eq!(batch, targets.len(), "one target set per image");
    let ac = meta.anchor_channels();
    let num_anchors = meta.anchors.len();
    let stride = meta.stride as f64;

    let total_pos: usize = targets.iter().map(|t| t.positives.len()).sum();
    let total_obj: usize = batch * num_anchors * gh * gw
        - targets.iter().map(|t| t.ignored.len()).sum::<usize>();
    let obj_norm = 1.0 / (total_obj.max(1) as f64);
    let pos_norm = if total_pos > 0 {
        1.0 / total_pos as f64
    } else {
        0.0
    };
    let cls_norm = pos_norm / meta.num_categories as f64;

    let mut grad = Array4::<F>::zeros(grid.raw_dim());
    let mut loss = DetLoss {
        num_positives: total_pos,
        ..Default::default()
    };

    for (b, target) in targets.iter().enumerate() {
        let ignored: std::collections::HashSet<(usize, usize, usize)> =
            target.ignored.iter().copied().collect();
        let positive: std::collections::HashMap<(usize, usize, usize), &PositiveAnchor> = target
            .positives
            .iter()
            .map(|p| ((p.anchor, p.gy, p.gx), p))
            .collect();

        // objectness over the full grid
        for a in 0..num_anchors {
            let obj_ch = a * ac + 4;
            for gy in 0..gh {
                for gx in 0..gw {
                    let key = (a, gy, gx);
                    let is_pos = positive.contains_key(&key);
                    if !is_pos && ignored.contains(&key) {
                        continue;
                    }
                    let z = grid[(b, obj_ch, gy, gx)].to_f64_lossy();
                    let y = if is_pos { 1.0 } else { 0.0 };
                    let (l, dz) = math::bce_with_logit(z, y);
                    loss.obj += l * obj_norm;
                    grad[(b, obj_ch, gy, gx)] += F::cast(dz * obj_norm);
                }
            }
        }

        // classification and regression on positives
        for p in &target.positives {
            let base = p.anchor * ac;
            for c in 0..meta.num_categories {
                let ch = base + 5 + c;
                let z = grid[(b, ch, p.gy, p.gx)].to_f64_lossy();
                let y = if c == p.class { 1.0 } else { 0.0 };
                let (l, dz) = math::bce_with_logit(z, y);
                loss.cls += l * cls_norm;
                grad[(b, ch, p.gy, p.gx)] += F::cast(dz * cls_norm);
            }

            let (aw, ah) = meta.anchors[p.anchor];
            let tx = grid[(b, base, p.gy, p.gx)].to_f64_lossy();
            let ty = grid[(b, base + 1, p.gy, p.gx)].to_f64_lossy();
            let tw = grid[(b, base + 2, p.gy, p.gx)].to_f64_lossy();
            let th = grid[(b, base + 3, p.gy, p.gx)].to_f64_lossy();
            let sx = sigmoid64(tx);
            let sy = sigmoid64(ty);
            let pred: CenterBox = [
                (p.gx as f64 + sx) * stride,
                (p.gy as f64 + sy) * stride,
                aw * tw.exp(),
                ah * th.exp(),
            ];
            let (terms, dbox) = ciou_loss_grad(pred, p.gt);
            loss.reg += terms.loss * pos_norm;
            // chain through the decode transform
            let dt = [
                dbox[0] * stride * sx * (1.0 - sx),
                dbox[1] * stride * sy * (1.0 - sy),
                dbox[2] * pred[2],
                dbox[3] * pred[3],
            ];
            for (k, d) in dt.iter().enumerate() {
                grad[(b, base + k, p.gy, p.gx)] += F::cast(d * pos_norm);
            }
        }
    }

    loss.total = loss.cls + loss.obj + loss.reg;
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    fn meta() -> GridMeta {
        GridMeta {
            anchors: vec![(12.0, 16.0), (19.0, 40.0), (28.0, 64.0)],
            stride: 4,
            num_categories: 4,
            image_size: 64,
        }
    }

    #[test]
    fn decode_neutral_logits() {
        let m = meta();
        let grid = Array3::<f64>::zeros((3 * m.anchor_channels(), 1, 1));
        let tiny = GridMeta {
            image_size: 4,
            ..m
        };
        let boxes = decode_boxes(&grid.view(), &tiny, 0.0).unwrap();
        // tx = ty = 0 puts the center half a stride into the cell,
        // tw = th = 0 reproduces the anchor size (clipped to the image)
        assert_eq!(boxes.len(), 3);
        let b = &boxes[0];
        let unclipped_x1: f64 = 2.0 - 6.0;
        assert_eq!(b.x1, unclipped_x1.max(0.0));
        assert!((b.score.unwrap() - 0.25).abs() < 1e-9);
    }

    #[test]
    fn decode_rejects_non_finite() {
        let m = meta();
        let mut grid = Array3::<f64>::zeros((3 * m.anchor_channels(), 16, 16));
        grid[(0, 0, 0)] = f64::NAN;
        assert!(decode_boxes(&grid.view(), &m, 0.0).is_err());
    }

    #[test]
    fn encode_decode_round_trip() {
        let m = meta();
        let gt = BoundingBox::new(10.0, 21.0, 24.0, 55.0, 2).unwrap();
        let targets = assign_targets(std::slice::from_ref(&gt), &m);
        assert_eq!(targets.positives.len(), 1);
        let p = &targets.positives[0];
        let t = encode_box(p.gt, m.anchors[p.anchor], (p.gx, p.gy), m.stride);

        let mut grid = Array3::<f64>::zeros((3 * m.anchor_channels(), 16, 16));
        let base = p.anchor * m.anchor_channels();
        for (k, v) in t.iter().enumerate() {
            grid[(base + k, p.gy, p.gx)] = *v;
        }
        // make this anchor's score dominate
        grid[(base + 4, p.gy, p.gx)] = 40.0;
        grid[(base + 5 + p.class, p.gy, p.gx)] = 40.0;
        let boxes = decode_boxes(&grid.view(), &m, 0.9).unwrap();
        assert_eq!(boxes.len(), 1);
        let b = &boxes[0];
        assert!((b.x1 - gt.x1).abs() < 1e-5, "x1 {} vs {}", b.x1, gt.x1);
        assert!((b.y1 - gt.y1).abs() < 1e-5);
        assert!((b.x2 - gt.x2).abs() < 1e-5);
        assert!((b.y2 - gt.y2).abs() < 1e-5);
        assert_eq!(b.category_id, 2);
    }

    #[test]
    fn assignment_picks_best_shape_anchor() {
        let m = meta();
        // tall 20x44 box matches anchor (19, 40) best
        let gt = BoundingBox::new(20.0, 10.0, 40.0, 54.0, 0).unwrap();
        let targets = assign_targets(&[gt], &m);
        assert_eq!(targets.positives[0].anchor, 1);
        assert_eq!(targets.positives[0].gx, 7); // center 30/4
        assert_eq!(targets.positives[0].gy, 8); // center 32/4
    }

    #[test]
    fn perfect_logits_reach_zero_loss() {
        let m = meta();
        let gt = BoundingBox::new(10.0, 21.0, 24.0, 55.0, 1).unwrap();
        let targets = assign_targets(std::slice::from_ref(&gt), &m);
        let p = targets.positives[0].clone();
        let g = m.grid_size();
        let mut grid = Array4::<f64>::zeros((1, 3 * m.anchor_channels(), g, g));
        // strongly negative objectness everywhere, then overwrite the positive
        for a in 0..3 {
            for gy in 0..g {
                for gx in 0..g {
                    grid[(0, a * m.anchor_channels() + 4, gy, gx)] = -40.0;
                }
            }
        }
        let t = encode_box(p.gt, m.anchors[p.anchor], (p.gx, p.gy), m.stride);
        let base = p.anchor * m.anchor_channels();
        for (k, v) in t.iter().enumerate() {
            grid[(0, base + k, p.gy, p.gx)] = *v;
        }
        grid[(0, base + 4, p.gy, p.gx)] = 40.0;
        for c in 0..m.num_categories {
            grid[(0, base + 5 + c, p.gy, p.gx)] = if c == p.class { 40.0 } else { -40.0 };
        }
        let (loss, _) = detection_loss(&grid, &[targets], &m);
        assert!(loss.total.abs() < 1e-8, "loss = {:?}", loss);
    }

    #[test]
    fn empty_image_trains_objectness_only() {
        let m = meta();
        let g = m.grid_size();
        let grid = Array4::<f64>::zeros((1, 3 * m.anchor_channels(), g, g));
        let (loss, grad) = detection_loss(&grid, &[Targets::default()], &m);
        assert_eq!(loss.cls, 0.0);
        assert_eq!(loss.reg, 0.0);
        // all-negative targets on zero logits: BCE = ln 2 per anchor
        assert!((loss.obj - (2.0f64).ln()).abs() < 1e-9);
        assert!(loss.total > 0.0);
        // gradient only on objectness channels
        for a in 0..3 {
            let base = a * m.anchor_channels();
            for k in 0..m.anchor_channels() {
                let channel_grad: f64 = grad
                    .index_axis(ndarray::Axis(0), 0)
                    .index_axis(ndarray::Axis(0), base + k)
                    .iter()
                    .map(|v| v.abs())
                    .sum();
                if k == 4 {
                    assert!(channel_grad > 0.0);
                } else {
                    assert_eq!(channel_grad, 0.0);
                }
            }
        }
    }

    #[test]
    fn single_gt_toy_grid_hand_computed() {
        // one anchor, 2x2 grid over a 8px image, stride 4
        let m = GridMeta {
            anchors: vec![(4.0, 4.0)],
            stride: 4,
            num_categories: 2,
            image_size: 8,
        };
        let gt = BoundingBox::new(1.0, 1.0, 4.0, 4.0, 0).unwrap();
        let targets = assign_targets(std::slice::from_ref(&gt), &m);
        assert_eq!(targets.positives.len(), 1);
        let grid = Array4::<f64>::zeros((1, 7, 2, 2));
        let (loss, _) = detection_loss(&grid, &[targets.clone()], &m);

        // hand evaluation: objectness BCE = ln2 at every non-ignored cell;
        // class BCE = ln2 for both classes; regression = CIoU of the
        // neutral decode vs the ground truth
        let ln2 = (2.0f64).ln();
        let n_obj = 4 - targets.ignored.len();
        assert!((loss.obj - ln2 * n_obj as f64 / n_obj as f64).abs() < 1e-12);
        assert!((loss.cls - ln2).abs() < 1e-12);
        let pred: CenterBox = [2.0, 2.0, 4.0, 4.0];
        let expected = super::super::ciou::ciou_loss(pred, [2.5, 2.5, 3.0, 3.0]).loss;
        assert!((loss.reg - expected).abs() < 1e-12);
        assert!((loss.total - (loss.obj + loss.cls + loss.reg)).abs() < 1e-12);
    }

    #[test]
    fn detection_loss_gradient_matches_finite_differences() {
        let m = GridMeta {
            anchors: vec![(6.0, 8.0), (10.0, 6.0)],
            stride: 4,
            num_categories: 3,
            image_size: 16,
        };
        let gts = vec![
            BoundingBox::new(2.0, 3.0, 9.0, 11.0, 1).unwrap(),
            BoundingBox::new(8.0, 9.0, 15.0, 14.0, 2).unwrap(),
        ];
        let targets = vec![assign_targets(&gts, &m)];
        let g = m.grid_size();
        let mut grid = Array4::<f64>::zeros((1, 2 * m.anchor_channels(), g, g));
        // deterministic pseudo-random fill
        for (i, v) in grid.iter_mut().enumerate() {
            *v = ((i * 2654435761) % 1000) as f64 / 1000.0 - 0.5;
        }
        let (_, grad) = detection_loss(&grid, &targets, &m);
        let eps = 1e-6;
        let ac = m.anchor_channels();
        let (mut checked, mut box_checked) = (0, 0);
        for idx in (0..grid.len()).step_by(11) {
            let orig = grid.as_slice().unwrap()[idx];
            grid.as_slice_mut().unwrap()[idx] = orig + eps;
            let plus = detection_loss(&grid, &targets, &m).0.total;
            grid.as_slice_mut().unwrap()[idx] = orig - eps;
            let minus = detection_loss(&grid, &targets, &m).0.total;
            grid.as_slice_mut().unwrap()[idx] = orig;
            let fd = (plus - minus) / (2.0 * eps);
            let analytic = grad.as_slice().unwrap()[idx];
            // channel index within the anchor block
            let ch = (idx / (g * g)) % ac;
            if ch < 4 {
                // box channels: the naive finite difference also moves the
                // frozen aspect coefficient, a bounded secondary effect
                assert!(
                    (fd - analytic).abs() < 1e-6 + 0.15 * fd.abs(),
                    "box idx {idx}: fd={fd} analytic={analytic}"
                );
                box_checked += 1;
            } else {
                assert!(
                    (fd - analytic).abs() < 1e-6 * (1.0 + fd.abs()),
                    "idx {idx}: fd={fd} analytic={analytic}"
                );
            }
            checked += 1;
        }
        assert!(checked > 20 && box_checked > 0);
    }
}
