//! Complete-IoU regression loss on center-size box parameters.

use std::f64::consts::PI;

/// Box as (center x, center y, width, height), all in pixels.
pub type CenterBox = [f64; 4];

/// CIoU loss `1 - IoU + rho^2/d^2 + alpha*v` split into its terms.
/// `alpha` is reported so callers can hold it fixed when finite-differencing.
#[derive(Debug, Clone, Copy)]
pub struct CiouTerms {
    pub loss: f64,
    pub iou: f64,
    pub center_term: f64,
    pub aspect_term: f64,
    pub v: f64,
    pub alpha: f64,
}

pub fn ciou_loss(pred: CenterBox, gt: CenterBox) -> CiouTerms {
    ciou_loss_grad(pred, gt).0
}

/// CIoU loss and its gradient w.r.t. the predicted `(x, y, w, h)`.
/// The aspect coefficient `alpha` is treated as a constant, so no gradient
/// flows through it.
pub fn ciou_loss_grad(pred: CenterBox, gt: CenterBox) -> (CiouTerms, [f64; 4]) {
    let [x, y, w, h] = pred;
    let [xg, yg, wg, hg] = gt;
    debug_assert!(w > 0.0 && h > 0.0 && wg > 0.0 && hg > 0.0);

    // corners (gradients via dcorner/dparam: x1 = x - w/2 etc.)
    let (px1, px2) = (x - w / 2.0, x + w / 2.0);
    let (py1, py2) = (y - h / 2.0, y + h / 2.0);
    let (gx1, gx2) = (xg - wg / 2.0, xg + wg / 2.0);
    let (gy1, gy2) = (yg - hg / 2.0, yg + hg / 2.0);

    let iw = (px2.min(gx2) - px1.max(gx1)).max(0.0);
    let ih = (py2.min(gy2) - py1.max(gy1)).max(0.0);
    let inter = iw * ih;
    let area_p = w * h;
    let union = area_p + wg * hg - inter;
    let iou = inter / union;

    // dIoU/d(pred): through intersection width/height and the pred area
    let (mut diw_dx, mut diw_dw) = (0.0, 0.0);
    if iw > 0.0 {
        // d(min(px2, gx2)): active when the pred edge is the binding one
        if px2 < gx2 {
            diw_dx += 1.0;
            diw_dw += 0.5;
        }
        if px1 > gx1 {
            diw_dx -= 1.0;
            diw_dw += 0.5;
        }
    }
    let (mut dih_dy, mut dih_dh) = (0.0, 0.0);
    if ih > 0.0 {
        if py2 < gy2 {
            dih_dy += 1.0;
            dih_dh += 0.5;
        }
        if py1 > gy1 {
            dih_dy -= 1.0;
            dih_dh += 0.5;
        }
    }
    let dinter = [ih * diw_dx, iw * dih_dy, ih * diw_dw, iw * dih_dh];
    let darea_p = [0.0, 0.0, h, w];
    let mut diou = [0.0; 4];
    for k in 0..4 {
        let dunion = darea_p[k] - dinter[k];
        diou[k] = (dinter[k] * union - inter * dunion) / (union * union);
    }

    // center distance over enclosing-box diagonal
    let rho2 = (x - xg).powi(2) + (y - yg).powi(2);
    let (cx1, cx2) = (px1.min(gx1), px2.max(gx2));
    let (cy1, cy2) = (py1.min(gy1), py2.max(gy2));
    let (cw, ch) = (cx2 - cx1, cy2 - cy1);
    let d2 = cw * cw + ch * ch;
    let center_term = rho2 / d2;

    let mut dd2 = [0.0; 4];
    if px1 < gx1 {
        dd2[0] += -2.0 * cw;
        dd2[2] += cw;
    }
    if px2 > gx2 {
        dd2[0] += 2.0 * cw;
        dd2[2] += cw;
    }
    if py1 < gy1 {
        dd2[1] += -2.0 * ch;
        dd2[3] += ch;
    }
    if py2 > gy2 {
        dd2[1] += 2.0 * ch;
        dd2[3] += ch;
    }
    let drho2 = [2.0 * (x - xg), 2.0 * (y - yg), 0.0, 0.0];
    let mut dcenter = [0.0; 4];
    for k in 0..4 {
        dcenter[k] = (drho2[k] * d2 - rho2 * dd2[k]) / (d2 * d2);
    }

    // aspect-ratio consistency
    let delta = (wg / hg).atan() - (w / h).atan();
    let v = 4.0 / (PI * PI) * delta * delta;
    let alpha = if v > 0.0 { v / ((1.0 - iou) + v) } else { 0.0 };
    let aspect_term = alpha * v;
    let denom = w * w + h * h;
    let dv_dw = -8.0 / (PI * PI) * delta * (h / denom);
    let dv_dh = 8.0 / (PI * PI) * delta * (w / denom);

    let loss = 1.0 - iou + center_term + aspect_term;
    let grad = [
        -diou[0] + dcenter[0],
        -diou[1] + dcenter[1],
        -diou[2] + dcenter[2] + alpha * dv_dw,
        -diou[3] + dcenter[3] + alpha * dv_dh,
    ];
    (
        CiouTerms {
            loss,
            iou,
            center_term,
            aspect_term,
            v,
            alpha,
        },
        grad,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_boxes_cost_nothing() {
        let b = [50.0, 40.0, 10.0, 20.0];
        let t = ciou_loss(b, b);
        assert!(t.loss.abs() < 1e-12);
        assert_eq!(t.iou, 1.0);
    }

    #[test]
    fn concentric_squares() {
        // IoU 0.25, centers coincide, square aspect ratios cancel
        let t = ciou_loss([0.0, 0.0, 10.0, 10.0], [0.0, 0.0, 20.0, 20.0]);
        assert!((t.loss - 0.75).abs() < 1e-12, "loss = {}", t.loss);
        assert_eq!(t.aspect_term, 0.0);
        assert_eq!(t.center_term, 0.0);
    }

    #[test]
    fn disjoint_boxes_term_by_term() {
        let p = [10.0, 10.0, 8.0, 6.0];
        let g = [40.0, 30.0, 10.0, 20.0];
        let t = ciou_loss(p, g);
        // independent term evaluation
        assert_eq!(t.iou, 0.0);
        let rho2 = 30.0f64.powi(2) + 20.0f64.powi(2);
        // enclosing box: x in [6, 45], y in [7, 40]
        let d2 = 39.0f64.powi(2) + 33.0f64.powi(2);
        assert!((t.center_term - rho2 / d2).abs() < 1e-12);
        let delta = (10.0f64 / 20.0).atan() - (8.0f64 / 6.0).atan();
        let v = 4.0 / (PI * PI) * delta * delta;
        let alpha = v / (1.0 + v);
        assert!((t.aspect_term - alpha * v).abs() < 1e-12);
        assert!((t.loss - (1.0 + rho2 / d2 + alpha * v)).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let cases = [
            ([12.0, 9.0, 8.0, 14.0], [15.0, 11.0, 10.0, 9.0]),
            ([0.0, 0.0, 5.0, 5.0], [20.0, 15.0, 8.0, 4.0]),
            ([3.0, 4.6, 12.0, 7.0], [5.0, 4.0, 12.0, 6.0]),
        ];
        let eps = 1e-6;
        for (p, g) in cases {
            let (base, grad) = ciou_loss_grad(p, g);
            // no gradient flows through alpha, so hold it at its base value
            // when finite-differencing
            let frozen = |b: CenterBox| {
                let t = ciou_loss(b, g);
                1.0 - t.iou + t.center_term + base.alpha * t.v
            };
            for k in 0..4 {
                let mut plus = p;
                plus[k] += eps;
                let mut minus = p;
                minus[k] -= eps;
                let fd = (frozen(plus) - frozen(minus)) / (2.0 * eps);
                let rel = (fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-3);
                assert!(rel < 1e-3, "param {k}: fd={fd} analytic={}", grad[k]);
            }
        }
    }
}

