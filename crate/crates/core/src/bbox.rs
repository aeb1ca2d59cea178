//! Axis-aligned bounding boxes and the similarity measures defined on them.

use serde::{Deserialize, Serialize};

use crate::CoreError;

/// Axis-aligned box in image pixel coordinates with a category label and an
/// optional detection score. Ground-truth boxes carry no score.
///
/// Invariants enforced at construction: `x1 < x2`, `y1 < y2`, all
/// coordinates finite, score (when present) in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub category_id: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl BoundingBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64, category_id: u32) -> Result<Self, CoreError> {
        let b = Self {
            x1,
            y1,
            x2,
            y2,
            category_id,
            score: None,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn with_score(
        x1: f64,
        y1: f64,
        x2: f64,
        y2: f64,
        category_id: u32,
        score: f64,
    ) -> Result<Self, CoreError> {
        if !(0.0..=1.0).contains(&score) || !score.is_finite() {
            return Err(CoreError::InvalidScore(score));
        }
        let mut b = Self::new(x1, y1, x2, y2, category_id)?;
        b.score = Some(score);
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        let coords = [self.x1, self.y1, self.x2, self.y2];
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(self.invalid("coordinates must be finite"));
        }
        if self.x1 >= self.x2 || self.y1 >= self.y2 {
            return Err(self.invalid("box must have strictly positive area"));
        }
        if let Some(s) = self.score {
            if !(0.0..=1.0).contains(&s) {
                return Err(CoreError::InvalidScore(s));
            }
        }
        Ok(())
    }

    fn invalid(&self, reason: &'static str) -> CoreError {
        CoreError::InvalidBox {
            x1: self.x1,
            y1: self.y1,
            x2: self.x2,
            y2: self.y2,
            reason,
        }
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    pub fn intersection_area(&self, other: &Self) -> f64 {
        let w = (self.x2.min(other.x2) - self.x1.max(other.x1)).max(0.0);
        let h = (self.y2.min(other.y2) - self.y1.max(other.y1)).max(0.0);
        w * h
    }

    pub fn union_area(&self, other: &Self) -> f64 {
        self.area() + other.area() - self.intersection_area(other)
    }

    /// Area of the minimum closure: the smallest axis-aligned box
    /// containing both boxes.
    pub fn closure_area(&self, other: &Self) -> f64 {
        let w = self.x2.max(other.x2) - self.x1.min(other.x1);
        let h = self.y2.max(other.y2) - self.y1.min(other.y1);
        w * h
    }

    /// Clips the box to `[0, w] x [0, h]`; `None` when nothing remains.
    pub fn clip(&self, image_size: crate::ImageSize) -> Option<Self> {
        let (w, h) = (image_size.0 as f64, image_size.1 as f64);
        let clipped = Self {
            x1: self.x1.clamp(0.0, w),
            y1: self.y1.clamp(0.0, h),
            x2: self.x2.clamp(0.0, w),
            y2: self.y2.clamp(0.0, h),
            ..*self
        };
        (clipped.x1 < clipped.x2 && clipped.y1 < clipped.y2).then_some(clipped)
    }
}

/// Gaze ray from the head center to the gaze point, both in normalized
/// image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeVector {
    pub origin: (f64, f64),
    pub target: (f64, f64),
}

impl GazeVector {
    pub fn new(origin: (f64, f64), target: (f64, f64)) -> Self {
        Self { origin, target }
    }

    pub fn direction(&self) -> (f64, f64) {
        (self.target.0 - self.origin.0, self.target.1 - self.origin.1)
    }
}

/// Intersection over union. Symmetric, in `[0, 1]`, zero for disjoint boxes.
pub fn iou(p: &BoundingBox, g: &BoundingBox) -> f64 {
    let inter = p.intersection_area(g);
    let union = p.area() + g.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    inter / union
}

/// Union over minimum closure. Stays positive for disjoint boxes and decays
/// as they move apart.
pub fn uoc(p: &BoundingBox, g: &BoundingBox) -> f64 {
    p.union_area(g) / p.closure_area(g)
}

/// Size-weighted union over closure:
/// `min(area(p)/area(g), area(g)/area(p)) * union(p, g) / closure(p, g)`.
///
/// Unlike IoU this distinguishes nested boxes of different sizes and keeps
/// discriminating when the boxes share no overlap. Symmetric, in `(0, 1]`.
pub fn wuoc(p: &BoundingBox, g: &BoundingBox) -> f64 {
    let (ap, ag) = (p.area(), g.area());
    let size_weight = (ap / ag).min(ag / ap);
    size_weight * uoc(p, g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x1: f64, y1: f64, x2: f64, y2: f64) -> BoundingBox {
        BoundingBox::new(x1, y1, x2, y2, 0).unwrap()
    }

    #[test]
    fn rejects_degenerate_boxes() {
        assert!(BoundingBox::new(0.0, 0.0, 0.0, 10.0, 0).is_err());
        assert!(BoundingBox::new(5.0, 0.0, 4.0, 10.0, 0).is_err());
        assert!(BoundingBox::new(0.0, f64::NAN, 1.0, 1.0, 0).is_err());
        assert!(BoundingBox::with_score(0.0, 0.0, 1.0, 1.0, 0, 1.5).is_err());
    }

    #[test]
    fn iou_identity_and_disjoint() {
        let p = b(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&p, &p), 1.0);
        let g = b(20.0, 20.0, 30.0, 30.0);
        assert_eq!(iou(&p, &g), 0.0);
    }

    #[test]
    fn iou_half_overlap() {
        // intersection 50, union 150
        let p = b(0.0, 0.0, 10.0, 10.0);
        let g = b(5.0, 0.0, 15.0, 10.0);
        assert!((iou(&p, &g) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(iou(&p, &g), iou(&g, &p));
    }

    #[test]
    fn wuoc_identity() {
        let p = b(0.0, 0.0, 10.0, 10.0);
        assert_eq!(wuoc(&p, &p), 1.0);
    }

    #[test]
    fn wuoc_gap_case() {
        // equal areas, union 200, closure 300
        let p = b(0.0, 0.0, 10.0, 10.0);
        let g = b(20.0, 0.0, 30.0, 10.0);
        let v = wuoc(&p, &g);
        assert!((v - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(v, wuoc(&g, &p));
    }

    #[test]
    fn wuoc_nested_half_area() {
        // one box fully covers the other; closure equals the big box
        let p = b(0.0, 0.0, 10.0, 10.0);
        let g = b(0.0, 0.0, 10.0, 20.0);
        assert!((wuoc(&p, &g) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn uoc_dominates_iou() {
        let p = b(0.0, 0.0, 10.0, 10.0);
        let g = b(3.0, 4.0, 12.0, 9.0);
        assert!(uoc(&p, &g) >= iou(&p, &g));
    }

    #[test]
    fn clip_drops_fully_outside_boxes() {
        let p = b(-20.0, -20.0, -5.0, -5.0);
        assert!(p.clip((100, 100)).is_none());
        let q = b(-5.0, -5.0, 10.0, 10.0).clip((100, 100)).unwrap();
        assert_eq!((q.x1, q.y1), (0.0, 0.0));
    }
}
