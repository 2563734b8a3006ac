//! Normalized bounding-box geometry and the core annotation types.
//!
//! Boxes are stored in center format `(cx, cy, w, h)` with all values
//! normalized to the image, the native format of the label files this
//! toolkit reads and writes. Derived corners may poke marginally outside
//! `[0, 1]`; they are clamped only when rendering, never during math.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coordinates this far outside the valid range are clamped with a warning;
/// anything worse is rejected.
pub const COORD_SLACK: f64 = 1e-6;

/// A normalized center-format bounding box.
///
/// Invariants: `0 <= cx, cy <= 1` and `0 < w, h <= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        let b = Self { cx, cy, w, h };
        b.validate()?;
        Ok(b)
    }

    /// Accept tiny floating-point overshoot (at most [`COORD_SLACK`]) from
    /// upstream sources, clamping into range; reject anything larger.
    /// Degenerate sizes (`w` or `h` <= 0) are never clamped up.
    pub fn new_clamped(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        let mut clamped = false;
        let fix = |v: f64, lo: f64, hi: f64, clamped: &mut bool| -> f64 {
            if v < lo && v >= lo - COORD_SLACK {
                *clamped = true;
                lo
            } else if v > hi && v <= hi + COORD_SLACK {
                *clamped = true;
                hi
            } else {
                v
            }
        };
        let cx = fix(cx, 0.0, 1.0, &mut clamped);
        let cy = fix(cy, 0.0, 1.0, &mut clamped);
        let fix_hi = |v: f64, clamped: &mut bool| -> f64 {
            if v > 1.0 && v <= 1.0 + COORD_SLACK {
                *clamped = true;
                1.0
            } else {
                v
            }
        };
        let w = fix_hi(w, &mut clamped);
        let h = fix_hi(h, &mut clamped);
        if clamped {
            log::warn!("box coordinates clamped into range: ({cx}, {cy}, {w}, {h})");
        }
        Self::new(cx, cy, w, h)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Error::BadConfig(msg);
        if !(self.cx.is_finite() && self.cy.is_finite() && self.w.is_finite() && self.h.is_finite())
        {
            return Err(bad("box coordinates must be finite".into()));
        }
        if !(0.0..=1.0).contains(&self.cx) || !(0.0..=1.0).contains(&self.cy) {
            return Err(bad(format!(
                "box center ({}, {}) outside [0, 1]",
                self.cx, self.cy
            )));
        }
        if self.w <= 0.0 || self.w > 1.0 || self.h <= 0.0 || self.h > 1.0 {
            return Err(bad(format!(
                "box size ({}, {}) outside (0, 1]",
                self.w, self.h
            )));
        }
        Ok(())
    }

    /// Corner form `(x_min, y_min, x_max, y_max)`, unclamped.
    pub fn corners(&self) -> (f64, f64, f64, f64) {
        (
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        )
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }
}

/// Intersection-over-union of two boxes. Symmetric, in [0, 1], exactly 1 on
/// identical boxes and 0 when disjoint.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let (ax1, ay1, ax2, ay2) = a.corners();
    let (bx1, by1, bx2, by2) = b.corners();
    let iw = (ax2.min(bx2) - ax1.max(bx1)).max(0.0);
    let ih = (ay2.min(by2) - ay1.max(by1)).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    inter / union
}

/// A ground-truth instance: a category and its box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub category_id: u32,
    pub bbox: BBox,
}

/// A detector output: an annotation plus a confidence in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub category_id: u32,
    pub bbox: BBox,
    pub confidence: f64,
}

impl Detection {
    pub fn new(category_id: u32, bbox: BBox, confidence: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) || !confidence.is_finite() {
            return Err(Error::BadConfig(format!(
                "confidence {confidence} outside [0, 1]"
            )));
        }
        Ok(Self {
            category_id,
            bbox,
            confidence,
        })
    }

    /// Drop the confidence, keeping category and geometry.
    pub fn to_annotation(&self) -> Annotation {
        Annotation {
            category_id: self.category_id,
            bbox: self.bbox,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bbox(cx: f64, cy: f64, w: f64, h: f64) -> BBox {
        BBox::new(cx, cy, w, h).unwrap()
    }

    /// Counting oracle: rasterize both boxes on a 1000x1000 grid and count
    /// cell centers inside each region.
    fn iou_rasterized(a: &BBox, b: &BBox) -> f64 {
        const N: usize = 1000;
        let inside = |bx: &BBox, x: f64, y: f64| {
            let (x1, y1, x2, y2) = bx.corners();
            x > x1 && x < x2 && y > y1 && y < y2
        };
        let mut inter = 0u64;
        let mut union = 0u64;
        for i in 0..N {
            let x = (i as f64 + 0.5) / N as f64;
            for j in 0..N {
                let y = (j as f64 + 0.5) / N as f64;
                let ia = inside(a, x, y);
                let ib = inside(b, x, y);
                if ia && ib {
                    inter += 1;
                }
                if ia || ib {
                    union += 1;
                }
            }
        }
        inter as f64 / union as f64
    }

    #[test]
    fn iou_identity_is_one() {
        let b = bbox(0.3, 0.7, 0.2, 0.4);
        assert_eq!(iou(&b, &b), 1.0);
    }

    #[test]
    fn iou_disjoint_is_zero() {
        let a = bbox(0.2, 0.2, 0.1, 0.1);
        let b = bbox(0.8, 0.8, 0.1, 0.1);
        assert_eq!(iou(&a, &b), 0.0);
    }

    #[test]
    fn iou_quarter_overlap_matches_rasterized_oracle() {
        let a = bbox(0.25, 0.25, 0.5, 0.5);
        let b = bbox(0.5, 0.5, 0.5, 0.5);
        let got = iou(&a, &b);
        assert!((got - 1.0 / 7.0).abs() < 1e-12, "got {got}");
        assert!((got - iou_rasterized(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn invalid_boxes_rejected() {
        assert!(BBox::new(0.5, 0.5, 0.0, 0.1).is_err());
        assert!(BBox::new(0.5, 0.5, 0.1, 1.2).is_err());
        assert!(BBox::new(-0.1, 0.5, 0.1, 0.1).is_err());
        assert!(BBox::new(0.5, f64::NAN, 0.1, 0.1).is_err());
    }

    #[test]
    fn tiny_overshoot_clamps_larger_rejects() {
        let b = BBox::new_clamped(1.0 + 5e-7, 0.5, 0.25, 0.25).unwrap();
        assert_eq!(b.cx, 1.0);
        assert!(BBox::new_clamped(1.0 + 1e-3, 0.5, 0.25, 0.25).is_err());
        // sizes clamp only at the top; degenerate stays an error
        assert_eq!(BBox::new_clamped(0.5, 0.5, 1.0 + 5e-7, 0.25).unwrap().w, 1.0);
        assert!(BBox::new_clamped(0.5, 0.5, 0.0, 0.25).is_err());
    }

    #[test]
    fn detection_confidence_validated() {
        let b = bbox(0.5, 0.5, 0.1, 0.1);
        assert!(Detection::new(0, b, 1.5).is_err());
        assert!(Detection::new(0, b, -0.1).is_err());
        assert!(Detection::new(0, b, 0.873).is_ok());
    }
}
