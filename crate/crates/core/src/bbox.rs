//! Axis-aligned boxes in pixel coordinates.

use serde::{Deserialize, Serialize};

/// Box with top-left corner `(x, y)` and size `w x h`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    /// Box of side `size` centered on `(cx, cy)`.
    pub fn centered(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self::new(cx - w / 2.0, cy - h / 2.0, w, h)
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.w > 0.0 && self.h > 0.0)
    }

    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        (x1 > x0 && y1 > y0).then(|| BBox::new(x0, y0, x1 - x0, y1 - y0))
    }

    /// Intersection over union; 0 when the union is empty.
    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection(other).map_or(0.0, |b| b.area());
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    /// Scales both sides by `factor` about the center.
    pub fn scaled(&self, factor: f64) -> BBox {
        let (cx, cy) = self.center();
        BBox::centered(cx, cy, self.w * factor, self.h * factor)
    }

    /// Clips to `[0, width] x [0, height]`; may return a degenerate box.
    pub fn clamp_to(&self, width: usize, height: usize) -> BBox {
        let x0 = self.x.clamp(0.0, width as f64);
        let y0 = self.y.clamp(0.0, height as f64);
        let x1 = self.right().clamp(0.0, width as f64);
        let y1 = self.bottom().clamp(0.0, height as f64);
        BBox::new(x0, y0, (x1 - x0).max(0.0), (y1 - y0).max(0.0))
    }

    /// Snaps outward-rounded corners to an integer pixel rectangle
    /// `(x0, y0, x1, y1)` inside `width x height`, at least one pixel each way.
    pub fn pixel_rect(&self, width: usize, height: usize) -> (usize, usize, usize, usize) {
        let snap = |lo: f64, hi: f64, len: usize| {
            let len = len as i64;
            let a = (lo.round() as i64).clamp(0, len - 1);
            let b = (hi.round() as i64).clamp(a + 1, len);
            (a as usize, b as usize)
        };
        let (x0, x1) = snap(self.x, self.right(), width);
        let (y0, y1) = snap(self.y, self.bottom(), height);
        (x0, y0, x1, y1)
    }

    pub fn from_pixel_rect((x0, y0, x1, y1): (usize, usize, usize, usize)) -> BBox {
        BBox::new(x0 as f64, y0 as f64, (x1 - x0) as f64, (y1 - y0) as f64)
    }

    /// True when `other` lies inside `self`, up to `tol` pixels on each edge.
    pub fn contains(&self, other: &BBox, tol: f64) -> bool {
        other.x >= self.x - tol
            && other.y >= self.y - tol
            && other.right() <= self.right() + tol
            && other.bottom() <= self.bottom() + tol
    }

    pub fn within_image(&self, width: usize, height: usize) -> bool {
        self.x >= 0.0 && self.y >= 0.0 && self.right() <= width as f64 && self.bottom() <= height as f64
    }

    /// Lexicographic `(y, x, w, h)` order used for deterministic tie breaks.
    pub fn tie_order(&self, other: &BBox) -> std::cmp::Ordering {
        self.y
            .total_cmp(&other.y)
            .then(self.x.total_cmp(&other.x))
            .then(self.w.total_cmp(&other.w))
            .then(self.h.total_cmp(&other.h))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_examples() {
        let a = BBox::new(0.0, 0.0, 2.0, 2.0);
        assert_eq!(a.iou(&a), 1.0);
        assert_eq!(a.iou(&BBox::new(1.0, 1.0, 2.0, 2.0)), 1.0 / 7.0);
        assert_eq!(a.iou(&BBox::new(5.0, 5.0, 1.0, 1.0)), 0.0);
        assert_eq!(BBox::default().iou(&BBox::default()), 0.0);
    }

    #[test]
    fn scaling_keeps_center() {
        let b = BBox::new(10.0, 20.0, 30.0, 40.0).scaled(1.5);
        assert_eq!(b.center(), (25.0, 40.0));
        assert_eq!((b.w, b.h), (45.0, 60.0));
    }

    #[test]
    fn pixel_rect_is_never_empty() {
        let r = BBox::new(99.7, -3.0, 0.1, 0.2).pixel_rect(100, 50);
        assert_eq!(r, (99, 0, 100, 1));
    }
}
