//! Box arithmetic: overlap, clipping and search-region construction.
//!
//! Coordinates have their origin at the top-left corner, x grows to the right
//! and y grows downwards. Boxes are half-open: `[x, x + w) × [y, y + h)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in (sub-)pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    /// Builds a box, rejecting non-finite coordinates and non-positive sizes.
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let b = BBox { x, y, w, h };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x.is_finite() && self.y.is_finite() && self.w.is_finite() && self.h.is_finite()) {
            return Err(Error::InvalidBox(format!("non-finite coordinates in {self:?}")));
        }
        if self.w <= 0.0 || self.h <= 0.0 {
            return Err(Error::InvalidBox(format!("non-positive size in {self:?}")));
        }
        Ok(())
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        BBox {
            x: cx - w / 2.0,
            y: cy - h / 2.0,
            w,
            h,
        }
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
        self.w * self.h
    }

    /// Overlapping part of two boxes, if any.
    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        (x1 > x0 && y1 > y0).then_some(BBox {
            x: x0,
            y: y0,
            w: x1 - x0,
            h: y1 - y0,
        })
    }

    /// Part of the box that lies inside a `width × height` frame.
    pub fn clip_to(&self, width: usize, height: usize) -> Option<BBox> {
        self.intersection(&BBox {
            x: 0.0,
            y: 0.0,
            w: width as f64,
            h: height as f64,
        })
    }

    pub fn intersects_frame(&self, width: usize, height: usize) -> bool {
        self.clip_to(width, height).is_some()
    }

    pub fn to_region(self) -> Region {
        let x0 = self.x.round() as i64;
        let y0 = self.y.round() as i64;
        let x1 = self.right().round() as i64;
        let y1 = self.bottom().round() as i64;
        Region {
            x: x0,
            y: y0,
            w: (x1 - x0).max(1) as usize,
            h: (y1 - y0).max(1) as usize,
        }
    }
}

/// Intersection-over-union of two boxes, `0` when they are disjoint.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    match a.intersection(b) {
        None => 0.0,
        Some(inter) => {
            let i = inter.area();
            let u = a.area() + b.area() - i;
            if u <= 0.0 {
                0.0
            } else {
                (i / u).clamp(0.0, 1.0)
            }
        }
    }
}

/// Integer pixel rectangle, used for search regions and sliding windows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Region {
    pub x: i64,
    pub y: i64,
    pub w: usize,
    pub h: usize,
}

impl Region {
    pub fn to_bbox(self) -> BBox {
        BBox {
            x: self.x as f64,
            y: self.y as f64,
            w: self.w as f64,
            h: self.h as f64,
        }
    }

    pub fn contains_point(&self, px: f64, py: f64) -> bool {
        px >= self.x as f64
            && py >= self.y as f64
            && px < (self.x + self.w as i64) as f64
            && py < (self.y + self.h as i64) as f64
    }

    pub fn inside_frame(&self, width: usize, height: usize) -> bool {
        self.x >= 0
            && self.y >= 0
            && self.x as usize + self.w <= width
            && self.y as usize + self.h <= height
    }
}

/// Places a segment of length `len` centered at `center` inside `[0, limit)`.
///
/// The segment is shifted to fit and only shrinks when `limit < len`.
fn place_span(center: f64, len: usize, limit: usize) -> (i64, usize) {
    if len >= limit {
        return (0, limit.max(1));
    }
    let start = (center - len as f64 / 2.0).round() as i64;
    let start = start.clamp(0, (limit - len) as i64);
    (start, len)
}

/// Square local search region of side `scale · max(w, h)` centered on the
/// target center, shifted (not shrunk) to stay inside the frame.
pub fn search_region_for(target: &BBox, frame_w: usize, frame_h: usize, scale: f64) -> Region {
    let side = search_side_for(target, scale);
    let (cx, cy) = target.center();
    // keep the reference point inside the frame so the region stays around it
    let cx = cx.clamp(0.0, frame_w as f64);
    let cy = cy.clamp(0.0, frame_h as f64);
    let (x, w) = place_span(cx, side, frame_w);
    let (y, h) = place_span(cy, side, frame_h);
    Region { x, y, w, h }
}

/// Side length of the square search region for a target.
pub fn search_side_for(target: &BBox, scale: f64) -> usize {
    ((scale * target.w.max(target.h)).round() as usize).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(x: f64, y: f64, w: f64, h: f64) -> BBox {
        BBox::new(x, y, w, h).unwrap()
    }

    /// Counts integer pixels covered by a box on a raster grid.
    fn raster_iou(a: &BBox, b: &BBox, extent: usize) -> f64 {
        let inside = |bx: &BBox, px: usize, py: usize| {
            let (fx, fy) = (px as f64 + 0.5, py as f64 + 0.5);
            fx >= bx.x && fx < bx.right() && fy >= bx.y && fy < bx.bottom()
        };
        let (mut inter, mut union) = (0usize, 0usize);
        for py in 0..extent {
            for px in 0..extent {
                let (ia, ib) = (inside(a, px, py), inside(b, px, py));
                inter += (ia && ib) as usize;
                union += (ia || ib) as usize;
            }
        }
        inter as f64 / union as f64
    }

    #[test]
    fn iou_identity_and_disjoint() {
        let a = bb(3.0, 4.0, 10.0, 7.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bb(50.0, 50.0, 3.0, 3.0)), 0.0);
        // touching edges share no area under half-open boxes
        assert_eq!(iou(&a, &bb(13.0, 4.0, 5.0, 5.0)), 0.0);
    }

    #[test]
    fn iou_half_shift_matches_raster() {
        let a = bb(0.0, 0.0, 10.0, 10.0);
        let b = bb(5.0, 0.0, 10.0, 10.0);
        let oracle = raster_iou(&a, &b, 20);
        assert!((oracle - 1.0 / 3.0).abs() < 1e-12);
        assert!((iou(&a, &b) - oracle).abs() < 1e-12);
    }

    #[test]
    fn invalid_boxes_rejected() {
        assert!(BBox::new(0.0, 0.0, 0.0, 3.0).is_err());
        assert!(BBox::new(0.0, f64::NAN, 1.0, 3.0).is_err());
        assert!(BBox::new(0.0, 0.0, 2.0, -1.0).is_err());
    }

    #[test]
    fn search_region_basic() {
        let r = search_region_for(&bb(50.0, 50.0, 20.0, 20.0), 300, 300, 4.0);
        assert_eq!(r, Region { x: 20, y: 20, w: 80, h: 80 });
    }

    #[test]
    fn search_region_shifted_at_corner() {
        let r = search_region_for(&bb(-10.0, -10.0, 20.0, 20.0), 300, 300, 4.0);
        assert_eq!(r, Region { x: 0, y: 0, w: 80, h: 80 });
        let r = search_region_for(&bb(290.0, 290.0, 20.0, 20.0), 300, 300, 4.0);
        assert_eq!(r, Region { x: 220, y: 220, w: 80, h: 80 });
        assert!(r.inside_frame(300, 300));
    }

    #[test]
    fn search_region_identity_scale() {
        let t = bb(10.0, 12.0, 16.0, 16.0);
        assert_eq!(search_region_for(&t, 100, 100, 1.0), t.to_region());
    }

    #[test]
    fn search_region_shrinks_only_for_small_frames() {
        let r = search_region_for(&bb(10.0, 10.0, 20.0, 20.0), 60, 200, 4.0);
        assert_eq!((r.x, r.w), (0, 60));
        assert_eq!(r.h, 80);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_box() -> impl Strategy<Value = BBox> {
            (-50.0..250.0f64, -50.0..250.0f64, 0.5..120.0f64, 0.5..120.0f64)
                .prop_map(|(x, y, w, h)| BBox { x, y, w, h })
        }

        proptest! {
            #[test]
            fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
                let ab = iou(&a, &b);
                prop_assert!((ab - iou(&b, &a)).abs() < 1e-12);
                prop_assert!((0.0..=1.0).contains(&ab));
                prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
            }

            #[test]
            fn region_contains_clipped_center(
                cx in 0.0..200.0f64, cy in 0.0..150.0f64,
                w in 2.0..60.0f64, h in 2.0..60.0f64,
                scale in 1.0..5.0f64,
                fw in 16usize..260, fh in 16usize..200,
            ) {
                let t = BBox::from_center(cx.min(fw as f64 - 1.0), cy.min(fh as f64 - 1.0), w, h);
                let r = search_region_for(&t, fw, fh, scale);
                prop_assert!(r.inside_frame(fw, fh));
                let (tcx, tcy) = t.center();
                prop_assert!(r.contains_point(tcx.clamp(0.0, fw as f64 - 1e-9), tcy.clamp(0.0, fh as f64 - 1e-9)));
                let side = search_side_for(&t, scale);
                prop_assert_eq!(r.w, side.min(fw));
                prop_assert_eq!(r.h, side.min(fh));
            }
        }
    }
}
