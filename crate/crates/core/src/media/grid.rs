//! Floating-point intensity grids, patches and bilinear resampling.

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::media::Frame;

/// Default side of template and candidate patches.
pub const TEMPLATE_SIDE: usize = 127;
/// Default side of resampled search regions.
pub const SEARCH_SIDE: usize = 300;

/// Row-major grid of real intensities.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Grid {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height, "grid data length");
        Grid {
            width,
            height,
            data,
        }
    }

    pub fn filled(width: usize, height: usize, v: f64) -> Self {
        Grid::new(width, height, vec![v; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Grid::new(width, height, data)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Row-major index of the largest value; ties go to the smallest index.
    pub fn argmax(&self) -> (usize, usize, f64) {
        let mut best = (0usize, f64::NEG_INFINITY);
        for (i, &v) in self.data.iter().enumerate() {
            if v > best.1 {
                best = (i, v);
            }
        }
        (best.0 % self.width, best.0 / self.width, best.1)
    }

    pub fn max(&self) -> f64 {
        self.argmax().2
    }

    /// Bilinear resample of `area` (clipped to the grid) to `out_w × out_h`.
    pub fn resample(&self, area: &BBox, out_w: usize, out_h: usize) -> Result<Grid> {
        resample(self, area, out_w, out_h)
    }

    /// Box-filter downsampling by an integer factor; trailing pixels that do
    /// not fill a whole cell are dropped.
    pub fn downsample(&self, factor: usize) -> Grid {
        if factor <= 1 {
            return self.clone();
        }
        let (w, h) = ((self.width / factor).max(1), (self.height / factor).max(1));
        let norm = 1.0 / (factor * factor) as f64;
        Grid::from_fn(w, h, |x, y| {
            let mut s = 0.0;
            for dy in 0..factor {
                let yy = (y * factor + dy).min(self.height - 1);
                for dx in 0..factor {
                    s += self.get((x * factor + dx).min(self.width - 1), yy);
                }
            }
            s * norm
        })
    }
}

/// Anything bilinear sampling can read from.
pub trait PixelSource {
    fn dims(&self) -> (usize, usize);
    fn value(&self, x: usize, y: usize) -> f64;
}

impl PixelSource for Grid {
    fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    fn value(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

impl PixelSource for Frame {
    fn dims(&self) -> (usize, usize) {
        (self.width(), self.height())
    }

    #[inline]
    fn value(&self, x: usize, y: usize) -> f64 {
        self.get(x, y) as f64 / 255.0
    }
}

/// Bilinear resampling of the part of `area` that lies inside `src`.
///
/// Output pixel `(i, j)` samples the source at
/// `area.x + (i + 0.5) · area.w / out_w - 0.5` (and likewise for rows), with
/// edge clamping, so a same-size full-extent resample is the identity.
pub fn resample<S: PixelSource>(src: &S, area: &BBox, out_w: usize, out_h: usize) -> Result<Grid> {
    let (sw, sh) = src.dims();
    let clipped = area.clip_to(sw, sh).ok_or(Error::OutsideFrame)?;
    if out_w == 0 || out_h == 0 {
        return Err(Error::Config("resample target size must be positive".into()));
    }
    let sx = clipped.w / out_w as f64;
    let sy = clipped.h / out_h as f64;
    let taps_x: Vec<(usize, usize, f64)> = (0..out_w)
        .map(|i| tap(clipped.x + (i as f64 + 0.5) * sx - 0.5, sw))
        .collect();
    let mut data = Vec::with_capacity(out_w * out_h);
    for j in 0..out_h {
        let (y0, y1, fy) = tap(clipped.y + (j as f64 + 0.5) * sy - 0.5, sh);
        for &(x0, x1, fx) in &taps_x {
            let top = src.value(x0, y0) * (1.0 - fx) + src.value(x1, y0) * fx;
            let bot = src.value(x0, y1) * (1.0 - fx) + src.value(x1, y1) * fx;
            data.push(top * (1.0 - fy) + bot * fy);
        }
    }
    Ok(Grid::new(out_w, out_h, data))
}

#[inline]
fn tap(coord: f64, limit: usize) -> (usize, usize, f64) {
    let c = coord.clamp(0.0, (limit - 1) as f64);
    let i0 = c.floor() as usize;
    let i1 = (i0 + 1).min(limit - 1);
    (i0, i1, c - i0 as f64)
}

/// Square resampled crop with intensities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    grid: Grid,
}

impl Patch {
    pub fn from_grid(grid: Grid) -> Result<Self> {
        if grid.width != grid.height {
            return Err(Error::Data(format!(
                "patch must be square, got {}x{}",
                grid.width, grid.height
            )));
        }
        Ok(Patch { grid })
    }

    pub fn side(&self) -> usize {
        self.grid.width
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn into_grid(self) -> Grid {
        self.grid
    }

    pub fn pixels(&self) -> &[f64] {
        &self.grid.data
    }
}

/// Crops `area` from the frame and bilinearly resamples it to `side × side`.
pub fn crop_resize(frame: &Frame, area: &BBox, side: usize) -> Result<Patch> {
    if side < 8 {
        return Err(Error::Config(format!("patch side {side} is below 8")));
    }
    Patch::from_grid(resample(frame, area, side, side)?)
}

/// Same as [`crop_resize`] but reading from an existing patch.
pub fn crop_resize_patch(patch: &Patch, area: &BBox, side: usize) -> Result<Patch> {
    if side < 8 {
        return Err(Error::Config(format!("patch side {side} is below 8")));
    }
    Patch::from_grid(resample(patch.grid(), area, side, side)?)
}
