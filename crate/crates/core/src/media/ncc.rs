//! Zero-normalized cross-correlation.
//!
//! The cross term uses an FFT when the template is large enough to make the
//! direct sum expensive; window statistics come from integral images either
//! way. Both paths produce the same map up to floating-point rounding.

use std::cell::RefCell;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::media::Grid;

/// Window energy (sum of squared deviations) below this counts as flat.
const FLAT_ENERGY: f64 = 1e-10;
/// Template area × placements below which the direct sum is used.
const DIRECT_LIMIT: usize = 200_000;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

fn fft2(data: &mut [Complex64], width: usize, height: usize, inverse: bool) {
    let row = plan(width, inverse);
    for r in data.chunks_mut(width) {
        row.process(r);
    }
    let col = plan(height, inverse);
    let mut buf = vec![Complex64::default(); height];
    for x in 0..width {
        for y in 0..height {
            buf[y] = data[y * width + x];
        }
        col.process(&mut buf);
        for y in 0..height {
            data[y * width + x] = buf[y];
        }
    }
}

/// Summed-area tables of values and squared values, with a zero border row
/// and column.
struct Integral {
    stride: usize,
    sum: Vec<f64>,
    sq: Vec<f64>,
}

impl Integral {
    fn new(g: &Grid) -> Self {
        let stride = g.width + 1;
        let mut sum = vec![0.0; stride * (g.height + 1)];
        let mut sq = vec![0.0; stride * (g.height + 1)];
        for y in 0..g.height {
            let (mut rs, mut rq) = (0.0, 0.0);
            for x in 0..g.width {
                let v = g.data[y * g.width + x];
                rs += v;
                rq += v * v;
                sum[(y + 1) * stride + x + 1] = sum[y * stride + x + 1] + rs;
                sq[(y + 1) * stride + x + 1] = sq[y * stride + x + 1] + rq;
            }
        }
        Integral { stride, sum, sq }
    }

    #[inline]
    fn window(&self, x: usize, y: usize, w: usize, h: usize) -> (f64, f64) {
        let s = self.stride;
        let at = |t: &[f64]| t[(y + h) * s + x + w] - t[y * s + x + w] - t[(y + h) * s + x] + t[y * s + x];
        (at(&self.sum), at(&self.sq))
    }
}

/// Zero-mean template with its energy, reusable across placements.
#[derive(Clone, Debug)]
pub struct PreparedTemplate {
    pub width: usize,
    pub height: usize,
    centered: Vec<f64>,
    energy: f64,
}

impl PreparedTemplate {
    pub fn new(t: &Grid) -> Self {
        let n = (t.width * t.height) as f64;
        let mean = t.data.iter().sum::<f64>() / n;
        let centered: Vec<f64> = t.data.iter().map(|v| v - mean).collect();
        let energy = centered.iter().map(|v| v * v).sum();
        PreparedTemplate {
            width: t.width,
            height: t.height,
            centered,
            energy,
        }
    }
}

/// Correlates many templates against one image, reusing its spectrum and
/// integral images.
pub struct Correlator<'a> {
    image: &'a Grid,
    integral: Integral,
    spectrum: Option<Vec<Complex64>>,
}

impl<'a> Correlator<'a> {
    pub fn new(image: &'a Grid) -> Self {
        Correlator {
            image,
            integral: Integral::new(image),
            spectrum: None,
        }
    }

    pub fn image(&self) -> &Grid {
        self.image
    }

    fn spectrum(&mut self) -> &[Complex64] {
        let img = self.image;
        self.spectrum.get_or_insert_with(|| {
            let mut data: Vec<Complex64> = img.data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            fft2(&mut data, img.width, img.height, false);
            data
        })
    }

    /// Zero-normalized cross-correlation for every placement of `template`
    /// fully inside the image. Returns `None` when the template does not fit.
    pub fn ncc(&mut self, template: &Grid) -> Option<Grid> {
        self.ncc_prepared(&PreparedTemplate::new(template))
    }

    /// NCC of one placement, computed directly.
    pub fn ncc_at(&self, template: &Grid, u: usize, v: usize) -> f64 {
        self.ncc_at_prepared(&PreparedTemplate::new(template), u, v)
    }

    pub fn ncc_at_prepared(&self, t: &PreparedTemplate, u: usize, v: usize) -> f64 {
        let (tw, th) = (t.width, t.height);
        let mut cross = 0.0;
        for y in 0..th {
            let irow = &self.image.data[(v + y) * self.image.width + u..][..tw];
            let trow = &t.centered[y * tw..][..tw];
            cross += irow.iter().zip(trow).map(|(a, b)| a * b).sum::<f64>();
        }
        let (s, sq) = self.integral.window(u, v, tw, th);
        let energy = sq - s * s / (tw * th) as f64;
        if t.energy <= FLAT_ENERGY || energy <= FLAT_ENERGY {
            0.0
        } else {
            (cross / (t.energy.sqrt() * energy.sqrt())).clamp(-1.0, 1.0)
        }
    }

    /// Maps for several templates at once. On the FFT path two real
    /// templates share one complex transform.
    pub fn ncc_many(&mut self, templates: &[&Grid]) -> Vec<Option<Grid>> {
        let (iw, ih) = (self.image.width, self.image.height);
        let prepared: Vec<PreparedTemplate> = templates.iter().map(|t| PreparedTemplate::new(t)).collect();
        let fits = |t: &PreparedTemplate| t.width <= iw && t.height <= ih && t.width > 0 && t.height > 0;
        let use_fft = |t: &PreparedTemplate| {
            fits(t) && t.energy > FLAT_ENERGY && t.width * t.height * (iw - t.width + 1) * (ih - t.height + 1) > DIRECT_LIMIT
        };
        let mut out: Vec<Option<Grid>> = vec![None; templates.len()];
        let fft_idx: Vec<usize> = (0..prepared.len()).filter(|&i| use_fft(&prepared[i])).collect();
        for pair in fft_idx.chunks(2) {
            let a = &prepared[pair[0]];
            let b = pair.get(1).map(|&j| &prepared[j]);
            let (ca, cb) = self.cross_fft_pair(a, b);
            out[pair[0]] = Some(self.normalize(a, &ca));
            if let (Some(&j), Some(cb)) = (pair.get(1), cb) {
                out[j] = Some(self.normalize(&prepared[j], &cb));
            }
        }
        for (i, t) in prepared.iter().enumerate() {
            if out[i].is_none() && fits(t) {
                out[i] = self.ncc_prepared(t);
            }
        }
        out
    }

    fn ncc_prepared(&mut self, t: &PreparedTemplate) -> Option<Grid> {
        let (iw, ih) = (self.image.width, self.image.height);
        let (tw, th) = (t.width, t.height);
        if tw > iw || th > ih || tw == 0 || th == 0 {
            return None;
        }
        let (ow, oh) = (iw - tw + 1, ih - th + 1);
        if t.energy <= FLAT_ENERGY {
            return Some(Grid::filled(ow, oh, 0.0));
        }
        let cross = if tw * th * ow * oh <= DIRECT_LIMIT {
            self.cross_direct(&t.centered, tw, th, ow, oh)
        } else {
            self.cross_fft_pair(t, None).0
        };
        Some(self.normalize(t, &cross))
    }

    fn normalize(&self, t: &PreparedTemplate, cross: &[f64]) -> Grid {
        let (iw, ih) = (self.image.width, self.image.height);
        let (tw, th) = (t.width, t.height);
        let (ow, oh) = (iw - tw + 1, ih - th + 1);
        let n = (tw * th) as f64;
        let t_norm = t.energy.sqrt();
        let mut out = Vec::with_capacity(ow * oh);
        for v in 0..oh {
            for u in 0..ow {
                let (s, sq) = self.integral.window(u, v, tw, th);
                let energy = sq - s * s / n;
                let r = if energy <= FLAT_ENERGY {
                    0.0
                } else {
                    (cross[v * ow + u] / (t_norm * energy.sqrt())).clamp(-1.0, 1.0)
                };
                out.push(r);
            }
        }
        Grid::new(ow, oh, out)
    }

    fn cross_direct(&self, centered: &[f64], tw: usize, th: usize, ow: usize, oh: usize) -> Vec<f64> {
        let img = self.image;
        let mut out = vec![0.0; ow * oh];
        for v in 0..oh {
            for u in 0..ow {
                let mut acc = 0.0;
                for y in 0..th {
                    let irow = &img.data[(v + y) * img.width + u..][..tw];
                    let trow = &centered[y * tw..][..tw];
                    acc += irow.iter().zip(trow).map(|(a, b)| a * b).sum::<f64>();
                }
                out[v * ow + u] = acc;
            }
        }
        out
    }

    /// Cross terms of one or two templates: `a` rides in the real part and
    /// `b` in the imaginary part of a single transform.
    fn cross_fft_pair(&mut self, a: &PreparedTemplate, b: Option<&PreparedTemplate>) -> (Vec<f64>, Option<Vec<f64>>) {
        let (iw, ih) = (self.image.width, self.image.height);
        let mut t = vec![Complex64::default(); iw * ih];
        for y in 0..a.height {
            for x in 0..a.width {
                t[y * iw + x].re = a.centered[y * a.width + x];
            }
        }
        if let Some(b) = b {
            for y in 0..b.height {
                for x in 0..b.width {
                    t[y * iw + x].im = b.centered[y * b.width + x];
                }
            }
        }
        fft2(&mut t, iw, ih, false);
        let spec = self.spectrum();
        for (z, s) in t.iter_mut().zip(spec) {
            *z = s * z.conj();
        }
        fft2(&mut t, iw, ih, true);
        // circular correlation; offsets up to (iw - tw, ih - th) never wrap.
        // The image is real, so the real part correlates `a` and the negated
        // imaginary part correlates `b`.
        let scale = 1.0 / (iw * ih) as f64;
        let extract = |tw: usize, th: usize, pick: &dyn Fn(&Complex64) -> f64| {
            let (ow, oh) = (iw - tw + 1, ih - th + 1);
            let mut out = Vec::with_capacity(ow * oh);
            for v in 0..oh {
                for u in 0..ow {
                    out.push(pick(&t[v * iw + u]) * scale);
                }
            }
            out
        };
        let ca = extract(a.width, a.height, &|z| z.re);
        let cb = b.map(|b| extract(b.width, b.height, &|z| -z.im));
        (ca, cb)
    }
}

/// Zero-normalized cross-correlation map of `template` over `region`, one
/// value per valid placement, each in `[-1, 1]`. Flat windows score `0`.
///
/// Panics if the template is larger than the region.
pub fn ncc_map(region: &Grid, template: &Grid) -> Grid {
    Correlator::new(region)
        .ncc(template)
        .expect("template must fit inside the region")
}
