//! Hand-crafted patch descriptor: normalized block intensities followed by
//! per-cell gradient-orientation histograms.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::media::Patch;

/// Variance below this is treated as a flat block.
const FLAT_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Block grid for the intensity part (`grid × grid` block means).
    pub grid: usize,
    /// Cell grid for the orientation histograms.
    pub hist_cells: usize,
    /// Unsigned orientation bins over `[0, π)`.
    pub bins: usize,
    /// Gradients are sampled on every `hist_stride`-th row and column.
    pub hist_stride: usize,
    /// Subtract each cell's mean bin value before normalizing it.
    pub center_hist: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            grid: 8,
            hist_cells: 4,
            bins: 8,
            hist_stride: 2,
            center_hist: true,
        }
    }
}

impl FeatureConfig {
    pub fn dim(&self) -> usize {
        self.grid * self.grid + self.hist_cells * self.hist_cells * self.bins
    }

    pub fn intensity_dim(&self) -> usize {
        self.grid * self.grid
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

fn cell_bounds(k: usize, cells: usize, side: usize) -> (usize, usize) {
    (k * side / cells, ((k + 1) * side / cells).max(k * side / cells + 1))
}

/// Extracts the descriptor of a patch.
///
/// The intensity part is the `grid × grid` block-mean image, normalized to
/// zero mean and unit variance and scaled to unit norm. The histogram part
/// holds one magnitude-weighted orientation histogram per cell, optionally
/// centered on its mean bin, each scaled to unit norm, then scaled so the whole part has at most unit norm. Flat
/// blocks and gradient-free cells contribute zeros.
pub fn extract_features(patch: &Patch, cfg: &FeatureConfig) -> FeatureVector {
    let side = patch.side();
    let grid = patch.grid();
    let mut values = Vec::with_capacity(cfg.dim());

    // block means
    let g = cfg.grid;
    let mut means = Vec::with_capacity(g * g);
    for by in 0..g {
        let (y0, y1) = cell_bounds(by, g, side);
        for bx in 0..g {
            let (x0, x1) = cell_bounds(bx, g, side);
            let mut s = 0.0;
            for y in y0..y1 {
                s += grid.data[y * side + x0..y * side + x1].iter().sum::<f64>();
            }
            means.push(s / ((y1 - y0) * (x1 - x0)) as f64);
        }
    }
    let n = means.len() as f64;
    let mu = means.iter().sum::<f64>() / n;
    let var = means.iter().map(|m| (m - mu) * (m - mu)).sum::<f64>() / n;
    if var <= FLAT_EPS {
        values.extend(std::iter::repeat_n(0.0, means.len()));
    } else {
        let scale = 1.0 / (var.sqrt() * n.sqrt());
        values.extend(means.iter().map(|m| (m - mu) * scale));
    }

    // orientation histograms from central differences on interior pixels
    let cells = cfg.hist_cells;
    let bins = cfg.bins;
    let mut hist = vec![0.0; cells * cells * bins];
    let bin_width = PI / bins as f64;
    let cell_of: Vec<usize> = (0..side).map(|i| (i * cells / side).min(cells - 1)).collect();
    let stride = cfg.hist_stride.max(1);
    for y in (1..side.saturating_sub(1)).step_by(stride) {
        let row = y * side;
        let cy = cell_of[y];
        for x in (1..side - 1).step_by(stride) {
            let gx = grid.data[row + x + 1] - grid.data[row + x - 1];
            let gy = grid.data[row + side + x] - grid.data[row - side + x];
            let mag = (gx * gx + gy * gy).sqrt();
            if mag <= 1e-12 {
                continue;
            }
            let theta = gy.atan2(gx).rem_euclid(PI);
            // linear vote between the two nearest bin centers k·π/bins
            let pos = theta / bin_width;
            let lo = pos.floor() as usize % bins;
            let frac = pos - pos.floor();
            let hi = (lo + 1) % bins;
            let base = (cy * cells + cell_of[x]) * bins;
            hist[base + lo] += mag * (1.0 - frac);
            hist[base + hi] += mag * frac;
        }
    }
    let part_scale = 1.0 / (cells as f64);
    for cell in hist.chunks_mut(bins) {
        if cfg.center_hist {
            let m = cell.iter().sum::<f64>() / bins as f64;
            cell.iter_mut().for_each(|v| *v -= m);
        }
        let norm = cell.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-9 {
            cell.iter_mut().for_each(|v| *v *= part_scale / norm);
        } else {
            cell.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    values.extend_from_slice(&hist);
    FeatureVector { values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::Grid;

    fn patch(side: usize, f: impl FnMut(usize, usize) -> f64) -> Patch {
        Patch::from_grid(Grid::from_fn(side, side, f)).unwrap()
    }

    fn texture(x: usize, y: usize) -> f64 {
        let (fx, fy) = (x as f64, y as f64);
        0.25 + 0.1 * (fx * 0.31).sin() * (fy * 0.17).cos() + 0.05 * ((fx + 2.0 * fy) * 0.23).sin()
    }

    #[test]
    fn dims_follow_config() {
        let cfg = FeatureConfig::default();
        assert_eq!(cfg.dim(), 64 + 128);
        let f = extract_features(&patch(64, texture), &cfg);
        assert_eq!(f.dim(), cfg.dim());
        assert!(f.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn constant_patch_is_all_zero() {
        let f = extract_features(&patch(32, |_, _| 0.4), &FeatureConfig::default());
        assert!(f.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn intensity_part_is_gain_invariant() {
        let cfg = FeatureConfig::default();
        let a = extract_features(&patch(64, texture), &cfg);
        let b = extract_features(&patch(64, |x, y| 2.0 * texture(x, y)), &cfg);
        let k = cfg.intensity_dim();
        for (u, v) in a.values[..k].iter().zip(&b.values[..k]) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn affine_change_leaves_features_unchanged() {
        let cfg = FeatureConfig::default();
        let a = extract_features(&patch(48, texture), &cfg);
        let b = extract_features(&patch(48, |x, y| 0.7 * texture(x, y) + 0.1), &cfg);
        for (u, v) in a.values.iter().zip(&b.values) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn vertical_edge_votes_horizontal_gradient_bin() {
        let cfg = FeatureConfig {
            center_hist: false,
            ..FeatureConfig::default()
        };
        let side = 64;
        let p = patch(side, |x, _| if x < 37 { 0.1 } else { 0.9 });
        let f = extract_features(&p, &cfg);
        let hist = &f.values[cfg.intensity_dim()..];
        // finite-difference oracle: across the edge gx = 0.8, gy = 0 → θ = 0 → bin 0
        let gx = p.grid().get(37, 10) - p.grid().get(35, 10);
        assert!(gx > 0.0);
        let total: f64 = hist.iter().sum();
        let in_bin0: f64 = hist.chunks(cfg.bins).map(|c| c[0]).sum();
        assert!(total > 0.0);
        assert!((in_bin0 - total).abs() < 1e-12);

        // centered cells keep bin 0 on top, every other bin equal
        let centered = extract_features(&p, &FeatureConfig::default());
        for c in centered.values[cfg.intensity_dim()..].chunks(cfg.bins) {
            if c.iter().any(|v| *v != 0.0) {
                assert!(c[0] > 0.0);
                assert!(c[1..].iter().all(|v| (v - c[1]).abs() < 1e-12 && *v < 0.0));
            }
        }
    }
}
