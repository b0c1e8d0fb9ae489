//! Global-search pruning: score every sliding window with a cheap "is the
//! target in here" function and keep only the best K for perusal.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::blob::{Blob, SKIM_MAGIC};
use crate::error::{Error, Result};
use crate::geometry::Region;
use crate::media::{crop_resize, Correlator, Frame, Grid, Patch, SEARCH_SIDE};
use crate::perusal::Template;

/// Dense sliding windows over a frame.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowSet {
    pub windows: Vec<Region>,
    pub stride: usize,
    pub side: usize,
}

impl WindowSet {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }
}

/// Start offsets along one axis: multiples of the stride, with the last
/// one moved onto the far edge.
fn axis_offsets(len: usize, side: usize, stride: usize) -> Vec<i64> {
    if side >= len {
        return vec![0];
    }
    let n = ((len - side) / stride + 1).max(2);
    let mut offs: Vec<i64> = (0..n).map(|i| (i * stride) as i64).collect();
    *offs.last_mut().unwrap() = (len - side) as i64;
    offs.dedup();
    offs
}

/// Windows of `side` pixels at stride `side / 2`, row-major. A window
/// dimension never exceeds the frame.
pub fn sliding_windows(frame_w: usize, frame_h: usize, side: usize) -> WindowSet {
    let side = side.max(1);
    let stride = (side / 2).max(1);
    let xs = axis_offsets(frame_w, side, stride);
    let ys = axis_offsets(frame_h, side, stride);
    let (w, h) = (side.min(frame_w), side.min(frame_h));
    let windows = ys
        .iter()
        .flat_map(|&y| xs.iter().map(move |&x| Region { x, y, w, h }))
        .collect();
    WindowSet {
        windows,
        stride,
        side,
    }
}

/// Default slope and offset of the analytic scorer.
pub const ANALYTIC_SLOPE: f64 = 8.0;
pub const ANALYTIC_OFFSET: f64 = -4.0;
/// Default downsampling of window and template before correlation.
pub const SKIM_DOWNSAMPLE: usize = 4;
/// Pooling grid of the trained scorer's response features.
pub const SKIM_POOL: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SkimMode {
    /// `σ(slope · max NCC + offset)`.
    Analytic { slope: f64, offset: f64 },
    /// Logistic regression over pooled response features.
    Trained { weights: Vec<f64>, bias: f64 },
}

/// Scorer `p = g(template, window)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkimModel {
    pub mode: SkimMode,
    pub downsample: usize,
    /// Search-region scale used by the tracker; fixes the expected target
    /// size inside a window.
    pub search_scale: f64,
    pub window_side: usize,
}

impl Default for SkimModel {
    fn default() -> Self {
        SkimModel {
            mode: SkimMode::Analytic {
                slope: ANALYTIC_SLOPE,
                offset: ANALYTIC_OFFSET,
            },
            downsample: SKIM_DOWNSAMPLE,
            search_scale: 4.0,
            window_side: SEARCH_SIDE,
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Number of features seen by the trained scorer.
pub const fn skim_feature_dim() -> usize {
    SKIM_POOL * SKIM_POOL + 1
}

impl SkimModel {
    /// Coarse template matching the target's expected size inside a
    /// downsampled window patch.
    fn coarse_template(&self, template: &Template, window_side: usize) -> Result<Grid> {
        let (w, h) = template.size;
        let m = w.max(h);
        let target_px = window_side as f64 / self.search_scale / self.downsample as f64;
        let tw = ((target_px * w / m).round() as usize).max(3);
        let th = ((target_px * h / m).round() as usize).max(3);
        let src = template.patch.grid();
        src.resample(
            &crate::geometry::BBox {
                x: 0.0,
                y: 0.0,
                w: src.width as f64,
                h: src.height as f64,
            },
            tw,
            th,
        )
    }

    /// Coarse correlation response of the template over the window.
    pub fn response(&self, template: &Template, window: &Patch) -> Result<Grid> {
        let coarse = window.grid().downsample(self.downsample);
        let t = self.coarse_template(template, window.side())?;
        Ok(Correlator::new(&coarse).ncc(&t).unwrap_or_else(|| Grid::filled(1, 1, 0.0)))
    }

    /// Pooled response features: block maxima on a `SKIM_POOL²` grid, then
    /// the global maximum.
    pub fn features(&self, template: &Template, window: &Patch) -> Result<Vec<f64>> {
        let r = self.response(template, window)?;
        let mut f = vec![f64::NEG_INFINITY; SKIM_POOL * SKIM_POOL];
        for y in 0..r.height {
            let by = (y * SKIM_POOL / r.height).min(SKIM_POOL - 1);
            for x in 0..r.width {
                let bx = (x * SKIM_POOL / r.width).min(SKIM_POOL - 1);
                let cell = &mut f[by * SKIM_POOL + bx];
                *cell = cell.max(r.get(x, y));
            }
        }
        // maps narrower than the pool grid leave some cells empty
        let global = r.max();
        f.iter_mut().filter(|v| v.is_infinite()).for_each(|v| *v = global);
        f.push(global);
        Ok(f)
    }

    /// Probability that the target appears in the window.
    pub fn score(&self, template: &Template, window: &Patch) -> Result<f64> {
        match &self.mode {
            SkimMode::Analytic { slope, offset } => {
                let m = self.response(template, window)?.max();
                Ok(sigmoid(slope * m + offset))
            }
            SkimMode::Trained { weights, bias } => {
                let f = self.features(template, window)?;
                Ok(sigmoid(dot(weights, &f) + bias))
            }
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (kind, values) = match &self.mode {
            SkimMode::Analytic { slope, offset } => (0.0, vec![*slope, *offset]),
            SkimMode::Trained { weights, bias } => {
                let mut v = weights.clone();
                v.push(*bias);
                (1.0, v)
            }
        };
        Blob {
            rows: 1,
            cols: values.len(),
            meta: vec![kind, self.downsample as f64, self.search_scale, self.window_side as f64],
            values,
        }
        .encode(SKIM_MAGIC)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let b = Blob::decode(bytes, SKIM_MAGIC)?;
        if b.meta.len() != 4 || b.rows != 1 {
            return Err(Error::Data("skim blob: unexpected header fields".into()));
        }
        let mode = match b.meta[0] as u32 {
            0 if b.values.len() == 2 => SkimMode::Analytic {
                slope: b.values[0],
                offset: b.values[1],
            },
            1 if b.values.len() == skim_feature_dim() + 1 => {
                let mut w = b.values;
                let bias = w.pop().unwrap();
                SkimMode::Trained { weights: w, bias }
            }
            _ => return Err(Error::Data("skim blob: unknown mode or size".into())),
        };
        Ok(SkimModel {
            mode,
            downsample: b.meta[1] as usize,
            search_scale: b.meta[2],
            window_side: b.meta[3] as usize,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        SkimModel::from_bytes(&bytes)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Scores one window patch.
pub fn skim_score(model: &SkimModel, template: &Template, window_patch: &Patch) -> Result<f64> {
    model.score(template, window_patch)
}

/// A window kept by [`skim_select`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoredWindow {
    pub index: usize,
    pub region: Region,
    pub p: f64,
}

/// Orders `(index, p)` pairs by `p` descending, ties by index, and keeps `k`.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Scores every window of `windows` and returns the `min(K, |windows|)`
/// most target-like ones, ordered by `p` descending.
pub fn skim_select(
    model: &SkimModel,
    template: &Template,
    frame: &Frame,
    windows: &WindowSet,
    k: usize,
) -> Result<Vec<ScoredWindow>> {
    if k == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    let scores = windows
        .windows
        .iter()
        .map(|r| {
            let patch = crop_resize(frame, &r.to_bbox(), model.window_side)?;
            model.score(template, &patch)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(top_k(&scores, k)
        .into_iter()
        .map(|i| ScoredWindow {
            index: i,
            region: windows.windows[i],
            p: scores[i],
        })
        .collect())
}

#[derive(Clone, Debug)]
pub struct SkimTrainReport {
    pub model: SkimModel,
    pub epoch_losses: Vec<f64>,
    pub train_accuracy: f64,
}

fn bce(p: f64, y: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Fits logistic weights on precomputed feature rows with full-batch
/// gradient descent on binary cross-entropy, starting from zero.
pub fn fit_logistic(rows: &[(Vec<f64>, f64)], epochs: usize, lr: f64) -> (Vec<f64>, f64, Vec<f64>) {
    let dim = rows.first().map_or(0, |r| r.0.len());
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let n = rows.len() as f64;
    let mut losses = Vec::with_capacity(epochs + 1);
    let loss_of = |w: &[f64], b: f64| rows.iter().map(|(x, y)| bce(sigmoid(dot(w, x) + b), *y)).sum::<f64>() / n;
    losses.push(loss_of(&w, b));
    for _ in 0..epochs {
        let mut gw = vec![0.0; dim];
        let mut gb = 0.0;
        for (x, y) in rows {
            let e = sigmoid(dot(&w, x) + b) - y;
            gw.iter_mut().zip(x).for_each(|(g, xi)| *g += e * xi / n);
            gb += e / n;
        }
        w.iter_mut().zip(&gw).for_each(|(wi, g)| *wi -= lr * g);
        b -= lr * gb;
        losses.push(loss_of(&w, b));
    }
    (w, b, losses)
}

/// Default learning rate of [`train_skim`]; below `2 / L` for the pooled
/// features, so each full-batch step cannot increase the loss.
pub const SKIM_LR: f64 = 0.2;

/// Trains the logistic scorer on positive and negative window patches.
pub fn train_skim(
    model: &SkimModel,
    positives: &[Patch],
    negatives: &[Patch],
    template: &Template,
    epochs: usize,
    lr: f64,
) -> Result<SkimTrainReport> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::Data("skim training needs at least one positive and one negative".into()));
    }
    let mut rows = Vec::with_capacity(positives.len() + negatives.len());
    for p in positives {
        rows.push((model.features(template, p)?, 1.0));
    }
    for p in negatives {
        rows.push((model.features(template, p)?, 0.0));
    }
    Ok(train_skim_rows(model, &rows, epochs, lr))
}

/// Same as [`train_skim`] with features already extracted.
pub fn train_skim_rows(model: &SkimModel, rows: &[(Vec<f64>, f64)], epochs: usize, lr: f64) -> SkimTrainReport {
    let (weights, bias, epoch_losses) = fit_logistic(rows, epochs, lr);
    let correct = rows
        .iter()
        .filter(|(x, y)| (sigmoid(dot(&weights, x) + bias) >= 0.5) == (*y > 0.5))
        .count();
    SkimTrainReport {
        model: SkimModel {
            mode: SkimMode::Trained { weights, bias },
            ..model.clone()
        },
        epoch_losses,
        train_accuracy: correct as f64 / rows.len().max(1) as f64,
    }
}
