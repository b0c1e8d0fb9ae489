//! Deterministic synthetic long-term sequences: a textured target on a
//! random walk over a textured background, with planned disappearances and
//! static look-alike distractors.

use std::collections::BTreeMap;
use std::ops::Range;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::media::Frame;
use crate::rng;
use crate::sequence::{GroundTruth, Sequence};

/// Visible frames required before, between and after disappearances.
pub const VISIBLE_GAP: usize = 10;

const COARSE_CELL: f64 = 7.0;
const FINE_CELL: f64 = 3.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub frame_w: usize,
    pub frame_h: usize,
    pub num_frames: usize,
    pub target_side: usize,
    pub num_disappearances: usize,
    pub disappearance_len: usize,
    pub num_distractors: usize,
    /// Standard deviation of per-pixel Gaussian noise, in gray levels.
    pub noise_sigma: f64,
    /// Largest per-frame displacement of the target.
    pub max_speed: f64,
    /// Speed multiplier while the target is out of view.
    pub absent_speed_factor: f64,
    /// Weight of the target's coarse texture inside each distractor.
    pub distractor_similarity: f64,
    /// Cover the target with an occluder instead of removing it.
    pub occlusion: bool,
    /// Frame of the jump in the re-detection protocol (default: half way).
    pub teleport_frame: Option<usize>,
    /// Teleport distance is more than twice `window_scale × target_side`.
    pub window_scale: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            frame_w: 320,
            frame_h: 240,
            num_frames: 1200,
            target_side: 28,
            num_disappearances: 12,
            disappearance_len: 40,
            num_distractors: 2,
            noise_sigma: 3.0,
            max_speed: 2.0,
            absent_speed_factor: 3.0,
            distractor_similarity: 0.6,
            occlusion: false,
            teleport_frame: None,
            window_scale: 4.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.num_frames == 0 {
            return bad("num_frames must be at least 1".into());
        }
        if self.frame_w < crate::media::MIN_FRAME_SIDE || self.frame_h < crate::media::MIN_FRAME_SIDE {
            return bad(format!("frame {}x{} is too small", self.frame_w, self.frame_h));
        }
        if self.target_side < 8 || self.target_side + 4 > self.frame_w.min(self.frame_h) {
            return bad(format!("target side {} does not fit the frame", self.target_side));
        }
        if self.num_disappearances > 0 {
            let need = self.num_disappearances * self.disappearance_len + (self.num_disappearances + 1) * VISIBLE_GAP;
            if self.disappearance_len == 0 || need > self.num_frames {
                return bad(format!(
                    "{} disappearances of {} frames need at least {need} frames, have {}",
                    self.num_disappearances, self.disappearance_len, self.num_frames
                ));
            }
        }
        if !(self.noise_sigma >= 0.0) || !(self.max_speed >= 0.0) || !(self.absent_speed_factor >= 0.0) {
            return bad("noise sigma and speed must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.distractor_similarity) {
            return bad("distractor similarity must lie in [0, 1]".into());
        }
        Ok(())
    }

    /// `key=value` echo written to `meta.txt`.
    pub fn meta(&self) -> BTreeMap<String, String> {
        let v = serde_json::to_value(self).expect("config serializes");
        v.as_object()
            .expect("struct")
            .iter()
            .map(|(k, v)| {
                let s = match v {
                    serde_json::Value::Null => "none".to_string(),
                    other => other.to_string(),
                };
                (k.clone(), s)
            })
            .collect()
    }
}

/// Generated sequence plus the generator's bookkeeping.
#[derive(Clone, Debug)]
pub struct SynthSequence {
    pub frames: Vec<Frame>,
    pub groundtruth: GroundTruth,
    pub distractors: Vec<BBox>,
    /// Frames on which the target is absent.
    pub absences: Vec<Range<usize>>,
    pub teleport_frame: Option<usize>,
    pub meta: BTreeMap<String, String>,
}

impl SynthSequence {
    pub fn into_sequence(self) -> Sequence {
        Sequence {
            frames: self.frames,
            groundtruth: self.groundtruth,
            meta: self.meta,
        }
    }
}

/// Smooth value noise with `cell`-pixel lattice spacing, normalized to zero
/// mean and unit variance.
pub fn value_noise(w: usize, h: usize, cell: f64, rng: &mut impl Rng) -> Vec<f64> {
    let lw = (w as f64 / cell).ceil() as usize + 2;
    let lh = (h as f64 / cell).ceil() as usize + 2;
    let lattice: Vec<f64> = (0..lw * lh).map(|_| StandardNormal.sample(rng)).collect();
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let fy = y as f64 / cell;
        let (iy, ty) = (fy.floor() as usize, smooth(fy.fract()));
        for x in 0..w {
            let fx = x as f64 / cell;
            let (ix, tx) = (fx.floor() as usize, smooth(fx.fract()));
            let at = |i: usize, j: usize| lattice[j * lw + i];
            let top = at(ix, iy) * (1.0 - tx) + at(ix + 1, iy) * tx;
            let bottom = at(ix, iy + 1) * (1.0 - tx) + at(ix + 1, iy + 1) * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    normalize(&mut out);
    out
}

fn normalize(v: &mut [f64]) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };
    v.iter_mut().for_each(|x| *x = (*x - mean) / sd);
}

fn mix(parts: &[(f64, &[f64])]) -> Vec<f64> {
    let n = parts[0].1.len();
    let mut out: Vec<f64> = (0..n).map(|i| parts.iter().map(|(w, p)| w * p[i]).sum()).collect();
    normalize(&mut out);
    out
}

/// Square texture patch with its rendering mean and contrast.
#[derive(Clone, Debug)]
struct Texture {
    side: usize,
    values: Vec<f64>,
    mean: f64,
    contrast: f64,
}

impl Texture {
    fn level(&self, x: usize, y: usize) -> f64 {
        self.mean + self.contrast * self.values[y * self.side + x]
    }
}

struct Appearance {
    background: Vec<f64>,
    target: Texture,
    distractors: Vec<Texture>,
    occluder: Texture,
}

fn appearance(cfg: &SynthConfig) -> Appearance {
    let (w, h, s) = (cfg.frame_w, cfg.frame_h, cfg.target_side);
    let mut r = rng::stream(cfg.seed, "background");
    let coarse = value_noise(w, h, 24.0, &mut r);
    let fine = value_noise(w, h, 8.0, &mut r);
    let background = mix(&[(0.8, coarse.as_slice()), (0.6, fine.as_slice())])
        .into_iter()
        .map(|v| 120.0 + 28.0 * v)
        .collect();

    let mut r = rng::stream(cfg.seed, "target");
    let t_coarse = value_noise(s, s, COARSE_CELL, &mut r);
    let t_fine = value_noise(s, s, FINE_CELL, &mut r);
    let texture = |values| Texture {
        side: s,
        values,
        mean: 125.0,
        contrast: 50.0,
    };
    let target = texture(mix(&[(1.0, t_coarse.as_slice()), (1.0, t_fine.as_slice())]));

    let a = cfg.distractor_similarity;
    let distractors = (0..cfg.num_distractors)
        .map(|i| {
            let mut r = rng::indexed_stream(cfg.seed, "distractor", i as u64);
            let own = value_noise(s, s, COARSE_CELL, &mut r);
            let fine = value_noise(s, s, FINE_CELL, &mut r);
            texture(mix(&[(a, t_coarse.as_slice()), (1.0 - a, own.as_slice()), (1.0, fine.as_slice())]))
        })
        .collect();
    let mut r = rng::stream(cfg.seed, "occluder");
    let occluder = texture(value_noise(s, s, COARSE_CELL, &mut r));
    Appearance {
        background,
        target,
        distractors,
        occluder,
    }
}

/// Absence intervals separated by at least [`VISIBLE_GAP`] visible frames.
fn schedule(cfg: &SynthConfig, r: &mut ChaCha8Rng) -> Vec<Range<usize>> {
    let d = cfg.num_disappearances;
    if d == 0 {
        return Vec::new();
    }
    let visible = cfg.num_frames - d * cfg.disappearance_len;
    let spare = visible - (d + 1) * VISIBLE_GAP;
    let weights: Vec<f64> = (0..=d).map(|_| r.random_range(0.05..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let mut gaps: Vec<usize> = weights
        .iter()
        .map(|w| VISIBLE_GAP + (spare as f64 * w / total).floor() as usize)
        .collect();
    let used: usize = gaps.iter().sum();
    gaps[d] += visible - used;
    let mut out = Vec::with_capacity(d);
    let mut t = 0;
    for gap in gaps.iter().take(d) {
        t += gap;
        out.push(t..t + cfg.disappearance_len);
        t += cfg.disappearance_len;
    }
    out
}

fn overlaps(a: &BBox, b: &BBox, margin: f64) -> bool {
    a.x < b.right() + margin && b.x < a.right() + margin && a.y < b.bottom() + margin && b.y < a.bottom() + margin
}

fn random_box(cfg: &SynthConfig, r: &mut ChaCha8Rng) -> BBox {
    let s = cfg.target_side as f64;
    let x = r.random_range(2..=cfg.frame_w - cfg.target_side - 2) as f64;
    let y = r.random_range(2..=cfg.frame_h - cfg.target_side - 2) as f64;
    BBox { x, y, w: s, h: s }
}

fn place_distractors(cfg: &SynthConfig, avoid: &[BBox], r: &mut ChaCha8Rng) -> Result<Vec<BBox>> {
    let margin = cfg.target_side as f64 / 2.0;
    let mut out: Vec<BBox> = Vec::new();
    for _ in 0..cfg.num_distractors {
        let mut placed = None;
        for _ in 0..10_000 {
            let b = random_box(cfg, r);
            if avoid.iter().chain(&out).all(|o| !overlaps(&b, o, margin)) {
                placed = Some(b);
                break;
            }
        }
        out.push(placed.ok_or_else(|| Error::Config("no room to place distractors".into()))?);
    }
    Ok(out)
}

fn render(
    cfg: &SynthConfig,
    look: &Appearance,
    target: Option<(&Texture, BBox)>,
    distractors: &[BBox],
    noise: &mut ChaCha8Rng,
) -> Frame {
    let (w, h) = (cfg.frame_w, cfg.frame_h);
    let mut level = look.background.clone();
    let mut paste = |tex: &Texture, b: &BBox| {
        let (bx, by) = (b.x as usize, b.y as usize);
        for y in 0..tex.side {
            for x in 0..tex.side {
                if bx + x < w && by + y < h {
                    level[(by + y) * w + bx + x] = tex.level(x, y);
                }
            }
        }
    };
    for (tex, b) in look.distractors.iter().zip(distractors) {
        paste(tex, b);
    }
    if let Some((tex, b)) = target {
        paste(tex, &b);
    }
    let gauss = Normal::new(0.0, cfg.noise_sigma.max(0.0)).expect("finite sigma");
    let pixels = level
        .into_iter()
        .map(|v| {
            let n = if cfg.noise_sigma > 0.0 { gauss.sample(noise) } else { 0.0 };
            (v + n).round().clamp(0.0, 255.0) as u8
        })
        .collect();
    Frame::new(w, h, pixels).expect("validated size")
}

/// Random walk with momentum that reflects off the frame border and off
/// distractors, so the target never overlaps one.
struct Walk {
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
}

impl Walk {
    fn boxed(&self, side: f64) -> BBox {
        BBox {
            x: self.x.round(),
            y: self.y.round(),
            w: side,
            h: side,
        }
    }

    fn advance(&mut self, cfg: &SynthConfig, max_speed: f64, obstacles: &[BBox], r: &mut ChaCha8Rng) {
        let s = cfg.target_side as f64;
        let accel = max_speed * 0.25;
        self.vx += accel * r.random_range(-1.0..1.0);
        self.vy += accel * r.random_range(-1.0..1.0);
        let speed = (self.vx * self.vx + self.vy * self.vy).sqrt();
        if speed > max_speed && speed > 0.0 {
            self.vx *= max_speed / speed;
            self.vy *= max_speed / speed;
        }
        let max_x = (cfg.frame_w as f64 - s - 2.0).max(2.0);
        let max_y = (cfg.frame_h as f64 - s - 2.0).max(2.0);
        let mut nx = self.x + self.vx;
        let mut ny = self.y + self.vy;
        if nx < 2.0 || nx > max_x {
            self.vx = -self.vx;
            nx = nx.clamp(2.0, max_x);
        }
        if ny < 2.0 || ny > max_y {
            self.vy = -self.vy;
            ny = ny.clamp(2.0, max_y);
        }
        let candidate = BBox {
            x: nx.round(),
            y: ny.round(),
            w: s,
            h: s,
        };
        if obstacles.iter().any(|o| overlaps(&candidate, o, 1.0)) {
            self.vx = -self.vx;
            self.vy = -self.vy;
        } else {
            self.x = nx;
            self.y = ny;
        }
    }
}

/// Generates a sequence with disappearances and distractors.
pub fn generate_sequence(cfg: &SynthConfig) -> Result<SynthSequence> {
    cfg.validate()?;
    let look = appearance(cfg);
    let mut layout = rng::stream(cfg.seed, "layout");
    let absences = schedule(cfg, &mut layout);
    let start = random_box(cfg, &mut layout);
    let distractors = place_distractors(cfg, &[start], &mut layout)?;
    let mut walk = Walk {
        x: start.x,
        y: start.y,
        vx: 0.0,
        vy: 0.0,
    };
    let mut motion = rng::stream(cfg.seed, "motion");
    let mut noise = rng::stream(cfg.seed, "noise");
    let side = cfg.target_side as f64;
    let mut frames = Vec::with_capacity(cfg.num_frames);
    let mut boxes = Vec::with_capacity(cfg.num_frames);
    for t in 0..cfg.num_frames {
        let absent = absences.iter().any(|r| r.contains(&t));
        if t > 0 {
            let speed = if absent { cfg.max_speed * cfg.absent_speed_factor } else { cfg.max_speed };
            walk.advance(cfg, speed, &distractors, &mut motion);
        }
        let b = walk.boxed(side);
        let shown = match (absent, cfg.occlusion) {
            (false, _) => Some((&look.target, b)),
            (true, true) => Some((&look.occluder, b)),
            (true, false) => None,
        };
        frames.push(render(cfg, &look, shown, &distractors, &mut noise));
        boxes.push((!absent).then_some(b));
    }
    let mut meta = cfg.meta();
    meta.insert("kind".into(), "longterm".into());
    Ok(SynthSequence {
        frames,
        groundtruth: GroundTruth { boxes },
        distractors,
        absences,
        teleport_frame: None,
        meta,
    })
}

/// Re-detection stress sequence: the target sits still, then jumps to a far
/// location at the teleport frame and stays there.
pub fn redetection_protocol(cfg: &SynthConfig) -> Result<SynthSequence> {
    let cfg = SynthConfig {
        num_disappearances: 0,
        ..cfg.clone()
    };
    cfg.validate()?;
    let d = cfg.teleport_frame.unwrap_or(cfg.num_frames / 2);
    if d == 0 || d >= cfg.num_frames {
        return Err(Error::Config(format!(
            "teleport frame {d} must lie strictly inside 1..{}",
            cfg.num_frames
        )));
    }
    let s = cfg.target_side as f64;
    let min_dist = 2.0 * cfg.window_scale * s;
    let reach_x = (cfg.frame_w - cfg.target_side - 4) as f64;
    let reach_y = (cfg.frame_h - cfg.target_side - 4) as f64;
    if (reach_x * reach_x + reach_y * reach_y).sqrt() <= min_dist * 1.05 {
        return Err(Error::Config(format!(
            "a {}x{} frame cannot separate two positions by more than {min_dist} px",
            cfg.frame_w, cfg.frame_h
        )));
    }
    let look = appearance(&cfg);
    let mut layout = rng::stream(cfg.seed, "layout");
    let (a, b) = (0..100_000)
        .map(|_| (random_box(&cfg, &mut layout), random_box(&cfg, &mut layout)))
        .find(|(a, b)| {
            let (ax, ay) = a.center();
            let (bx, by) = b.center();
            ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt() > min_dist
        })
        .ok_or_else(|| Error::Config("could not find two far-apart positions".into()))?;
    let distractors = place_distractors(&cfg, &[a, b], &mut layout)?;
    let mut noise = rng::stream(cfg.seed, "noise");
    let mut frames = Vec::with_capacity(cfg.num_frames);
    let mut boxes = Vec::with_capacity(cfg.num_frames);
    for t in 0..cfg.num_frames {
        let at = if t < d { a } else { b };
        frames.push(render(&cfg, &look, Some((&look.target, at)), &distractors, &mut noise));
        boxes.push(Some(at));
    }
    let mut meta = cfg.meta();
    meta.insert("kind".into(), "redetect".into());
    meta.insert("teleport_frame".into(), d.to_string());
    Ok(SynthSequence {
        frames,
        groundtruth: GroundTruth { boxes },
        distractors,
        absences: Vec::new(),
        teleport_frame: Some(d),
        meta,
    })
}
