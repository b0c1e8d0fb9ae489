//! End-to-end plumbing shared by the command line, the examples and the
//! test suites: build training data from synthetic sequences, train the
//! models, and run a tracker over a benchmark suite.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed::{
    self, mine_hard_examples, FixedTriplets, HardExamples, LabeledSequence, LabeledTrack, MiningConfig, MixedTriplets,
    TrackDataset, TrainConfig, TrainReport, TripletExample, TripletSampler, TripletSource,
};
use crate::error::{Error, Result};
use crate::eval::{self, FScore, RateCounts, RedetectSummary};
use crate::geometry::{iou, search_side_for, BBox};
use crate::media::{crop_resize, extract_features, FeatureConfig, FeatureVector, Frame};
use crate::perusal::{PerusalConfig, Template};
use crate::rng;
use crate::sequence::GroundTruth;
use crate::skimming::{train_skim_rows, SkimModel, SkimTrainReport, SKIM_LR};
use crate::synth::{generate_sequence, redetection_protocol, SynthConfig};
use crate::trace::PredictionTrace;
use crate::tracker::{run_sequence, Models, TrackRun, Tracker, TrackerConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingDataConfig {
    /// Distinct target textures (one class each).
    pub num_targets: usize,
    pub frames_per_target: usize,
    pub positives_per_frame: usize,
    pub negatives_per_frame: usize,
    /// Positive crops are shifted by up to this fraction of the box side.
    pub shift_jitter: f64,
    /// Positive crops are rescaled by up to this fraction.
    pub scale_jitter: f64,
    /// Appearance settings of the training sequences.
    pub synth: SynthConfig,
    pub seed: u64,
}

impl Default for TrainingDataConfig {
    fn default() -> Self {
        TrainingDataConfig {
            num_targets: 48,
            frames_per_target: 3,
            positives_per_frame: 4,
            negatives_per_frame: 8,
            shift_jitter: 0.08,
            scale_jitter: 0.1,
            synth: SynthConfig::default(),
            seed: 1000,
        }
    }
}

/// Descriptors cut from synthetic training sequences.
#[derive(Clone, Debug, Default)]
pub struct TrainingData {
    /// One track per target: the exact first-frame crop, then jittered crops.
    pub dataset: TrackDataset,
    /// Per target: background, distractor and misaligned-target crops.
    pub negatives: Vec<Vec<FeatureVector>>,
}

fn jittered(b: &BBox, shift: f64, scale: f64, r: &mut ChaCha8Rng) -> BBox {
    let (cx, cy) = b.center();
    let s = 1.0 + r.random_range(-scale..=scale);
    let a = 1.0 + r.random_range(-scale..=scale) * 0.5;
    let dx = r.random_range(-shift..=shift) * b.w;
    let dy = r.random_range(-shift..=shift) * b.h;
    BBox::from_center(cx + dx, cy + dy, b.w * s * a.sqrt(), b.h * s / a.sqrt())
}

fn feature(frame: &Frame, b: &BBox, f: &FeatureConfig) -> Option<FeatureVector> {
    let c = b.clip_to(frame.width(), frame.height())?;
    if c.w < b.w * 0.8 || c.h < b.h * 0.8 {
        return None;
    }
    crop_resize(frame, b, crate::media::TEMPLATE_SIDE)
        .ok()
        .map(|p| extract_features(&p, f))
}

/// A random box of the target's size whose overlap with `gt` lies in `range`.
fn box_with_overlap(frame: &Frame, gt: &BBox, range: (f64, f64), r: &mut ChaCha8Rng) -> Option<BBox> {
    let (fw, fh) = (frame.width() as f64, frame.height() as f64);
    for _ in 0..200 {
        let b = if range.1 < 0.05 {
            BBox {
                x: r.random_range(0.0..(fw - gt.w).max(1.0)),
                y: r.random_range(0.0..(fh - gt.h).max(1.0)),
                w: gt.w,
                h: gt.h,
            }
        } else {
            let (cx, cy) = gt.center();
            let d = gt.w.max(gt.h);
            BBox::from_center(cx + r.random_range(-d..d), cy + r.random_range(-d..d), gt.w, gt.h)
        };
        let o = iou(&b, gt);
        if o >= range.0 && o <= range.1 && b.x >= 0.0 && b.y >= 0.0 && b.right() <= fw && b.bottom() <= fh {
            return Some(b);
        }
    }
    None
}

/// Cuts labeled crops from `num_targets` short synthetic sequences.
pub fn build_training_data(cfg: &TrainingDataConfig, features: &FeatureConfig) -> Result<TrainingData> {
    let per_target: Vec<Result<(LabeledTrack, Vec<FeatureVector>)>> = (0..cfg.num_targets)
        .into_par_iter()
        .map(|i| {
            let synth = SynthConfig {
                num_frames: cfg.frames_per_target.max(2),
                num_disappearances: 0,
                seed: rng::indexed_seed(cfg.seed, "train-target", i as u64),
                ..cfg.synth.clone()
            };
            let seq = generate_sequence(&synth)?;
            let mut r = rng::indexed_stream(cfg.seed, "train-crops", i as u64);
            let gt0 = seq.groundtruth.boxes[0].expect("no disappearances");
            let mut patches = vec![feature(&seq.frames[0], &gt0, features).ok_or(Error::OutsideFrame)?];
            let mut negatives = Vec::new();
            for (t, frame) in seq.frames.iter().enumerate() {
                let gt = seq.groundtruth.boxes[t].expect("no disappearances");
                for _ in 0..cfg.positives_per_frame {
                    let b = jittered(&gt, cfg.shift_jitter, cfg.scale_jitter, &mut r);
                    patches.extend(feature(frame, &b, features));
                }
                for k in 0..cfg.negatives_per_frame {
                    let b = match k % 4 {
                        0 | 1 => box_with_overlap(frame, &gt, (0.0, 0.0), &mut r),
                        2 => box_with_overlap(frame, &gt, (0.05, 0.3), &mut r),
                        _ => seq
                            .distractors
                            .get(k / 4 % seq.distractors.len().max(1))
                            .map(|d| jittered(d, cfg.shift_jitter, cfg.scale_jitter, &mut r)),
                    };
                    if let Some(f) = b.and_then(|b| feature(frame, &b, features)) {
                        negatives.push(f);
                    }
                }
            }
            Ok((LabeledTrack { class: i, patches }, negatives))
        })
        .collect();
    let mut data = TrainingData::default();
    for item in per_target {
        let (track, neg) = item?;
        data.dataset.tracks.push(track);
        data.negatives.push(neg);
    }
    Ok(data)
}

/// Triplets whose negative comes from the anchor's own scene.
pub struct SceneTriplets {
    data: Arc<TrainingData>,
    rng: ChaCha8Rng,
}

impl SceneTriplets {
    pub fn new(data: Arc<TrainingData>, seed: u64) -> Result<Self> {
        if data.dataset.tracks.is_empty() || data.negatives.iter().all(|n| n.is_empty()) {
            return Err(Error::Data("no scene negatives to sample".into()));
        }
        Ok(SceneTriplets {
            data,
            rng: rng::stream(seed, "scene-triplets"),
        })
    }
}

impl TripletSource for SceneTriplets {
    fn draw(&mut self, n: usize) -> Vec<TripletExample> {
        let tracks = &self.data.dataset.tracks;
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let i = self.rng.random_range(0..tracks.len());
            let (track, negs) = (&tracks[i], &self.data.negatives[i]);
            if negs.is_empty() || track.patches.len() < 2 {
                continue;
            }
            let p = self.rng.random_range(1..track.patches.len());
            let q = self.rng.random_range(0..negs.len());
            out.push(TripletExample {
                anchor: track.patches[0].clone(),
                positive: track.patches[p].clone(),
                negative: negs[q].clone(),
            });
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CascadeConfig {
    pub num_sequences: usize,
    pub synth: SynthConfig,
    pub mining: MiningConfig,
    pub epochs: usize,
    /// Share of each fine-tuning epoch drawn from the mined triplets.
    pub mined_fraction: f64,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        CascadeConfig {
            num_sequences: 4,
            synth: SynthConfig {
                num_frames: 120,
                num_disappearances: 1,
                disappearance_len: 30,
                ..SynthConfig::default()
            },
            mining: MiningConfig {
                frame_stride: 4,
                ..MiningConfig::default()
            },
            epochs: 10,
            mined_fraction: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainPlan {
    pub data: TrainingDataConfig,
    pub embed: TrainConfig,
    /// Share of triplets whose negative is another target rather than the
    /// anchor's own scene.
    pub cross_target_fraction: f64,
    pub cascade: Option<CascadeConfig>,
    /// Fit the logistic skim scorer; otherwise the analytic scorer is used.
    pub train_skim: bool,
    pub skim_epochs: usize,
    pub perusal: PerusalConfig,
}

impl Default for TrainPlan {
    fn default() -> Self {
        TrainPlan {
            data: TrainingDataConfig::default(),
            embed: TrainConfig::default(),
            cross_target_fraction: 0.3,
            cascade: None,
            train_skim: false,
            skim_epochs: 200,
            perusal: PerusalConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub models: Models,
    pub report: TrainReport,
    /// Mined examples and fine-tuning report of the cascade stage.
    pub cascade: Option<(HardExamples, TrainReport)>,
    pub skim: Option<SkimTrainReport>,
}

fn triplet_source(data: &Arc<TrainingData>, plan: &TrainPlan, seed: u64) -> Result<Box<dyn TripletSource>> {
    let cross = TripletSampler::new(Arc::new(data.dataset.clone()), rng::child_seed(seed, "cross"))?;
    let scene = SceneTriplets::new(Arc::clone(data), rng::child_seed(seed, "scene"))?;
    Ok(Box::new(MixedTriplets {
        first: cross,
        second: scene,
        first_fraction: plan.cross_target_fraction,
    }))
}

struct BoxedSource(Box<dyn TripletSource>);

impl TripletSource for BoxedSource {
    fn draw(&mut self, n: usize) -> Vec<TripletExample> {
        self.0.draw(n)
    }
}

/// Mining sequences for the cascade stage.
pub fn cascade_sequences(cfg: &CascadeConfig, seed: u64) -> Result<Vec<LabeledSequence>> {
    (0..cfg.num_sequences)
        .into_par_iter()
        .map(|i| {
            let s = generate_sequence(&SynthConfig {
                seed: rng::indexed_seed(seed, "cascade-seq", i as u64),
                ..cfg.synth.clone()
            })?;
            Ok(LabeledSequence {
                frames: s.frames,
                groundtruth: s.groundtruth,
            })
        })
        .collect()
}

/// Trains the embedding (optionally with a cascade stage) and the skim
/// scorer.
pub fn train_models(plan: &TrainPlan) -> Result<TrainOutcome> {
    train_models_with(plan, None)
}

/// Same as [`train_models`], mining the cascade stage from `mining`
/// instead of synthetic sequences when given.
pub fn train_models_with(plan: &TrainPlan, mining: Option<&[LabeledSequence]>) -> Result<TrainOutcome> {
    let seed = plan.embed.seed;
    let data = Arc::new(build_training_data(&plan.data, &plan.perusal.features)?);
    let dim_in = plan.perusal.features.dim();
    let mut source = triplet_source(&data, plan, seed)?;
    let report = embed::train_embedding(&plan.embed, dim_in, source.as_mut())?;
    let mut model = report.model.clone();

    let cascade = match &plan.cascade {
        Some(c) => {
            let generated;
            let seqs = match mining {
                Some(s) => s,
                None => {
                    generated = cascade_sequences(c, rng::child_seed(seed, "cascade"))?;
                    &generated[..]
                }
            };
            let mcfg = MiningConfig {
                perusal: plan.perusal.clone(),
                ..c.mining.clone()
            };
            let hard = mine_hard_examples(&model, seqs, &mcfg)?;
            log::info!(
                "cascade: {} false accepts, {} false rejects, {} triplets",
                hard.false_accepts.len(),
                hard.false_rejects.len(),
                hard.triplets.len()
            );
            if hard.triplets.is_empty() {
                Some((hard, TrainReport { model: model.clone(), epoch_losses: vec![], epoch_lrs: vec![] }))
            } else {
                let cfg = TrainConfig {
                    epochs: c.epochs,
                    lr: plan.embed.lr_at_epoch(plan.embed.epochs.saturating_sub(1)),
                    lr_decay_every: 0,
                    ..plan.embed.clone()
                };
                let mut mixed = MixedTriplets {
                    first: FixedTriplets::new(hard.triplets.clone()),
                    second: BoxedSource(triplet_source(&data, plan, rng::child_seed(seed, "cascade-mix"))?),
                    first_fraction: c.mined_fraction,
                };
                let tuned = embed::fine_tune(model.clone(), &cfg, &mut mixed)?;
                model = tuned.model.clone();
                Some((hard, tuned))
            }
        }
        None => None,
    };

    let skim_base = SkimModel::default();
    let skim = if plan.train_skim {
        let rows = skim_rows(&plan.data, &plan.perusal, &skim_base, &model)?;
        Some(train_skim_rows(&skim_base, &rows, plan.skim_epochs, SKIM_LR))
    } else {
        None
    };
    Ok(TrainOutcome {
        models: Models {
            embedding: model,
            skim: skim.as_ref().map_or(skim_base, |s| s.model.clone()),
        },
        report,
        cascade,
        skim,
    })
}

/// Skim training rows: windows holding the target (label 1) and windows
/// where it is masked with the mean pixel value (label 0).
pub fn skim_rows(
    data: &TrainingDataConfig,
    perusal: &PerusalConfig,
    skim: &SkimModel,
    model: &embed::EmbeddingModel,
) -> Result<Vec<(Vec<f64>, f64)>> {
    let n = data.num_targets.min(16);
    let rows = (0..n)
        .into_par_iter()
        .map(|i| {
            let synth = SynthConfig {
                num_frames: 2,
                num_disappearances: 0,
                seed: rng::indexed_seed(data.seed, "skim-target", i as u64),
                ..data.synth.clone()
            };
            let seq = generate_sequence(&synth)?;
            let gt = seq.groundtruth.boxes[0].expect("present");
            let template = Template::new(&seq.frames[0], &gt, model, perusal)?;
            let frame = &seq.frames[1];
            let side = search_side_for(&gt, skim.search_scale) as f64;
            let mut r = rng::indexed_stream(data.seed, "skim-windows", i as u64);
            let mut out = Vec::new();
            let masked = mask_box(frame, &gt);
            for _ in 0..6 {
                // windows containing the whole target
                let x = (gt.right() - side + r.random_range(0.0..(side - gt.w).max(1.0))).max(0.0);
                let y = (gt.bottom() - side + r.random_range(0.0..(side - gt.h).max(1.0))).max(0.0);
                let x = x.min(frame.width() as f64 - side).max(0.0);
                let y = y.min(frame.height() as f64 - side).max(0.0);
                let w = BBox { x, y, w: side, h: side };
                let pos = crop_resize(frame, &w, skim.window_side)?;
                out.push((skim.features(&template, &pos)?, 1.0));
                let neg = crop_resize(&masked, &w, skim.window_side)?;
                out.push((skim.features(&template, &neg)?, 0.0));
            }
            Ok(out)
        })
        .collect::<Result<Vec<Vec<_>>>>()?;
    Ok(rows.into_iter().flatten().collect())
}

/// Replaces the box with the frame's mean pixel value.
pub fn mask_box(frame: &Frame, b: &BBox) -> Frame {
    let mean = (frame.pixels().iter().map(|&p| p as f64).sum::<f64>() / frame.pixels().len() as f64).round() as u8;
    let mut out = frame.clone();
    let x1 = (b.right().ceil() as usize).min(frame.width());
    let y1 = (b.bottom().ceil() as usize).min(frame.height());
    for y in (b.y.max(0.0) as usize)..y1 {
        for x in (b.x.max(0.0) as usize)..x1 {
            out.set(x, y, mean);
        }
    }
    out
}

/// A benchmark suite of synthetic sequences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub num_sequences: usize,
    pub synth: SynthConfig,
    /// Build teleport sequences instead of long-term ones.
    pub redetect: bool,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct SuiteSequence {
    pub frames: Vec<Frame>,
    pub groundtruth: GroundTruth,
    pub teleport_frame: Option<usize>,
}

pub fn build_suite(cfg: &SuiteConfig) -> Result<Vec<SuiteSequence>> {
    (0..cfg.num_sequences)
        .into_par_iter()
        .map(|i| {
            let synth = SynthConfig {
                seed: rng::indexed_seed(cfg.seed, "suite-seq", i as u64),
                ..cfg.synth.clone()
            };
            let s = if cfg.redetect {
                redetection_protocol(&synth)?
            } else {
                generate_sequence(&synth)?
            };
            Ok(SuiteSequence {
                frames: s.frames,
                groundtruth: s.groundtruth,
                teleport_frame: s.teleport_frame,
            })
        })
        .collect()
}

/// Runs one tracker configuration over every sequence of a suite.
pub fn track_suite(config: &TrackerConfig, models: &Models, suite: &[SuiteSequence]) -> Result<Vec<TrackRun>> {
    let tracker = Tracker::new(config.clone(), models)?;
    suite
        .par_iter()
        .map(|s| {
            let init = s.groundtruth.boxes[0].ok_or_else(|| Error::Data("first frame must be annotated".into()))?;
            run_sequence(&tracker, &s.frames, init)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteMetrics {
    pub f: FScore,
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub maxgm: Option<f64>,
    pub global_frames: usize,
    pub global_perusals: usize,
    pub local_perusals: usize,
    pub redetect: Option<RedetectSummary>,
}

pub fn evaluate_suite(runs: &[TrackRun], suite: &[SuiteSequence]) -> Result<SuiteMetrics> {
    let pairs: Vec<(&PredictionTrace, &GroundTruth)> = runs.iter().zip(suite).map(|(r, s)| (&r.trace, &s.groundtruth)).collect();
    let curve = eval::pr_curve_multi(&pairs, eval::DEFAULT_THRESHOLDS)?;
    let mut counts = RateCounts::default();
    for (p, g) in &pairs {
        counts = counts.merge(eval::rate_counts(p, g, eval::DEFAULT_IOU_MIN, None)?);
    }
    let (tpr, tnr) = (counts.tpr(), counts.tnr());
    let redetect = suite.iter().all(|s| s.teleport_frame.is_some()).then(|| {
        let rd: Vec<(&PredictionTrace, &GroundTruth, usize)> = runs
            .iter()
            .zip(suite)
            .map(|(r, s)| (&r.trace, &s.groundtruth, s.teleport_frame.unwrap()))
            .collect();
        eval::redetect_metrics(&rd, eval::DEFAULT_IOU_MIN)
    });
    Ok(SuiteMetrics {
        f: eval::f_score(&curve),
        tpr,
        tnr,
        maxgm: tpr.zip(tnr).map(|(a, b)| eval::maxgm(a, b)),
        global_frames: runs.iter().map(|r| r.global_frames()).sum(),
        global_perusals: runs.iter().map(|r| r.global_perusals()).sum(),
        local_perusals: runs.iter().map(|r| r.local_perusals()).sum(),
        redetect,
    })
}
