//! Command-line front end: `synth`, `train`, `track`, `eval`, `sweep` and
//! `redetect-eval`.
//!
//! Machine outputs go to files (or stdout for `eval`); logs go to stderr.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::embed::{EmbeddingModel, TrainConfig};
use crate::error::{Error, Result};
use crate::eval::{self, FScore, RateCounts};
use crate::geometry::BBox;
use crate::pipeline::{self, CascadeConfig, SuiteConfig, SuiteSequence, TrainPlan};
use crate::sequence::{fmt_sig, GroundTruth, Sequence};
use crate::skimming::SkimModel;
use crate::synth::{generate_sequence, redetection_protocol, SynthConfig};
use crate::trace::PredictionTrace;
use crate::tracker::{run_sequence, Models, TrackRun, Tracker, TrackerConfig, Variant};

/// File names inside a model directory.
pub const EMBEDDING_FILE: &str = "embedding.bin";
pub const BASE_EMBEDDING_FILE: &str = "embedding_base.bin";
pub const SKIM_FILE: &str = "skim.bin";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Parser, Debug)]
#[command(name = "splt", version, about = "Skimming-perusal long-term tracker")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic sequence directory.
    Synth(SynthArgs),
    /// Train the embedding (and optionally the skim scorer).
    Train(TrainArgs),
    /// Track one sequence and write its prediction trace.
    Track(TrackArgs),
    /// Score traces against ground truth.
    Eval(EvalArgs),
    /// Run a grid of theta or K values over a suite.
    Sweep(SweepArgs),
    /// Measure re-detection on teleport sequences.
    RedetectEval(RedetectArgs),
}

#[derive(Args, Debug, Clone)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1200)]
    pub frames: usize,
    #[arg(long, default_value_t = 12)]
    pub disappearances: usize,
    #[arg(long = "dis-len", default_value_t = 40)]
    pub dis_len: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Teleport protocol instead of a long-term sequence.
    #[arg(long)]
    pub redetect: bool,
    #[arg(long, default_value_t = 320)]
    pub width: usize,
    #[arg(long, default_value_t = 240)]
    pub height: usize,
    #[arg(long = "target-side", default_value_t = 28)]
    pub target_side: usize,
    #[arg(long, default_value_t = 2)]
    pub distractors: usize,
    #[arg(long, default_value_t = 3.0)]
    pub noise: f64,
    /// Cover the target with an occluder while absent.
    #[arg(long)]
    pub occlusion: bool,
    #[arg(long = "teleport-frame")]
    pub teleport_frame: Option<usize>,
}

impl SynthArgs {
    fn config(&self) -> SynthConfig {
        SynthConfig {
            frame_w: self.width,
            frame_h: self.height,
            num_frames: self.frames,
            target_side: self.target_side,
            num_disappearances: self.disappearances,
            disappearance_len: self.dis_len,
            num_distractors: self.distractors,
            noise_sigma: self.noise,
            occlusion: self.occlusion,
            teleport_frame: self.teleport_frame,
            seed: self.seed,
            ..SynthConfig::default()
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    /// Output model directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    /// Triplet margin.
    #[arg(long, default_value_t = 0.2)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long = "triplets-per-epoch", default_value_t = 2000)]
    pub triplets_per_epoch: usize,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, default_value_t = 48)]
    pub targets: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Mine hard examples with the trained verifier and fine-tune on them.
    #[arg(long)]
    pub cascade: bool,
    /// Sequence directories to mine from (implies `--cascade`; default:
    /// synthetic sequences).
    #[arg(long = "mine", num_args = 1..)]
    pub mine: Vec<PathBuf>,
    /// Fit the logistic skim scorer instead of keeping the analytic one.
    #[arg(long = "train-skim")]
    pub train_skim: bool,
}

impl TrainArgs {
    pub fn plan(&self) -> TrainPlan {
        let base = TrainPlan::default();
        TrainPlan {
            data: pipeline::TrainingDataConfig {
                num_targets: self.targets,
                seed: self.seed.wrapping_add(base.data.seed),
                ..base.data
            },
            embed: TrainConfig {
                margin: self.alpha,
                lr: self.lr,
                momentum: self.momentum,
                epochs: self.epochs,
                batch: self.batch,
                triplets_per_epoch: self.triplets_per_epoch,
                embedding_dim: self.dim,
                seed: self.seed,
                ..TrainConfig::default()
            },
            cascade: (self.cascade || !self.mine.is_empty()).then(CascadeConfig::default),
            train_skim: self.train_skim,
            ..base
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Ablation {
    R,
    Sr,
    Rv,
    Srv,
}

impl From<Ablation> for Variant {
    fn from(a: Ablation) -> Variant {
        match a {
            Ablation::R => Variant::R,
            Ablation::Sr => Variant::SR,
            Ablation::Rv => Variant::RV,
            Ablation::Srv => Variant::SRV,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct TrackerArgs {
    /// Model directory written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 0.65)]
    pub theta: f64,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 4.0)]
    pub scale: f64,
    #[arg(long, value_enum, default_value_t = Ablation::Srv)]
    pub ablate: Ablation,
    /// Never leave local search.
    #[arg(long = "local-only")]
    pub local_only: bool,
}

impl TrackerArgs {
    pub fn config(&self) -> TrackerConfig {
        TrackerConfig {
            theta: self.theta,
            k: self.k,
            search_scale: self.scale,
            variant: self.ablate.into(),
            global_search: !self.local_only,
            ..TrackerConfig::default()
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct TrackArgs {
    /// Sequence directory.
    #[arg(long)]
    pub seq: PathBuf,
    /// Output trace file.
    #[arg(long)]
    pub out: PathBuf,
    /// Initial box `x,y,w,h` (default: first ground-truth box).
    #[arg(long)]
    pub init: Option<String>,
    #[command(flatten)]
    pub tracker: TrackerArgs,
}

#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    /// Trace files, paired in order with `--seq` or `--gt`.
    #[arg(long, num_args = 1.., required = true)]
    pub trace: Vec<PathBuf>,
    /// Sequence directories holding the ground truth.
    #[arg(long, num_args = 1..)]
    pub seq: Vec<PathBuf>,
    /// Ground-truth files.
    #[arg(long, num_args = 1..)]
    pub gt: Vec<PathBuf>,
    #[arg(long, default_value_t = eval::DEFAULT_THRESHOLDS)]
    pub thresholds: usize,
    #[arg(long = "iou-min", default_value_t = eval::DEFAULT_IOU_MIN)]
    pub iou_min: f64,
    /// Evaluate TPR/TNR on every n-th frame only.
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    /// Directory for `metrics.csv` and `curve.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    Theta,
    K,
}

#[derive(Args, Debug, Clone)]
pub struct SuiteArgs {
    /// Sequence directories (default: a synthetic suite).
    #[arg(long, num_args = 1..)]
    pub seq: Vec<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub sequences: usize,
    #[arg(long = "suite-frames", default_value_t = 300)]
    pub suite_frames: usize,
    #[arg(long = "suite-seed", default_value_t = 500)]
    pub suite_seed: u64,
}

#[derive(Args, Debug, Clone)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub param: SweepParam,
    #[arg(long)]
    pub from: f64,
    #[arg(long)]
    pub to: f64,
    /// Grid points (default: 11 for theta, one per integer for K).
    #[arg(long)]
    pub steps: Option<usize>,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub suite: SuiteArgs,
    #[command(flatten)]
    pub tracker: TrackerArgs,
}

#[derive(Args, Debug, Clone)]
pub struct RedetectArgs {
    #[command(flatten)]
    pub suite: SuiteArgs,
    /// Directory for `redetect.csv` and `metrics.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub tracker: TrackerArgs,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub seconds: f64,
    pub frames: usize,
    pub fps: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PerusalCounts {
    pub local: usize,
    pub global: usize,
    pub global_frames: usize,
}

/// Everything needed to repeat a command.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub models: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub timing: Timing,
    pub perusals: Option<PerusalCounts>,
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl RunManifest {
    fn new(command: &str, config: serde_json::Value) -> Self {
        RunManifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config,
            ..RunManifest::default()
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_atomic(path, format!("{text}\n").as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format("manifest", path, e.to_string()))
    }
}

fn json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("config serializes")
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn timing(start: Instant, frames: usize) -> Timing {
    let seconds = start.elapsed().as_secs_f64();
    Timing {
        seconds,
        frames,
        fps: if seconds > 0.0 { frames as f64 / seconds } else { 0.0 },
    }
}

fn counts(runs: &[TrackRun]) -> PerusalCounts {
    PerusalCounts {
        local: runs.iter().map(|r| r.local_perusals()).sum(),
        global: runs.iter().map(|r| r.global_perusals()).sum(),
        global_frames: runs.iter().map(|r| r.global_frames()).sum(),
    }
}

/// Loads `embedding.bin` and `skim.bin` from a model directory.
pub fn load_models(dir: &Path) -> Result<Models> {
    if !dir.is_dir() {
        return Err(Error::Data(format!("model directory {} not found", dir.display())));
    }
    let embedding = EmbeddingModel::load(&dir.join(EMBEDDING_FILE))?;
    let skim_path = dir.join(SKIM_FILE);
    let skim = if skim_path.exists() {
        SkimModel::load(&skim_path)?
    } else {
        SkimModel::default()
    };
    Ok(Models { embedding, skim })
}

fn model_paths(dir: &Path) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    m.insert("embedding".into(), path_str(&dir.join(EMBEDDING_FILE)));
    m.insert("skim".into(), path_str(&dir.join(SKIM_FILE)));
    m
}

fn parse_box(s: &str) -> Result<BBox> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Config(format!("bad box {s:?}: {e}")))?;
    match v[..] {
        [x, y, w, h] => BBox::new(x, y, w, h),
        _ => Err(Error::Config(format!("box {s:?} needs four values x,y,w,h"))),
    }
}

pub fn cmd_synth(a: &SynthArgs) -> Result<RunManifest> {
    let start = Instant::now();
    let cfg = a.config();
    let s = if a.redetect {
        redetection_protocol(&cfg)?
    } else {
        generate_sequence(&cfg)?
    };
    let frames = s.frames.len();
    s.into_sequence().write(&a.out)?;
    let mut m = RunManifest::new("synth", json(&cfg));
    m.seed = Some(a.seed);
    m.extra.insert("redetect".into(), json(&a.redetect));
    m.outputs.push(path_str(&a.out));
    m.timing = timing(start, frames);
    m.write(&a.out.join(MANIFEST_FILE))?;
    log::info!("wrote {frames} frames to {}", a.out.display());
    Ok(m)
}

fn read_labeled(dirs: &[PathBuf]) -> Result<Vec<crate::embed::LabeledSequence>> {
    dirs.iter()
        .map(|d| {
            let s = Sequence::read(d)?;
            Ok(crate::embed::LabeledSequence {
                frames: s.frames,
                groundtruth: s.groundtruth,
            })
        })
        .collect()
}

pub fn cmd_train(a: &TrainArgs) -> Result<RunManifest> {
    let start = Instant::now();
    let plan = a.plan();
    let mined = if a.mine.is_empty() { None } else { Some(read_labeled(&a.mine)?) };
    let out = match &mined {
        Some(seqs) => pipeline::train_models_with(&plan, Some(seqs))?,
        None => pipeline::train_models(&plan)?,
    };
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let mut m = RunManifest::new("train", json(&plan));
    m.seed = Some(a.seed);
    let mut losses = String::from("stage,epoch,lr,loss\n");
    for (i, (l, lr)) in out.report.epoch_losses.iter().zip(&out.report.epoch_lrs).enumerate() {
        losses.push_str(&format!("embed,{i},{},{}\n", fmt_sig(*lr), fmt_sig(*l)));
    }
    if let Some((hard, tuned)) = &out.cascade {
        out.report.model.save(&a.out.join(BASE_EMBEDDING_FILE))?;
        m.models.insert("embedding_base".into(), path_str(&a.out.join(BASE_EMBEDDING_FILE)));
        m.extra.insert("false_accepts".into(), json(&hard.false_accepts.len()));
        m.extra.insert("false_rejects".into(), json(&hard.false_rejects.len()));
        m.extra.insert("hard_examples".into(), json(&hard.misclassified()));
        for (i, (l, lr)) in tuned.epoch_losses.iter().zip(&tuned.epoch_lrs).enumerate() {
            losses.push_str(&format!("cascade,{i},{},{}\n", fmt_sig(*lr), fmt_sig(*l)));
        }
    }
    if let Some(s) = &out.skim {
        m.extra.insert("skim_train_accuracy".into(), json(&s.train_accuracy));
        for (i, l) in s.epoch_losses.iter().enumerate() {
            losses.push_str(&format!("skim,{i},{},{}\n", fmt_sig(crate::skimming::SKIM_LR), fmt_sig(*l)));
        }
    }
    out.models.embedding.save(&a.out.join(EMBEDDING_FILE))?;
    out.models.skim.save(&a.out.join(SKIM_FILE))?;
    let loss_path = a.out.join("losses.csv");
    write_atomic(&loss_path, losses.as_bytes())?;
    m.models.extend(model_paths(&a.out));
    m.outputs.push(path_str(&loss_path));
    if !a.mine.is_empty() {
        m.inputs.insert("mine".into(), a.mine.iter().map(|p| path_str(p)).collect::<Vec<_>>().join(","));
    }
    m.timing = timing(start, 0);
    m.write(&a.out.join(MANIFEST_FILE))?;
    log::info!(
        "trained in {:.1}s; final loss {:.4}",
        m.timing.seconds,
        out.report.epoch_losses.last().copied().unwrap_or(0.0)
    );
    Ok(m)
}

fn manifest_path_for(out: &Path) -> PathBuf {
    let mut p = out.as_os_str().to_owned();
    p.push(".manifest.json");
    PathBuf::from(p)
}

pub fn cmd_track(a: &TrackArgs) -> Result<RunManifest> {
    let start = Instant::now();
    let models = load_models(&a.tracker.model)?;
    let seq = Sequence::read(&a.seq)?;
    let init = match &a.init {
        Some(s) => parse_box(s)?,
        None => seq
            .groundtruth
            .boxes
            .first()
            .copied()
            .flatten()
            .ok_or_else(|| Error::Data("first ground-truth box is absent; pass --init".into()))?,
    };
    let cfg = a.tracker.config();
    let tracker = Tracker::new(cfg.clone(), &models)?;
    let run = run_sequence(&tracker, &seq.frames, init)?;
    run.trace.write(&a.out)?;
    let mut m = RunManifest::new("track", json(&cfg));
    m.inputs.insert("seq".into(), path_str(&a.seq));
    m.inputs.insert("init".into(), format!("{},{},{},{}", init.x, init.y, init.w, init.h));
    m.models = model_paths(&a.tracker.model);
    m.outputs.push(path_str(&a.out));
    m.timing = timing(start, seq.frames.len());
    m.perusals = Some(counts(std::slice::from_ref(&run)));
    m.write(&manifest_path_for(&a.out))?;
    log::info!(
        "tracked {} frames at {:.1} fps, {} global frames",
        seq.frames.len(),
        m.timing.fps,
        run.global_frames()
    );
    Ok(m)
}

/// Scores computed by `eval`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub f: FScore,
    pub counts: RateCounts,
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub maxgm: Option<f64>,
    pub curve: eval::PrCurve,
}

impl EvalReport {
    pub fn metrics_rows(&self) -> Vec<(&'static str, f64)> {
        let mut rows = vec![
            ("f", self.f.f),
            ("tau", self.f.tau),
            ("pr", self.f.pr),
            ("re", self.f.re),
        ];
        rows.extend(self.tpr.map(|v| ("tpr", v)));
        rows.extend(self.tnr.map(|v| ("tnr", v)));
        rows.extend(self.maxgm.map(|v| ("maxgm", v)));
        rows
    }

    pub fn table(&self) -> String {
        let na = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.3}"));
        format!(
            "F-score  {:.3}  (tau {:.3}, Pr {:.3}, Re {:.3})\nTPR {}  TNR {}  MaxGM {}\n",
            self.f.f,
            self.f.tau,
            self.f.pr,
            self.f.re,
            na(self.tpr),
            na(self.tnr),
            na(self.maxgm)
        )
    }
}

/// VOT-LT and OxUvA scores of aligned traces.
pub fn evaluate(runs: &[(&PredictionTrace, &GroundTruth)], thresholds: usize, iou_min: f64, stride: usize) -> Result<EvalReport> {
    let curve = eval::pr_curve_multi(runs, thresholds)?;
    let mut c = RateCounts::default();
    for (p, g) in runs {
        let idx = g.subsample_indices(stride.max(1));
        c = c.merge(eval::rate_counts(p, g, iou_min, Some(&idx))?);
    }
    let (tpr, tnr) = (c.tpr(), c.tnr());
    Ok(EvalReport {
        f: eval::f_score(&curve),
        counts: c,
        tpr,
        tnr,
        maxgm: tpr.zip(tnr).map(|(a, b)| eval::maxgm(a, b)),
        curve,
    })
}

pub fn cmd_eval(a: &EvalArgs) -> Result<(EvalReport, RunManifest)> {
    let start = Instant::now();
    let gts: Vec<GroundTruth> = if !a.seq.is_empty() {
        a.seq
            .iter()
            .map(|d| {
                let p = d.join("groundtruth.txt");
                let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                GroundTruth::parse(&text).map_err(|e| Error::format("ground truth", &p, e))
            })
            .collect::<Result<_>>()?
    } else {
        a.gt.iter()
            .map(|p| {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                GroundTruth::parse(&text).map_err(|e| Error::format("ground truth", p, e))
            })
            .collect::<Result<_>>()?
    };
    if gts.len() != a.trace.len() {
        return Err(Error::Config(format!(
            "{} traces but {} ground truths",
            a.trace.len(),
            gts.len()
        )));
    }
    let traces: Vec<PredictionTrace> = a.trace.iter().map(|p| PredictionTrace::read(p)).collect::<Result<_>>()?;
    let pairs: Vec<(&PredictionTrace, &GroundTruth)> = traces.iter().zip(&gts).collect();
    let report = evaluate(&pairs, a.thresholds, a.iou_min, a.stride)?;
    let mut m = RunManifest::new(
        "eval",
        serde_json::json!({"thresholds": a.thresholds, "iou_min": a.iou_min, "stride": a.stride}),
    );
    for (i, p) in a.trace.iter().enumerate() {
        m.inputs.insert(format!("trace{i}"), path_str(p));
    }
    for (i, p) in a.seq.iter().chain(&a.gt).enumerate() {
        m.inputs.insert(format!("gt{i}"), path_str(p));
    }
    if let Some(dir) = &a.out {
        let mp = dir.join("metrics.csv");
        let cp = dir.join("curve.csv");
        write_atomic(&mp, eval::metrics_csv(&report.metrics_rows()).as_bytes())?;
        write_atomic(&cp, eval::curve_csv(&report.curve).as_bytes())?;
        m.outputs.extend([path_str(&mp), path_str(&cp)]);
        m.timing = timing(start, traces.iter().map(|t| t.len()).sum());
        m.write(&dir.join(MANIFEST_FILE))?;
    }
    Ok((report, m))
}

fn load_suite(s: &SuiteArgs, redetect: bool) -> Result<Vec<SuiteSequence>> {
    if s.seq.is_empty() {
        return pipeline::build_suite(&suite_config(s, redetect));
    }
    s.seq
        .iter()
        .map(|d| {
            let q = Sequence::read(d)?;
            let teleport_frame = q.meta_usize("teleport_frame");
            if redetect && teleport_frame.is_none() {
                return Err(Error::Data(format!("{} has no teleport_frame in meta.txt", d.display())));
            }
            Ok(SuiteSequence {
                frames: q.frames,
                groundtruth: q.groundtruth,
                teleport_frame,
            })
        })
        .collect()
}

/// Synthetic suite behind `sweep` and `redetect-eval` when no directories
/// are given.
pub fn suite_config(s: &SuiteArgs, redetect: bool) -> SuiteConfig {
    let synth = if redetect {
        SynthConfig {
            num_frames: s.suite_frames,
            ..SynthConfig::default()
        }
    } else {
        SynthConfig {
            num_frames: s.suite_frames,
            num_disappearances: (s.suite_frames / 150).max(1),
            ..SynthConfig::default()
        }
    };
    SuiteConfig {
        num_sequences: s.sequences,
        synth,
        redetect,
        seed: s.suite_seed,
    }
}

fn grid(a: &SweepArgs) -> Result<Vec<f64>> {
    if !(a.from <= a.to) {
        return Err(Error::Config("--from must not exceed --to".into()));
    }
    let steps = match (a.steps, a.param) {
        (Some(n), _) => n,
        (None, SweepParam::Theta) => 11,
        (None, SweepParam::K) => (a.to - a.from).round() as usize + 1,
    };
    if steps == 0 {
        return Err(Error::Config("--steps must be positive".into()));
    }
    if steps == 1 {
        return Ok(vec![a.from]);
    }
    Ok((0..steps)
        .map(|i| a.from + (a.to - a.from) * i as f64 / (steps - 1) as f64)
        .collect())
}

/// One row of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub f: f64,
    pub maxgm: Option<f64>,
    pub global_frames: usize,
    pub global_perusals: usize,
    pub local_perusals: usize,
}

impl SweepRow {
    pub fn perusals_per_global_frame(&self) -> f64 {
        if self.global_frames == 0 {
            0.0
        } else {
            self.global_perusals as f64 / self.global_frames as f64
        }
    }
}

pub fn sweep_csv(param: SweepParam, rows: &[SweepRow]) -> String {
    let name = match param {
        SweepParam::Theta => "theta",
        SweepParam::K => "k",
    };
    let mut s = format!("{name},f,maxgm,global_frames,global_perusals,perusals_per_global_frame,local_perusals\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            fmt_sig(r.value),
            fmt_sig(r.f),
            r.maxgm.map_or("nan".to_string(), fmt_sig),
            r.global_frames,
            r.global_perusals,
            fmt_sig(r.perusals_per_global_frame()),
            r.local_perusals
        ));
    }
    s
}

pub fn cmd_sweep(a: &SweepArgs) -> Result<(Vec<SweepRow>, RunManifest)> {
    let start = Instant::now();
    let models = load_models(&a.tracker.model)?;
    let suite = load_suite(&a.suite, false)?;
    let values = grid(a)?;
    let base = a.tracker.config();
    let mut rows = Vec::with_capacity(values.len());
    let mut all = PerusalCounts::default();
    for &v in &values {
        let cfg = match a.param {
            SweepParam::Theta => TrackerConfig { theta: v, ..base.clone() },
            SweepParam::K => TrackerConfig {
                k: v.round().max(1.0) as usize,
                ..base.clone()
            },
        };
        let runs = pipeline::track_suite(&cfg, &models, &suite)?;
        let met = pipeline::evaluate_suite(&runs, &suite)?;
        log::info!("{:?} = {v}: F {:.3}", a.param, met.f.f);
        let c = counts(&runs);
        all.local += c.local;
        all.global += c.global;
        all.global_frames += c.global_frames;
        rows.push(SweepRow {
            value: match a.param {
                SweepParam::Theta => v,
                SweepParam::K => cfg.k as f64,
            },
            f: met.f.f,
            maxgm: met.maxgm,
            global_frames: met.global_frames,
            global_perusals: met.global_perusals,
            local_perusals: met.local_perusals,
        });
    }
    write_atomic(&a.out, sweep_csv(a.param, &rows).as_bytes())?;
    let mut m = RunManifest::new("sweep", json(&base));
    m.seed = Some(a.suite.suite_seed);
    m.models = model_paths(&a.tracker.model);
    m.extra.insert("param".into(), json(&format!("{:?}", a.param).to_lowercase()));
    m.extra.insert("values".into(), json(&values));
    if a.suite.seq.is_empty() {
        m.extra.insert("suite".into(), json(&suite_config(&a.suite, false)));
    } else {
        for (i, p) in a.suite.seq.iter().enumerate() {
            m.inputs.insert(format!("seq{i}"), path_str(p));
        }
    }
    m.outputs.push(path_str(&a.out));
    let frames: usize = suite.iter().map(|s| s.frames.len()).sum();
    m.timing = timing(start, frames * values.len());
    m.perusals = Some(all);
    m.write(&manifest_path_for(&a.out))?;
    Ok((rows, m))
}

/// Re-detection outcome of `redetect-eval`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RedetectReport {
    pub summary: eval::RedetectSummary,
    pub counts: PerusalCounts,
}

pub fn cmd_redetect(a: &RedetectArgs) -> Result<(RedetectReport, RunManifest)> {
    let start = Instant::now();
    let models = load_models(&a.tracker.model)?;
    let suite = load_suite(&a.suite, true)?;
    let cfg = a.tracker.config();
    let runs = pipeline::track_suite(&cfg, &models, &suite)?;
    let rd: Vec<(&PredictionTrace, &GroundTruth, usize)> = runs
        .iter()
        .zip(&suite)
        .map(|(r, s)| (&r.trace, &s.groundtruth, s.teleport_frame.expect("checked on load")))
        .collect();
    let summary = eval::redetect_metrics(&rd, eval::DEFAULT_IOU_MIN);
    let report = RedetectReport {
        summary,
        counts: counts(&runs),
    };
    let mut m = RunManifest::new("redetect-eval", json(&cfg));
    m.seed = Some(a.suite.suite_seed);
    m.models = model_paths(&a.tracker.model);
    if a.suite.seq.is_empty() {
        m.extra.insert("suite".into(), json(&suite_config(&a.suite, true)));
    }
    m.extra.insert("success".into(), json(&report.summary.success));
    m.extra.insert("frames_avg".into(), json(&report.summary.frames_avg));
    m.perusals = Some(report.counts.clone());
    if let Some(dir) = &a.out {
        let mut per = String::from("sequence,offset\n");
        for (i, o) in report.summary.offsets.iter().enumerate() {
            per.push_str(&format!("{i},{}\n", o.map_or("none".to_string(), |v| v.to_string())));
        }
        let rp = dir.join("redetect.csv");
        let mp = dir.join("metrics.csv");
        write_atomic(&rp, per.as_bytes())?;
        let mut rows = vec![("success", report.summary.success)];
        rows.extend(report.summary.frames_avg.map(|f| ("frames", f)));
        write_atomic(&mp, eval::metrics_csv(&rows).as_bytes())?;
        m.outputs.extend([path_str(&rp), path_str(&mp)]);
        m.timing = timing(start, suite.iter().map(|s| s.frames.len()).sum());
        m.write(&dir.join(MANIFEST_FILE))?;
    }
    Ok((report, m))
}

/// Runs a parsed command, printing human-readable results to stdout.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => {
            cmd_synth(&a)?;
        }
        Command::Train(a) => {
            cmd_train(&a)?;
        }
        Command::Track(a) => {
            cmd_track(&a)?;
        }
        Command::Eval(a) => {
            let (r, _) = cmd_eval(&a)?;
            print!("{}", r.table());
        }
        Command::Sweep(a) => {
            let (rows, _) = cmd_sweep(&a)?;
            print!("{}", sweep_csv(a.param, &rows));
        }
        Command::RedetectEval(a) => {
            let (r, _) = cmd_redetect(&a)?;
            let frames = r.summary.frames_avg.map_or("-".to_string(), |f| format!("{f:.2}"));
            println!("Frames {frames}  Success {:.0}%", 100.0 * r.summary.success);
        }
    }
    Ok(())
}
