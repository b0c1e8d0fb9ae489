//! Per-frame orchestration: local perusal while the target is judged
//! present, skim-pruned global search after it is judged absent.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingModel;
use crate::error::{Error, Result};
use crate::geometry::{search_region_for, search_side_for, BBox, Region};
use crate::media::Frame;
use crate::perusal::{peruse, select_best, Candidate, NccProposer, PerusalConfig, Proposer, Template};
use crate::skimming::{skim_select, sliding_windows, SkimModel};
use crate::trace::{PredictionTrace, TraceRecord};

/// Which components are active; mirrors the component ablation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Regressor only, local search every frame, presence from similarity.
    R,
    /// Skimming + regressor, image-wide search every frame.
    SR,
    /// Regressor + verifier with global search over every window.
    RV,
    /// Full tracker: regressor + verifier, skim-pruned global search.
    SRV,
}

impl Variant {
    pub fn uses_verifier(self) -> bool {
        matches!(self, Variant::RV | Variant::SRV)
    }

    pub fn uses_skimming(self) -> bool {
        matches!(self, Variant::SR | Variant::SRV)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::R => "r",
            Variant::SR => "sr",
            Variant::RV => "rv",
            Variant::SRV => "srv",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "r" => Ok(Variant::R),
            "sr" => Ok(Variant::SR),
            "rv" => Ok(Variant::RV),
            "srv" => Ok(Variant::SRV),
            _ => Err(format!("unknown variant {s:?} (expected r, sr, rv or srv)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    /// Presence threshold on the best confidence.
    pub theta: f64,
    /// Windows kept by skimming.
    pub k: usize,
    /// Local search region side relative to the larger target side.
    pub search_scale: f64,
    pub variant: Variant,
    /// When false the tracker never leaves local search.
    pub global_search: bool,
    /// Fraction of the size change accepted per confident frame; `1` jumps
    /// straight to the candidate's size.
    pub size_lr: f64,
    pub perusal: PerusalConfig,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            theta: 0.65,
            k: 3,
            search_scale: 4.0,
            variant: Variant::SRV,
            global_search: true,
            size_lr: 0.3,
            perusal: PerusalConfig::default(),
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::Config(format!("theta {} outside [0, 1]", self.theta)));
        }
        if self.k == 0 {
            return Err(Error::Config("K must be at least 1".into()));
        }
        if !(self.search_scale >= 1.0) {
            return Err(Error::Config("search scale must be at least 1".into()));
        }
        if self.perusal.n_max == 0 {
            return Err(Error::Config("n_max must be at least 1".into()));
        }
        Ok(())
    }
}

/// Trained models shared read-only by every tracker instance.
#[derive(Clone, Debug)]
pub struct Models {
    pub embedding: EmbeddingModel,
    pub skim: SkimModel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Local,
    Global,
}

#[derive(Clone, Debug)]
pub struct TrackerState {
    /// Search strategy for the next frame.
    pub mode: Mode,
    /// Last confidently located box.
    pub last_box: BBox,
    pub template: Arc<Template>,
    /// Index of the next frame to process.
    pub frame_index: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutput {
    /// Best candidate of this frame, reported even when absent. Its centre
    /// is the candidate's; its size moves from the last box by `size_lr`.
    pub bbox: BBox,
    pub confidence: f64,
    pub similarity: f64,
    pub present: bool,
    /// Search strategy used for this frame.
    pub mode: Mode,
    pub regions_perused: usize,
}

pub struct Tracker<'m> {
    config: TrackerConfig,
    models: &'m Models,
    skim: SkimModel,
    proposer: Box<dyn Proposer + Send + Sync>,
}

impl<'m> Tracker<'m> {
    pub fn new(config: TrackerConfig, models: &'m Models) -> Result<Self> {
        let proposer = Box::new(NccProposer::new(config.perusal.clone()));
        Tracker::with_proposer(config, models, proposer)
    }

    pub fn with_proposer(
        config: TrackerConfig,
        models: &'m Models,
        proposer: Box<dyn Proposer + Send + Sync>,
    ) -> Result<Self> {
        config.validate()?;
        // windows are perused at the search resolution, so the scorer must see
        // the same geometry
        let skim = SkimModel {
            search_scale: config.search_scale,
            window_side: config.perusal.search_side,
            ..models.skim.clone()
        };
        Ok(Tracker {
            config,
            models,
            skim,
            proposer,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn init(&self, frame: &Frame, bbox: BBox) -> Result<TrackerState> {
        bbox.validate()?;
        if bbox.clip_to(frame.width(), frame.height()).is_none() {
            return Err(Error::OutsideFrame);
        }
        let template = Template::new(frame, &bbox, &self.models.embedding, &self.config.perusal)?;
        Ok(TrackerState {
            mode: Mode::Local,
            last_box: bbox,
            template: Arc::new(template),
            frame_index: 1,
        })
    }

    fn examine(&self, state: &TrackerState, region: &Region, frame: &Frame) -> Result<Candidate> {
        let target = (state.last_box.w, state.last_box.h);
        if self.config.variant.uses_verifier() {
            let p = peruse(
                self.proposer.as_ref(),
                &self.models.embedding,
                &state.template,
                region,
                frame,
                target,
                &self.config.perusal,
            )?;
            Ok(p.best)
        } else {
            let proposals = self
                .proposer
                .propose(&state.template, region, frame, target, self.config.perusal.n_max)?;
            let top = proposals
                .first()
                .ok_or_else(|| Error::Data("proposer returned no candidates".into()))?;
            Ok(Candidate {
                bbox: top.bbox,
                similarity: top.similarity,
                confidence: top.similarity.clamp(0.0, 1.0),
            })
        }
    }

    fn global_regions(&self, state: &TrackerState, frame: &Frame) -> Result<Vec<Region>> {
        let side = search_side_for(&state.last_box, self.config.search_scale);
        let windows = sliding_windows(frame.width(), frame.height(), side);
        if self.config.variant.uses_skimming() {
            Ok(skim_select(&self.skim, &state.template, frame, &windows, self.config.k)?
                .into_iter()
                .map(|w| w.region)
                .collect())
        } else {
            Ok(windows.windows)
        }
    }

    /// Processes one frame and returns the successor state.
    pub fn step(&self, state: &TrackerState, frame: &Frame) -> Result<(TrackerState, StepOutput)> {
        let mode = match self.config.variant {
            Variant::R => Mode::Local,
            Variant::SR => Mode::Global,
            _ if !self.config.global_search => Mode::Local,
            _ => state.mode,
        };
        let regions = match mode {
            Mode::Local => vec![search_region_for(
                &state.last_box,
                frame.width(),
                frame.height(),
                self.config.search_scale,
            )],
            Mode::Global => self.global_regions(state, frame)?,
        };
        let candidates = regions
            .iter()
            .map(|r| self.examine(state, r, frame))
            .collect::<Result<Vec<_>>>()?;
        let mut best = candidates[select_best(&candidates).expect("at least one region")].clone();
        let (cx, cy) = best.bbox.center();
        let lr = self.config.size_lr;
        let w = state.last_box.w + lr * (best.bbox.w - state.last_box.w);
        let h = state.last_box.h + lr * (best.bbox.h - state.last_box.h);
        best.bbox = BBox::from_center(cx, cy, w, h);

        let present = best.confidence >= self.config.theta;
        let next_mode = if present || !self.config.global_search {
            Mode::Local
        } else {
            Mode::Global
        };
        let next = TrackerState {
            mode: next_mode,
            last_box: if present { best.bbox } else { state.last_box },
            template: Arc::clone(&state.template),
            frame_index: state.frame_index + 1,
        };
        Ok((
            next,
            StepOutput {
                bbox: best.bbox,
                confidence: best.confidence,
                similarity: best.similarity,
                present,
                mode,
                regions_perused: regions.len(),
            },
        ))
    }
}

/// Per-frame diagnostics of a run; index 0 is the initialization frame.
#[derive(Clone, Debug, Default)]
pub struct TrackRun {
    pub trace: PredictionTrace,
    /// Search strategy of each frame (`Local` for frame 0).
    pub modes: Vec<Mode>,
    /// Strategy chosen for the following frame.
    pub next_modes: Vec<Mode>,
    /// Regions perused per frame (0 for frame 0).
    pub regions_perused: Vec<usize>,
}

impl TrackRun {
    pub fn global_frames(&self) -> usize {
        self.modes.iter().filter(|m| **m == Mode::Global).count()
    }

    /// Perusal invocations summed over global-search frames.
    pub fn global_perusals(&self) -> usize {
        self.modes
            .iter()
            .zip(&self.regions_perused)
            .filter(|(m, _)| **m == Mode::Global)
            .map(|(_, n)| n)
            .sum()
    }

    pub fn local_perusals(&self) -> usize {
        self.modes
            .iter()
            .zip(&self.regions_perused)
            .filter(|(m, _)| **m == Mode::Local)
            .map(|(_, n)| n)
            .sum()
    }
}

/// Initializes on the first frame and steps through the rest.
pub fn run_sequence(tracker: &Tracker, frames: &[Frame], init_box: BBox) -> Result<TrackRun> {
    let first = frames
        .first()
        .ok_or_else(|| Error::Data("sequence has no frames".into()))?;
    let mut state = tracker.init(first, init_box)?;
    let mut run = TrackRun::default();
    run.trace.records.push(TraceRecord {
        bbox: init_box,
        confidence: 1.0,
        present: true,
    });
    run.modes.push(Mode::Local);
    run.next_modes.push(Mode::Local);
    run.regions_perused.push(0);
    for frame in &frames[1..] {
        if frame.width() != first.width() || frame.height() != first.height() {
            return Err(Error::InvalidFrame("frame size changed mid-sequence".into()));
        }
        let (next, out) = tracker.step(&state, frame)?;
        run.trace.records.push(TraceRecord {
            bbox: out.bbox,
            confidence: out.confidence,
            present: out.present,
        });
        run.modes.push(out.mode);
        run.next_modes.push(next.mode);
        run.regions_perused.push(out.regions_perused);
        state = next;
    }
    Ok(run)
}

#[cfg(test)]
mod tests;
