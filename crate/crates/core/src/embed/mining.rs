//! Cascaded training support: run perusal over labeled sequences and collect
//! the verifier's mistakes as hard examples.

use serde::{Deserialize, Serialize};

use super::{EmbeddingModel, TripletExample};
use crate::error::{Error, Result};
use crate::geometry::{iou, search_region_for, BBox};
use crate::media::{crop_resize, extract_features, FeatureVector, Frame};
use crate::perusal::{verify, NccProposer, PerusalConfig, Proposer, Template};
use crate::sequence::GroundTruth;

/// Frames with annotations; the first frame must show the target.
#[derive(Clone, Debug)]
pub struct LabeledSequence {
    pub frames: Vec<Frame>,
    pub groundtruth: GroundTruth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiningConfig {
    pub theta: f64,
    /// Overlap at which a candidate counts as the target.
    pub iou_min: f64,
    pub search_scale: f64,
    /// Only every `frame_stride`-th frame is examined.
    pub frame_stride: usize,
    pub perusal: PerusalConfig,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            theta: 0.65,
            iou_min: 0.5,
            search_scale: 4.0,
            frame_stride: 1,
            perusal: PerusalConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct HardExamples {
    /// Wrong candidates the verifier accepted (confidence > θ).
    pub false_accepts: Vec<FeatureVector>,
    /// Correct candidates the verifier rejected (confidence ≤ θ).
    pub false_rejects: Vec<FeatureVector>,
    /// Fine-tuning triplets anchored at each sequence's template.
    pub triplets: Vec<TripletExample>,
}

impl HardExamples {
    pub fn misclassified(&self) -> usize {
        self.false_accepts.len() + self.false_rejects.len()
    }
}

/// Peruses every examined frame around the annotated (or, while absent, the
/// last annotated) location and collects misclassified candidates.
///
/// Each false accept becomes the negative of a triplet whose positive is the
/// ground-truth crop of the nearest annotated frame. Each false reject
/// becomes a positive, paired with the most confident wrong candidate of
/// the same frame or, failing that, the latest false accept of the sequence.
pub fn mine_hard_examples(
    model: &EmbeddingModel,
    sequences: &[LabeledSequence],
    cfg: &MiningConfig,
) -> Result<HardExamples> {
    let proposer = NccProposer::new(cfg.perusal.clone());
    let fcfg = &cfg.perusal.features;
    let mut out = HardExamples::default();
    for seq in sequences {
        if seq.frames.len() != seq.groundtruth.len() {
            return Err(Error::Data("frame count differs from ground truth length".into()));
        }
        let Some(Some(init)) = seq.groundtruth.boxes.first() else {
            return Err(Error::Data("first frame of a mining sequence must be annotated".into()));
        };
        let template = Template::new(&seq.frames[0], init, model, &cfg.perusal)?;
        let mut last: BBox = *init;
        let mut last_positive = template.feature.clone();
        let mut hardest_negative: Option<FeatureVector> = None;
        for t in (1..seq.frames.len()).step_by(cfg.frame_stride.max(1)) {
            let frame = &seq.frames[t];
            let gt = seq.groundtruth.boxes[t];
            if let Some(g) = gt {
                last = g;
                if let Ok(p) = crop_resize(frame, &g, cfg.perusal.template_side) {
                    last_positive = extract_features(&p, fcfg);
                }
            }
            let region = search_region_for(&last, frame.width(), frame.height(), cfg.search_scale);
            let proposals = proposer.propose(&template, &region, frame, (last.w, last.h), cfg.perusal.n_max)?;
            let candidates = verify(model, &template, frame, &proposals, &cfg.perusal)?;
            let mut frame_negative: Option<(f64, FeatureVector)> = None;
            let mut frame_rejects = Vec::new();
            for c in &candidates {
                let correct = gt.is_some_and(|g| iou(&c.bbox, &g) >= cfg.iou_min);
                let accepted = c.confidence > cfg.theta;
                if correct && accepted {
                    continue;
                }
                let f = features_of(frame, &c.bbox, cfg)?;
                if correct {
                    frame_rejects.push(f);
                    continue;
                }
                if accepted {
                    out.triplets.push(TripletExample {
                        anchor: template.feature.clone(),
                        positive: last_positive.clone(),
                        negative: f.clone(),
                    });
                    hardest_negative = Some(f.clone());
                    out.false_accepts.push(f.clone());
                }
                if frame_negative.as_ref().is_none_or(|(s, _)| c.confidence > *s) {
                    frame_negative = Some((c.confidence, f));
                }
            }
            for f in frame_rejects {
                let negative = frame_negative.as_ref().map(|(_, n)| n.clone()).or_else(|| hardest_negative.clone());
                if let Some(negative) = negative {
                    out.triplets.push(TripletExample {
                        anchor: template.feature.clone(),
                        positive: f.clone(),
                        negative,
                    });
                }
                out.false_rejects.push(f);
            }
        }
    }
    Ok(out)
}

fn features_of(frame: &Frame, b: &BBox, cfg: &MiningConfig) -> Result<FeatureVector> {
    let p = crop_resize(frame, b, cfg.perusal.template_side)?;
    Ok(extract_features(&p, &cfg.perusal.features))
}
