//! Long-term evaluation: VOT-LT precision/recall/F with the optimal
//! threshold, re-detection statistics, and OxUvA TPR/TNR/MaxGM.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::iou;
use crate::sequence::{fmt_sig, GroundTruth};
use crate::trace::PredictionTrace;

/// Default number of thresholds in a precision/recall sweep.
pub const DEFAULT_THRESHOLDS: usize = 101;
/// Default overlap for "correctly located".
pub const DEFAULT_IOU_MIN: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub thresholds: Vec<f64>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f: Vec<f64>,
}

/// Harmonic mean of precision and recall; zero when both are zero.
pub fn f_measure(pr: f64, re: f64) -> f64 {
    if pr + re <= 0.0 {
        0.0
    } else {
        2.0 * pr * re / (pr + re)
    }
}

fn check_aligned(pred: &PredictionTrace, gt: &GroundTruth) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::Data(format!(
            "trace has {} frames but ground truth has {}",
            pred.len(),
            gt.len()
        )));
    }
    Ok(())
}

fn overlaps(pred: &PredictionTrace, gt: &GroundTruth) -> Vec<Option<f64>> {
    pred.records
        .iter()
        .zip(&gt.boxes)
        .map(|(r, g)| g.map(|g| iou(&r.bbox, &g)))
        .collect()
}

/// Precision and recall at one threshold. `ious[i]` is `None` on frames
/// where the target is absent.
fn pr_at(conf: &[f64], ious: &[Option<f64>], tau: f64) -> (f64, f64) {
    let mut passed = 0usize;
    let mut sum_all = 0.0;
    let mut sum_present = 0.0;
    let mut present = 0usize;
    for (c, o) in conf.iter().zip(ious) {
        if o.is_some() {
            present += 1;
        }
        if *c >= tau {
            passed += 1;
            let v = o.unwrap_or(0.0);
            sum_all += v;
            if o.is_some() {
                sum_present += v;
            }
        }
    }
    let pr = if passed == 0 { 0.0 } else { sum_all / passed as f64 };
    (pr, sum_present / present as f64)
}

fn uniform_grid(max: f64, n: usize) -> Vec<f64> {
    let n = n.max(1);
    if n == 1 {
        return vec![0.0];
    }
    (0..n).map(|i| max * i as f64 / (n - 1) as f64).collect()
}

/// Threshold sweep for one sequence.
pub fn pr_curve(pred: &PredictionTrace, gt: &GroundTruth, num_thresholds: usize) -> Result<PrCurve> {
    pr_curve_multi(&[(pred, gt)], num_thresholds)
}

/// Threshold sweep over several sequences: precision and recall are
/// computed per sequence on a shared grid, then averaged.
pub fn pr_curve_multi(runs: &[(&PredictionTrace, &GroundTruth)], num_thresholds: usize) -> Result<PrCurve> {
    let mut prepared = Vec::with_capacity(runs.len());
    let mut max_conf: f64 = 0.0;
    for (pred, gt) in runs {
        check_aligned(pred, gt)?;
        if gt.present_count() == 0 {
            return Err(Error::Data("recall is undefined without target-present frames".into()));
        }
        let conf: Vec<f64> = pred.records.iter().map(|r| r.confidence).collect();
        max_conf = conf.iter().copied().fold(max_conf, f64::max);
        prepared.push((conf, overlaps(pred, gt)));
    }
    if prepared.is_empty() {
        return Err(Error::Data("no sequences to evaluate".into()));
    }
    let thresholds = uniform_grid(max_conf, num_thresholds);
    let n = prepared.len() as f64;
    let mut precision = Vec::with_capacity(thresholds.len());
    let mut recall = Vec::with_capacity(thresholds.len());
    for &tau in &thresholds {
        let (sp, sr) = prepared.iter().fold((0.0, 0.0), |(a, b), (c, o)| {
            let (p, r) = pr_at(c, o, tau);
            (a + p, b + r)
        });
        precision.push(sp / n);
        recall.push(sr / n);
    }
    debug_assert!(recall.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    let f = precision.iter().zip(&recall).map(|(p, r)| f_measure(*p, *r)).collect();
    Ok(PrCurve {
        thresholds,
        precision,
        recall,
        f,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FScore {
    pub f: f64,
    pub tau: f64,
    pub pr: f64,
    pub re: f64,
}

/// Best point of the F curve; ties go to the lowest threshold.
pub fn f_score(curve: &PrCurve) -> FScore {
    let mut best = 0;
    for i in 1..curve.f.len() {
        if curve.f[i] > curve.f[best] {
            best = i;
        }
    }
    FScore {
        f: curve.f.get(best).copied().unwrap_or(0.0),
        tau: curve.thresholds.get(best).copied().unwrap_or(0.0),
        pr: curve.precision.get(best).copied().unwrap_or(0.0),
        re: curve.recall.get(best).copied().unwrap_or(0.0),
    }
}

/// Offset from `teleport` of the first frame reported present with
/// `IoU ≥ iou_min`, if any.
pub fn redetection_offset(pred: &PredictionTrace, gt: &GroundTruth, teleport: usize, iou_min: f64) -> Option<usize> {
    (teleport..pred.len().min(gt.len())).find_map(|t| {
        let r = &pred.records[t];
        let hit = r.present && gt.boxes[t].is_some_and(|g| iou(&r.bbox, &g) >= iou_min);
        hit.then_some(t - teleport)
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RedetectSummary {
    /// Mean offset over successful sequences; `None` when none succeeded.
    pub frames_avg: Option<f64>,
    /// Fraction of sequences with a re-detection, in `[0, 1]`.
    pub success: f64,
    pub offsets: Vec<Option<usize>>,
}

/// Aggregates re-detection over `(trace, ground truth, teleport frame)` runs.
pub fn redetect_metrics(runs: &[(&PredictionTrace, &GroundTruth, usize)], iou_min: f64) -> RedetectSummary {
    let offsets: Vec<Option<usize>> = runs
        .iter()
        .map(|(p, g, d)| redetection_offset(p, g, *d, iou_min))
        .collect();
    let hits: Vec<usize> = offsets.iter().flatten().copied().collect();
    RedetectSummary {
        frames_avg: (!hits.is_empty()).then(|| hits.iter().sum::<usize>() as f64 / hits.len() as f64),
        success: if runs.is_empty() { 0.0 } else { hits.len() as f64 / runs.len() as f64 },
        offsets,
    }
}

/// Additive counts behind TPR and TNR.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateCounts {
    pub present: usize,
    pub true_positive: usize,
    pub absent: usize,
    pub true_negative: usize,
}

impl RateCounts {
    pub fn tpr(&self) -> Option<f64> {
        (self.present > 0).then(|| self.true_positive as f64 / self.present as f64)
    }

    pub fn tnr(&self) -> Option<f64> {
        (self.absent > 0).then(|| self.true_negative as f64 / self.absent as f64)
    }

    pub fn merge(self, o: RateCounts) -> RateCounts {
        RateCounts {
            present: self.present + o.present,
            true_positive: self.true_positive + o.true_positive,
            absent: self.absent + o.absent,
            true_negative: self.true_negative + o.true_negative,
        }
    }
}

/// TPR/TNR counts over the frames in `indices` (every frame when `None`).
/// Only the presence flag and the overlap matter, never the confidence.
pub fn rate_counts(pred: &PredictionTrace, gt: &GroundTruth, iou_min: f64, indices: Option<&[usize]>) -> Result<RateCounts> {
    check_aligned(pred, gt)?;
    let all: Vec<usize>;
    let idx = match indices {
        Some(i) => i,
        None => {
            all = (0..gt.len()).collect();
            &all
        }
    };
    let mut c = RateCounts::default();
    for &t in idx {
        let r = pred
            .records
            .get(t)
            .ok_or_else(|| Error::Data(format!("frame index {t} out of range")))?;
        match gt.boxes[t] {
            Some(g) => {
                c.present += 1;
                if r.present && iou(&r.bbox, &g) >= iou_min {
                    c.true_positive += 1;
                }
            }
            None => {
                c.absent += 1;
                if !r.present {
                    c.true_negative += 1;
                }
            }
        }
    }
    Ok(c)
}

/// `(TPR, TNR)`; a rate is `None` when its ground-truth class is empty.
pub fn tpr_tnr(pred: &PredictionTrace, gt: &GroundTruth, iou_min: f64) -> Result<(Option<f64>, Option<f64>)> {
    let c = rate_counts(pred, gt, iou_min, None)?;
    Ok((c.tpr(), c.tnr()))
}

/// Maximum over `p ∈ [0, 1]` of `sqrt((1−p)·TPR · ((1−p)·TNR + p))`,
/// evaluated at its closed-form maximizer.
pub fn maxgm(tpr: f64, tnr: f64) -> f64 {
    let t = if tnr >= 1.0 {
        1.0
    } else {
        (1.0 / (2.0 * (1.0 - tnr))).clamp(0.0, 1.0)
    };
    (tpr * t * (t * tnr + 1.0 - t)).max(0.0).sqrt()
}

/// `metric,value` CSV.
pub fn metrics_csv(rows: &[(&str, f64)]) -> String {
    let mut s = String::from("metric,value\n");
    for (k, v) in rows {
        s.push_str(&format!("{k},{}\n", fmt_sig(*v)));
    }
    s
}

/// `tau,pr,re,f` CSV of a full curve.
pub fn curve_csv(c: &PrCurve) -> String {
    let mut s = String::from("tau,pr,re,f\n");
    for i in 0..c.thresholds.len() {
        s.push_str(&format!(
            "{},{},{},{}\n",
            fmt_sig(c.thresholds[i]),
            fmt_sig(c.precision[i]),
            fmt_sig(c.recall[i]),
            fmt_sig(c.f[i])
        ));
    }
    s
}
