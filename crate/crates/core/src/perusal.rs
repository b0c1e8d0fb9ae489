//! Local perusal: propose candidate boxes inside a search region with a
//! correlation regressor, then verify each against the first-frame template
//! with the learned embedding.

use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingModel;
use crate::error::{Error, Result};
use crate::geometry::{iou, BBox, Region};
use crate::media::{
    crop_resize, extract_features, Correlator, FeatureConfig, FeatureVector, Frame, Grid, Patch, PreparedTemplate,
    SEARCH_SIDE, TEMPLATE_SIDE,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerusalConfig {
    /// Side of template and candidate patches.
    pub template_side: usize,
    /// Side the search region is resampled to before correlation.
    pub search_side: usize,
    /// Proposals verified per region.
    pub n_max: usize,
    /// Overlap above which a weaker proposal is suppressed.
    pub nms_iou: f64,
    pub scales: Vec<f64>,
    pub aspects: Vec<f64>,
    /// Peaks are located on the search image downsampled by this factor and
    /// then refined at full resolution.
    pub coarse_factor: usize,
    /// Half-width of the full-resolution refinement search.
    pub refine_radius: usize,
    pub features: FeatureConfig,
}

impl Default for PerusalConfig {
    fn default() -> Self {
        PerusalConfig {
            template_side: TEMPLATE_SIDE,
            search_side: SEARCH_SIDE,
            n_max: 16,
            nms_iou: 0.5,
            scales: vec![0.8, 1.0, 1.25],
            aspects: vec![0.8, 1.0, 1.25],
            coarse_factor: 4,
            refine_radius: 2,
            features: FeatureConfig::default(),
        }
    }
}

/// First-frame target appearance. Built once and never updated.
#[derive(Clone, Debug)]
pub struct Template {
    pub patch: Patch,
    pub feature: FeatureVector,
    pub embedding: Vec<f64>,
    /// Size of the initial box in frame pixels.
    pub size: (f64, f64),
}

impl Template {
    pub fn new(frame: &Frame, bbox: &BBox, model: &EmbeddingModel, cfg: &PerusalConfig) -> Result<Self> {
        bbox.validate()?;
        let patch = crop_resize(frame, bbox, cfg.template_side)?;
        let feature = extract_features(&patch, &cfg.features);
        let embedding = model.embed(&feature.values);
        Ok(Template {
            patch,
            feature,
            embedding,
            size: (bbox.w, bbox.h),
        })
    }
}

/// Box proposed by the regressor, with its correlation score.
#[derive(Clone, Debug, PartialEq)]
pub struct Proposal {
    pub bbox: BBox,
    pub similarity: f64,
    /// Scale and aspect multipliers of the hypothesis that produced it.
    pub scale: f64,
    pub aspect: f64,
}

/// Verified proposal.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub bbox: BBox,
    pub similarity: f64,
    pub confidence: f64,
}

/// Thresholded cosine similarity: `max(cos(z, x), 0)`; zero-norm inputs score 0.
pub fn cosine_confidence(template_embedding: &[f64], candidate_embedding: &[f64]) -> f64 {
    let dot: f64 = template_embedding
        .iter()
        .zip(candidate_embedding)
        .map(|(a, b)| a * b)
        .sum();
    let na = template_embedding.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = candidate_embedding.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 || !(na.is_finite() && nb.is_finite()) {
        return 0.0;
    }
    (dot / (na * nb)).clamp(0.0, 1.0)
}

/// Verifier confidence of a candidate patch.
pub fn confidence(model: &EmbeddingModel, template: &Template, candidate: &Patch, features: &FeatureConfig) -> f64 {
    let f = extract_features(candidate, features);
    cosine_confidence(&template.embedding, &model.embed(&f.values))
}

/// Source of candidate boxes for a search region.
pub trait Proposer {
    /// Proposes at most `n_max` boxes (frame coordinates) for a target of
    /// size `target` inside `region`, sorted by similarity descending.
    fn propose(
        &self,
        template: &Template,
        region: &Region,
        frame: &Frame,
        target: (f64, f64),
        n_max: usize,
    ) -> Result<Vec<Proposal>>;
}

/// Multi-scale normalized cross-correlation regressor.
#[derive(Clone, Debug, Default)]
pub struct NccProposer {
    pub config: PerusalConfig,
}

struct Peak {
    score: f64,
    hyp: usize,
    u: usize,
    v: usize,
}

struct Hypothesis {
    scale: f64,
    aspect: f64,
    full: Grid,
    coarse: Grid,
}

/// Local maxima of a response map (8-neighbourhood; plateaus keep their
/// first row-major cell).
fn local_maxima(map: &Grid, hyp: usize, out: &mut Vec<Peak>) {
    let (w, h) = (map.width, map.height);
    for v in 0..h {
        for u in 0..w {
            let c = map.get(u, v);
            let mut is_max = true;
            'n: for dv in -1i64..=1 {
                for du in -1i64..=1 {
                    if du == 0 && dv == 0 {
                        continue;
                    }
                    let (nu, nv) = (u as i64 + du, v as i64 + dv);
                    if nu < 0 || nv < 0 || nu >= w as i64 || nv >= h as i64 {
                        continue;
                    }
                    let n = map.get(nu as usize, nv as usize);
                    let earlier = dv < 0 || (dv == 0 && du < 0);
                    if n > c || (earlier && n == c) {
                        is_max = false;
                        break 'n;
                    }
                }
            }
            if is_max {
                out.push(Peak { score: c, hyp, u, v });
            }
        }
    }
}

impl NccProposer {
    pub fn new(config: PerusalConfig) -> Self {
        NccProposer { config }
    }

    fn hypotheses(&self, template: &Template, tw: f64, th: f64, c: usize) -> Vec<Hypothesis> {
        let src = template.patch.grid();
        let whole = BBox {
            x: 0.0,
            y: 0.0,
            w: src.width as f64,
            h: src.height as f64,
        };
        let mut out = Vec::new();
        for &scale in &self.config.scales {
            for &aspect in &self.config.aspects {
                let ra = aspect.sqrt();
                let w = (tw * scale * ra).round().max(4.0) as usize;
                let h = (th * scale / ra).round().max(4.0) as usize;
                let cw = (w / c).max(2);
                let ch = (h / c).max(2);
                let (Ok(full), Ok(coarse)) = (src.resample(&whole, w, h), src.resample(&whole, cw, ch)) else {
                    continue;
                };
                out.push(Hypothesis {
                    scale,
                    aspect,
                    full,
                    coarse,
                });
            }
        }
        out
    }
}

impl Proposer for NccProposer {
    fn propose(
        &self,
        template: &Template,
        region: &Region,
        frame: &Frame,
        target: (f64, f64),
        n_max: usize,
    ) -> Result<Vec<Proposal>> {
        if n_max == 0 {
            return Err(Error::Config("n_max must be at least 1".into()));
        }
        let side = self.config.search_side;
        let search = crop_resize(frame, &region.to_bbox(), side)?.into_grid();
        let zx = side as f64 / region.w as f64;
        let zy = side as f64 / region.h as f64;
        let to_frame = |x: f64, y: f64, w: f64, h: f64| BBox {
            x: region.x as f64 + x / zx,
            y: region.y as f64 + y / zy,
            w: w / zx,
            h: h / zy,
        };
        let c = self.config.coarse_factor.max(1);
        let coarse = search.downsample(c);
        let hyps: Vec<Hypothesis> = self
            .hypotheses(template, target.0 * zx, target.1 * zy, c)
            .into_iter()
            .filter(|h| h.full.width <= side && h.full.height <= side && h.coarse.width <= coarse.width && h.coarse.height <= coarse.height)
            .collect();

        let fine = Correlator::new(&search);
        if hyps.is_empty() {
            // nothing fits: score the whole region against the resized template
            let src = template.patch.grid();
            let whole = BBox {
                x: 0.0,
                y: 0.0,
                w: src.width as f64,
                h: src.height as f64,
            };
            let t = src.resample(&whole, side, side)?;
            return Ok(vec![Proposal {
                bbox: region.to_bbox(),
                similarity: fine.ncc_at(&t, 0, 0),
                scale: 1.0,
                aspect: 1.0,
            }]);
        }

        let coarse_templates: Vec<&Grid> = hyps.iter().map(|h| &h.coarse).collect();
        let maps = Correlator::new(&coarse).ncc_many(&coarse_templates);
        let mut peaks = Vec::new();
        for (i, map) in maps.iter().enumerate() {
            if let Some(map) = map {
                local_maxima(map, i, &mut peaks);
            }
        }
        let prepared: Vec<PreparedTemplate> = hyps.iter().map(|h| PreparedTemplate::new(&h.full)).collect();
        peaks.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then(a.hyp.cmp(&b.hyp))
                .then(a.v.cmp(&b.v))
                .then(a.u.cmp(&b.u))
        });

        // greedy suppression on coarse boxes, then full-resolution refinement
        let mut kept: Vec<(BBox, &Peak)> = Vec::new();
        for p in &peaks {
            if kept.len() >= n_max {
                break;
            }
            let h = &hyps[p.hyp];
            let b = BBox {
                x: (p.u * c) as f64,
                y: (p.v * c) as f64,
                w: h.full.width as f64,
                h: h.full.height as f64,
            };
            if kept.iter().all(|(k, _)| iou(k, &b) < self.config.nms_iou) {
                kept.push((b, p));
            }
        }

        let mut proposals: Vec<Proposal> = kept
            .into_iter()
            .map(|(_, p)| {
                let h = &hyps[p.hyp];
                let (tw, th) = (h.full.width, h.full.height);
                let (max_u, max_v) = (side - tw, side - th);
                let (cu, cv) = ((p.u * c).min(max_u), (p.v * c).min(max_v));
                let r = self.config.refine_radius;
                let mut best = (f64::NEG_INFINITY, cu, cv);
                for v in cv.saturating_sub(r)..=(cv + r).min(max_v) {
                    for u in cu.saturating_sub(r)..=(cu + r).min(max_u) {
                        let s = fine.ncc_at_prepared(&prepared[p.hyp], u, v);
                        if s > best.0 {
                            best = (s, u, v);
                        }
                    }
                }
                Proposal {
                    bbox: to_frame(best.1 as f64, best.2 as f64, tw as f64, th as f64),
                    similarity: best.0,
                    scale: h.scale,
                    aspect: h.aspect,
                }
            })
            .collect();
        proposals.sort_by(|a, b| b.similarity.total_cmp(&a.similarity));
        Ok(proposals)
    }
}

/// Verifies proposals and returns the index of the best candidate together
/// with every scored candidate.
///
/// The best candidate maximizes confidence; ties go to the higher
/// similarity, then to the lower index.
pub fn verify(
    model: &EmbeddingModel,
    template: &Template,
    frame: &Frame,
    proposals: &[Proposal],
    cfg: &PerusalConfig,
) -> Result<Vec<Candidate>> {
    proposals
        .iter()
        .map(|p| {
            let patch = crop_resize(frame, &p.bbox, cfg.template_side)?;
            Ok(Candidate {
                bbox: p.bbox,
                similarity: p.similarity,
                confidence: confidence(model, template, &patch, &cfg.features),
            })
        })
        .collect()
}

/// Index of the best candidate by `key`, ties broken by similarity then index.
pub fn select_best(candidates: &[Candidate]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in candidates.iter().enumerate() {
        best = match best {
            None => Some(i),
            Some(b) => {
                let cb = &candidates[b];
                if c.confidence > cb.confidence || (c.confidence == cb.confidence && c.similarity > cb.similarity) {
                    Some(i)
                } else {
                    Some(b)
                }
            }
        };
    }
    best
}

/// Result of perusing one region.
#[derive(Clone, Debug)]
pub struct Perusal {
    pub best: Candidate,
    pub candidates: Vec<Candidate>,
}

/// Proposes, verifies and selects inside one region.
pub fn peruse(
    proposer: &dyn Proposer,
    model: &EmbeddingModel,
    template: &Template,
    region: &Region,
    frame: &Frame,
    target: (f64, f64),
    cfg: &PerusalConfig,
) -> Result<Perusal> {
    let proposals = proposer.propose(template, region, frame, target, cfg.n_max)?;
    let candidates = verify(model, template, frame, &proposals, cfg)?;
    let best = select_best(&candidates)
        .map(|i| candidates[i].clone())
        .ok_or_else(|| Error::Data("proposer returned no candidates".into()))?;
    Ok(Perusal { best, candidates })
}
