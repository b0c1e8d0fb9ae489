//! Peruse one search region: multi-scale correlation proposals, then
//! embedding verification of each candidate.
//!
//! cargo run --release --example perusal_region

use splt::geometry::{iou, search_region_for};
use splt::perusal::{peruse, NccProposer, PerusalConfig, Template};
use splt::pipeline::{train_models, TrainPlan};
use splt::synth::{generate_sequence, SynthConfig};

fn main() -> splt::Result<()> {
    let models = train_models(&TrainPlan::default())?.models;
    let seq = generate_sequence(&SynthConfig {
        num_frames: 20,
        num_disappearances: 0,
        distractor_similarity: 0.8,
        seed: 17,
        ..SynthConfig::default()
    })?;
    let cfg = PerusalConfig::default();
    let first = seq.groundtruth.boxes[0].unwrap();
    let template = Template::new(&seq.frames[0], &first, &models.embedding, &cfg)?;
    let truth = seq.groundtruth.boxes[19].unwrap();
    let frame = &seq.frames[19];
    let region = search_region_for(&first, frame.width(), frame.height(), 4.0);
    let proposer = NccProposer::new(cfg.clone());
    let p = peruse(&proposer, &models.embedding, &template, &region, frame, (first.w, first.h), &cfg)?;
    println!("{} candidates in region {:?}", p.candidates.len(), region);
    for c in p.candidates.iter().take(6) {
        println!(
            "  ncc {:.3}  confidence {:.3}  IoU with target {:.2}",
            c.similarity,
            c.confidence,
            iou(&c.bbox, &truth)
        );
    }
    println!("best: confidence {:.3}, IoU {:.2}", p.best.confidence, iou(&p.best.bbox, &truth));
    Ok(())
}
