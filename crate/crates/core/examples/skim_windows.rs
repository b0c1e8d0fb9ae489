//! Enumerate sliding windows over a frame and keep the K most target-like
//! ones with the skim scorer.
//!
//! cargo run --release --example skim_windows

use splt::embed::EmbeddingModel;
use splt::geometry::search_side_for;
use splt::perusal::{PerusalConfig, Template};
use splt::skimming::{skim_select, sliding_windows, SkimModel};
use splt::synth::{generate_sequence, SynthConfig};

fn main() -> splt::Result<()> {
    let seq = generate_sequence(&SynthConfig {
        num_frames: 30,
        num_disappearances: 0,
        seed: 5,
        ..SynthConfig::default()
    })?;
    let first = seq.groundtruth.boxes[0].unwrap();
    let cfg = PerusalConfig::default();
    let model = EmbeddingModel::random(64, cfg.features.dim(), 0);
    let template = Template::new(&seq.frames[0], &first, &model, &cfg)?;

    let frame = &seq.frames[29];
    let truth = seq.groundtruth.boxes[29].unwrap();
    let side = search_side_for(&first, 4.0);
    let windows = sliding_windows(frame.width(), frame.height(), side);
    println!("{} windows of side {side} at stride {}", windows.len(), windows.stride);
    let skim = SkimModel::default();
    for w in skim_select(&skim, &template, frame, &windows, 3)? {
        let (cx, cy) = truth.center();
        let hit = if w.region.contains_point(cx, cy) { "  <- target" } else { "" };
        println!("window {:>2} at ({:>3}, {:>3})  p = {:.3}{hit}", w.index, w.region.x, w.region.y, w.p);
    }
    Ok(())
}
