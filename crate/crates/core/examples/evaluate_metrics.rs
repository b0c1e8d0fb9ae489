//! Score a trace with the VOT-LT and OxUvA protocols, and turn published
//! (TPR, TNR) pairs into MaxGM.
//!
//! cargo run --release --example evaluate_metrics

use splt::eval::{f_score, maxgm, pr_curve, tpr_tnr, DEFAULT_IOU_MIN, DEFAULT_THRESHOLDS};
use splt::pipeline::{train_models, TrainPlan};
use splt::synth::{generate_sequence, SynthConfig};
use splt::tracker::{run_sequence, Tracker, TrackerConfig};

fn main() -> splt::Result<()> {
    let models = train_models(&TrainPlan::default())?.models;
    let seq = generate_sequence(&SynthConfig {
        num_frames: 300,
        num_disappearances: 2,
        seed: 9,
        ..SynthConfig::default()
    })?;
    let tracker = Tracker::new(TrackerConfig::default(), &models)?;
    let run = run_sequence(&tracker, &seq.frames, seq.groundtruth.boxes[0].unwrap())?;

    let curve = pr_curve(&run.trace, &seq.groundtruth, DEFAULT_THRESHOLDS)?;
    let best = f_score(&curve);
    println!("F {:.3} at tau {:.2} (Pr {:.3}, Re {:.3})", best.f, best.tau, best.pr, best.re);
    let (tpr, tnr) = tpr_tnr(&run.trace, &seq.groundtruth, DEFAULT_IOU_MIN)?;
    if let (Some(a), Some(b)) = (tpr, tnr) {
        println!("TPR {a:.3}  TNR {b:.3}  MaxGM {:.3}", maxgm(a, b));
    }

    println!("\npublished pairs:");
    for (name, a, b) in [("SPLT", 0.498, 0.776), ("MBMD", 0.609, 0.485), ("DaSiam_LT", 0.689, 0.0)] {
        println!("  {name:<10} TPR {a:.3} TNR {b:.3} -> MaxGM {:.3}", maxgm(a, b));
    }
    Ok(())
}
