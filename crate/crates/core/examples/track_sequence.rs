//! Track one synthetic sequence with the full tracker and print the frames
//! where the present/absent decision changes.
//!
//! cargo run --release --example track_sequence

use splt::pipeline::{train_models, TrainPlan};
use splt::synth::{generate_sequence, SynthConfig};
use splt::tracker::{Mode, Tracker, TrackerConfig};

fn main() -> splt::Result<()> {
    let models = train_models(&TrainPlan::default())?.models;
    let seq = generate_sequence(&SynthConfig {
        num_frames: 240,
        num_disappearances: 2,
        disappearance_len: 40,
        seed: 3,
        ..SynthConfig::default()
    })?;
    let tracker = Tracker::new(TrackerConfig::default(), &models)?;
    let mut state = tracker.init(&seq.frames[0], seq.groundtruth.boxes[0].unwrap())?;
    let mut was_present = true;
    for (t, frame) in seq.frames.iter().enumerate().skip(1) {
        let (next, out) = tracker.step(&state, frame)?;
        if out.present != was_present {
            let truth = if seq.groundtruth.boxes[t].is_some() { "visible" } else { "absent" };
            println!(
                "frame {t:>3}: {} (confidence {:.2}, target {truth}), next search {:?}",
                if out.present { "found" } else { "lost" },
                out.confidence,
                next.mode
            );
        }
        if out.mode == Mode::Global && t % 20 == 0 {
            println!("frame {t:>3}: global search over {} windows", out.regions_perused);
        }
        was_present = out.present;
        state = next;
    }
    for r in &seq.absences {
        println!("planted absence: {}..{}", r.start, r.end);
    }
    Ok(())
}
