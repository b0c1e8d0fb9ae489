//! Component ablation on a small suite: regressor only, skimming +
//! regressor, regressor + verifier, and the full tracker.
//!
//! cargo run --release --example ablation

use std::time::Instant;

use splt::pipeline::{build_suite, evaluate_suite, track_suite, train_models, SuiteConfig, TrainPlan};
use splt::synth::SynthConfig;
use splt::tracker::{TrackerConfig, Variant};

fn main() -> splt::Result<()> {
    let models = train_models(&TrainPlan::default())?.models;
    let suite = build_suite(&SuiteConfig {
        num_sequences: 4,
        synth: SynthConfig {
            num_frames: 150,
            num_disappearances: 1,
            ..SynthConfig::default()
        },
        redetect: false,
        seed: 77,
    })?;
    println!("variant     F      global frames  perusals/global frame  seconds");
    for v in [Variant::R, Variant::SR, Variant::RV, Variant::SRV] {
        let start = Instant::now();
        let cfg = TrackerConfig {
            variant: v,
            ..TrackerConfig::default()
        };
        let m = evaluate_suite(&track_suite(&cfg, &models, &suite)?, &suite)?;
        let per = if m.global_frames == 0 {
            0.0
        } else {
            m.global_perusals as f64 / m.global_frames as f64
        };
        println!(
            "{:<8} {:.3}  {:>13}  {:>21.1}  {:>7.1}",
            v.name(),
            m.f.f,
            m.global_frames,
            per,
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
