//! Teleport the target across the frame and compare how quickly the full
//! tracker and a local-only tracker find it again.
//!
//! cargo run --release --example redetection

use splt::pipeline::{build_suite, evaluate_suite, track_suite, train_models, SuiteConfig, TrainPlan};
use splt::synth::SynthConfig;
use splt::tracker::TrackerConfig;

fn main() -> splt::Result<()> {
    let models = train_models(&TrainPlan::default())?.models;
    let suite = build_suite(&SuiteConfig {
        num_sequences: 5,
        synth: SynthConfig {
            num_frames: 40,
            ..SynthConfig::default()
        },
        redetect: true,
        seed: 21,
    })?;
    for (name, cfg) in [
        ("skimming + perusal", TrackerConfig::default()),
        (
            "local only",
            TrackerConfig {
                global_search: false,
                ..TrackerConfig::default()
            },
        ),
    ] {
        let runs = track_suite(&cfg, &models, &suite)?;
        let m = evaluate_suite(&runs, &suite)?;
        let rd = m.redetect.expect("teleport suite");
        let frames = rd.frames_avg.map_or("-".into(), |f| format!("{f:.1}"));
        println!("{name:<20} Frames {frames:>4}  Success {:>3.0}%", 100.0 * rd.success);
    }
    Ok(())
}
