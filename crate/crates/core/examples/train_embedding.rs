//! Train the verification embedding with triplet loss, then run one cascade
//! round of hard-example mining and fine-tuning.
//!
//! cargo run --release --example train_embedding

use splt::embed::{margin_satisfied_fraction, sample_triplets, TrainConfig};
use splt::pipeline::{build_training_data, train_models, CascadeConfig, TrainPlan, TrainingDataConfig};
use splt::synth::SynthConfig;

fn main() -> splt::Result<()> {
    env_logger::init();
    let plan = TrainPlan {
        data: TrainingDataConfig {
            num_targets: 32,
            ..TrainingDataConfig::default()
        },
        embed: TrainConfig {
            epochs: 20,
            triplets_per_epoch: 1000,
            ..TrainConfig::default()
        },
        cascade: Some(CascadeConfig {
            synth: SynthConfig {
                num_frames: 120,
                num_disappearances: 1,
                disappearance_len: 30,
                distractor_similarity: 0.85,
                ..SynthConfig::default()
            },
            ..CascadeConfig::default()
        }),
        ..TrainPlan::default()
    };
    let out = train_models(&plan)?;
    for (e, (l, lr)) in out.report.epoch_losses.iter().zip(&out.report.epoch_lrs).enumerate().step_by(5) {
        println!("epoch {e:>2}  lr {lr:.0e}  loss {l:.5}");
    }
    if let Some((hard, tuned)) = &out.cascade {
        println!(
            "cascade: {} false accepts, {} false rejects, {} fine-tuning epochs",
            hard.false_accepts.len(),
            hard.false_rejects.len(),
            tuned.epoch_losses.len()
        );
    }

    // held-out triplets from fresh targets
    let held = build_training_data(
        &TrainingDataConfig {
            num_targets: 8,
            seed: 4242,
            ..TrainingDataConfig::default()
        },
        &plan.perusal.features,
    )?;
    let triplets = sample_triplets(&held.dataset, 500, 1)?;
    println!(
        "held-out margin satisfied: {:.1}%",
        100.0 * margin_satisfied_fraction(&out.models.embedding, &triplets, plan.embed.margin)
    );
    Ok(())
}
