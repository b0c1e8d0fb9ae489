//! Generate a long-term synthetic sequence and a teleport sequence, write
//! them to disk and print what was planted.
//!
//! cargo run --release --example synth_sequence -- /tmp/splt-seq

use std::path::PathBuf;

use splt::synth::{generate_sequence, redetection_protocol, SynthConfig};

fn main() -> splt::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("splt-seq"));

    let cfg = SynthConfig {
        num_frames: 300,
        num_disappearances: 3,
        disappearance_len: 30,
        seed: 11,
        ..SynthConfig::default()
    };
    let seq = generate_sequence(&cfg)?;
    println!("{} frames of {}x{}", seq.frames.len(), cfg.frame_w, cfg.frame_h);
    for r in &seq.absences {
        println!("  target absent on frames {}..{}", r.start, r.end);
    }
    for d in &seq.distractors {
        println!("  distractor at ({:.0}, {:.0})", d.x, d.y);
    }
    let dir = out.join("longterm");
    seq.into_sequence().write(&dir)?;
    println!("wrote {}", dir.display());

    let tp = redetection_protocol(&SynthConfig {
        num_frames: 60,
        seed: 12,
        ..SynthConfig::default()
    })?;
    let d = tp.teleport_frame.expect("teleport sequences record the jump");
    let (a, b) = (tp.groundtruth.boxes[d - 1].unwrap(), tp.groundtruth.boxes[d].unwrap());
    println!("teleport at frame {d}: ({:.0}, {:.0}) -> ({:.0}, {:.0})", a.x, a.y, b.x, b.y);
    let dir = out.join("teleport");
    tp.into_sequence().write(&dir)?;
    println!("wrote {}", dir.display());
    Ok(())
}
