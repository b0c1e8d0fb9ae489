use super::*;
use crate::media::{crop_resize, FeatureConfig};
use crate::perusal::Proposal;
use crate::synth::{generate_sequence, SynthConfig, SynthSequence};

fn identity_models() -> Models {
    let d = FeatureConfig::default().dim();
    let mut w = vec![0.0; d * d];
    (0..d).for_each(|i| w[i * d + i] = 1.0);
    Models {
        embedding: EmbeddingModel::from_weights(d, d, w).unwrap(),
        skim: SkimModel::default(),
    }
}

/// Proposer that always returns one box, 5 px right of the region centre, with a fixed similarity.
struct Fixed(f64);

impl Proposer for Fixed {
    fn propose(&self, _: &Template, region: &Region, _: &Frame, target: (f64, f64), _: usize) -> Result<Vec<Proposal>> {
        let (cx, cy) = region.to_bbox().center();
        Ok(vec![Proposal {
            bbox: BBox::from_center(cx + 5.0, cy, target.0, target.1),
            similarity: self.0,
            scale: 1.0,
            aspect: 1.0,
        }])
    }
}

fn seq(frames: usize, disappearances: usize, seed: u64) -> SynthSequence {
    generate_sequence(&SynthConfig {
        num_frames: frames,
        num_disappearances: disappearances,
        disappearance_len: 40,
        seed,
        ..SynthConfig::default()
    })
    .unwrap()
}

fn first_box(s: &SynthSequence) -> BBox {
    s.groundtruth.boxes[0].unwrap()
}

#[test]
fn init_contract() {
    let models = identity_models();
    let s = seq(2, 0, 1);
    let tr = Tracker::new(TrackerConfig::default(), &models).unwrap();
    let a = tr.init(&s.frames[0], first_box(&s)).unwrap();
    let b = tr.init(&s.frames[0], first_box(&s)).unwrap();
    assert_eq!((a.mode, a.frame_index, a.last_box), (Mode::Local, 1, first_box(&s)));
    assert_eq!(a.template.patch, crop_resize(&s.frames[0], &first_box(&s), 127).unwrap());
    assert_eq!(a.template.embedding, b.template.embedding);
    assert_eq!(a.template.patch, b.template.patch);
    assert!(tr.init(&s.frames[0], BBox { x: 0.0, y: 0.0, w: 0.0, h: 5.0 }).is_err());
    assert!(tr.init(&s.frames[0], BBox { x: 400.0, y: 0.0, w: 20.0, h: 20.0 }).is_err());
}

#[test]
fn config_validation() {
    let models = identity_models();
    for bad in [
        TrackerConfig { theta: 1.5, ..TrackerConfig::default() },
        TrackerConfig { k: 0, ..TrackerConfig::default() },
        TrackerConfig { search_scale: 0.5, ..TrackerConfig::default() },
    ] {
        assert!(Tracker::new(bad, &models).is_err());
    }
    assert_eq!("SRV".parse::<Variant>().unwrap(), Variant::SRV);
    assert!("x".parse::<Variant>().is_err());
}

fn stub_step(similarity: f64) -> (TrackerState, StepOutput) {
    let models = identity_models();
    let s = seq(2, 0, 2);
    let cfg = TrackerConfig {
        variant: Variant::R,
        ..TrackerConfig::default()
    };
    let tr = Tracker::with_proposer(cfg, &models, Box::new(Fixed(similarity))).unwrap();
    let st = tr.init(&s.frames[0], first_box(&s)).unwrap();
    tr.step(&st, &s.frames[1]).unwrap()
}

#[test]
fn confident_step_stays_local() {
    let (next, out) = stub_step(0.8);
    assert_eq!(out.confidence, 0.8);
    assert!(out.present);
    assert_eq!((out.mode, next.mode, out.regions_perused), (Mode::Local, Mode::Local, 1));
    assert_eq!(next.last_box, out.bbox);
    assert_eq!(next.frame_index, 2);
}

#[test]
fn unconfident_step_switches_to_global() {
    let (next, out) = stub_step(0.5);
    assert!(!out.present);
    assert_eq!(next.mode, Mode::Global);
    assert_ne!(next.last_box, out.bbox);
    let (_, neg) = stub_step(-0.4);
    assert_eq!(neg.confidence, 0.0);
}

fn run(cfg: TrackerConfig, s: &SynthSequence) -> TrackRun {
    let models = identity_models();
    let tr = Tracker::new(cfg, &models).unwrap();
    run_sequence(&tr, &s.frames, first_box(s)).unwrap()
}

fn check_machine(r: &TrackRun, cfg: &TrackerConfig) {
    for t in 1..r.trace.len() {
        let rec = &r.trace.records[t];
        assert_eq!(rec.present, rec.confidence >= cfg.theta);
        assert_eq!(rec.present, r.next_modes[t] == Mode::Local);
        assert!((0.0..=1.0).contains(&rec.confidence));
        match r.modes[t] {
            Mode::Local => assert_eq!(r.regions_perused[t], 1),
            Mode::Global => assert!((1..=cfg.k).contains(&r.regions_perused[t])),
        }
        if t + 1 < r.trace.len() {
            assert_eq!(r.modes[t + 1], r.next_modes[t]);
        }
    }
}

#[test]
fn theta_extremes() {
    let s = seq(60, 1, 3);
    let zero = TrackerConfig { theta: 0.0, ..TrackerConfig::default() };
    let r = run(zero.clone(), &s);
    assert_eq!(r.global_frames(), 0);
    check_machine(&r, &zero);
    let one = TrackerConfig { theta: 1.0, ..TrackerConfig::default() };
    let r = run(one.clone(), &s);
    assert!(r.trace.records[1..].iter().all(|x| x.confidence < 1.0));
    // frame 1 runs locally, every later frame globally
    assert_eq!(r.global_frames(), 58);
    check_machine(&r, &one);
}

#[test]
fn absence_is_spent_in_global_search() {
    let s = seq(120, 1, 4);
    let cfg = TrackerConfig::default();
    let r = run(cfg.clone(), &s);
    check_machine(&r, &cfg);
    let gap = s.absences[0].clone();
    let drop = gap.clone().find(|&t| !r.trace.records[t].present).expect("absence detected");
    assert!(drop <= gap.start + 2, "noticed at {drop}, gap starts {}", gap.start);
    for t in drop + 1..gap.end {
        assert_eq!(r.modes[t], Mode::Global, "frame {t}");
        assert!(!r.trace.records[t].present);
    }
    assert!(r.trace.records[gap.end..].iter().filter(|x| x.present).count() > 0);
}

#[test]
fn runs_are_deterministic_and_template_is_fixed() {
    let s = seq(70, 1, 5);
    let a = run(TrackerConfig::default(), &s);
    let b = run(TrackerConfig::default(), &s);
    assert_eq!(a.trace.to_text(), b.trace.to_text());

    let models = identity_models();
    let tr = Tracker::new(TrackerConfig::default(), &models).unwrap();
    let mut st = tr.init(&s.frames[0], first_box(&s)).unwrap();
    let e0 = st.template.embedding.clone();
    for f in &s.frames[1..] {
        st = tr.step(&st, f).unwrap().0;
    }
    assert_eq!(st.template.embedding, e0);
    assert_eq!(st.frame_index, 70);
}

#[test]
fn single_frame_and_size_mismatch() {
    let s = seq(3, 0, 6);
    let r = run(TrackerConfig::default(), &SynthSequence { frames: s.frames[..1].to_vec(), ..s.clone() });
    assert_eq!(r.trace.len(), 1);
    assert_eq!(r.trace.records[0].confidence, 1.0);
    let models = identity_models();
    let tr = Tracker::new(TrackerConfig::default(), &models).unwrap();
    let mut frames = s.frames.clone();
    frames[2] = Frame::filled(100, 100, 0).unwrap();
    assert!(run_sequence(&tr, &frames, first_box(&s)).is_err());
    assert!(run_sequence(&tr, &[], first_box(&s)).is_err());
}

#[test]
fn local_only_never_searches_globally() {
    let s = seq(120, 1, 4);
    let cfg = TrackerConfig { global_search: false, ..TrackerConfig::default() };
    let r = run(cfg, &s);
    assert_eq!(r.global_frames(), 0);
    assert!(r.next_modes.iter().all(|m| *m == Mode::Local));
}
