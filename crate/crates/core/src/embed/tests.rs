use super::mining::{mine_hard_examples, LabeledSequence, MiningConfig};
use super::*;
use crate::media::FeatureConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fv(v: &[f64]) -> FeatureVector {
    FeatureVector { values: v.to_vec() }
}

fn trip(a: &[f64], p: &[f64], n: &[f64]) -> TripletExample {
    TripletExample {
        anchor: fv(a),
        positive: fv(p),
        negative: fv(n),
    }
}

fn eye(d: usize) -> EmbeddingModel {
    let mut w = vec![0.0; d * d];
    (0..d).for_each(|i| w[i * d + i] = 1.0);
    EmbeddingModel::from_weights(d, d, w).unwrap()
}

#[test]
fn loss_examples() {
    let m = eye(2);
    assert!((triplet_loss(&m, &trip(&[1.0, 1.0], &[1.0, 1.0], &[1.0, 1.0]), 0.2) - 0.2).abs() < 1e-12);
    assert!((triplet_loss(&m, &trip(&[0.0, 0.0], &[2.0, 2.0], &[0.0, 0.0]), 0.2) - 8.2).abs() < 1e-12);
    assert_eq!(triplet_loss(&m, &trip(&[0.0, 0.0], &[0.0, 0.0], &[3.0, 0.0]), 0.2), 0.0);
}

#[test]
fn symbolic_gradient_in_two_dimensions() {
    // W = [[1, 2], [0, 1]], dp = (1, 0), dn = (0, 1)
    let m = EmbeddingModel::from_weights(2, 2, vec![1.0, 2.0, 0.0, 1.0]).unwrap();
    let t = trip(&[1.0, 1.0], &[0.0, 1.0], &[1.0, 0.0]);
    // W dp = (1, 0), W dn = (2, 1); loss = 1 - 5 + 10 > 0
    assert!((triplet_loss(&m, &t, 10.0) - 6.0).abs() < 1e-12);
    let g = triplet_gradient(&m, &t, 10.0);
    // 2 (W dp) dpᵀ - 2 (W dn) dnᵀ = [[2, -4], [0, -2]]
    let want = [2.0, -4.0, 0.0, -2.0];
    for (a, b) in g.iter().zip(want) {
        assert!((a - b).abs() < 1e-10);
    }
    assert!(triplet_gradient(&m, &t, 1.0).iter().all(|&v| v == 0.0));
}

#[test]
fn finite_differences_agree_on_active_triplets() {
    let mut r = ChaCha8Rng::seed_from_u64(4);
    let m = EmbeddingModel::random(8, 12, 9);
    let mut checked = 0;
    while checked < 30 {
        let t = TripletExample {
            anchor: random_feature(12, &mut r),
            positive: random_feature(12, &mut r),
            negative: random_feature(12, &mut r),
        };
        if let GradCheck::Checked { max_rel_error } = gradient_check(&m, &t, 2.0) {
            assert!(max_rel_error < 1e-4, "{max_rel_error}");
            checked += 1;
        }
    }
}

#[test]
fn inactive_hinge_has_zero_gradient() {
    let m = eye(3);
    let t = trip(&[0.0; 3], &[0.1, 0.0, 0.0], &[5.0, 5.0, 5.0]);
    assert_eq!(gradient_check(&m, &t, 0.2), GradCheck::HingeInactive);
    assert!(triplet_gradient(&m, &t, 0.2).iter().all(|&v| v == 0.0));
}

fn random_triplets(n: usize, dim: usize, seed: u64) -> Vec<TripletExample> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| TripletExample {
            anchor: random_feature(dim, &mut r),
            positive: random_feature(dim, &mut r),
            negative: random_feature(dim, &mut r),
        })
        .collect()
}

#[test]
fn zero_learning_rate_keeps_weights() {
    let cfg = TrainConfig {
        lr: 0.0,
        epochs: 3,
        triplets_per_epoch: 50,
        batch: 8,
        embedding_dim: 4,
        ..TrainConfig::default()
    };
    let init = EmbeddingModel::random(4, 6, 1);
    let rep = fine_tune(init.clone(), &cfg, &mut FixedTriplets::new(random_triplets(20, 6, 2))).unwrap();
    assert_eq!(rep.model.weights(), init.weights());
}

#[test]
fn learning_rate_steps_down() {
    let cfg = TrainConfig {
        epochs: 61,
        ..TrainConfig::default()
    };
    let lr: Vec<f64> = [0, 19, 20, 39, 40, 60].iter().map(|&e| cfg.lr_at_epoch(e)).collect();
    let want = [1e-2, 1e-2, 1e-3, 1e-3, 1e-4, 1e-5];
    for (a, b) in lr.iter().zip(want) {
        assert!((a - b).abs() < 1e-15 * b.max(1.0) + b * 1e-12);
    }
}

#[test]
fn full_batch_without_momentum_is_gradient_descent() {
    let data = random_triplets(16, 5, 3);
    let cfg = TrainConfig {
        lr: 0.05,
        momentum: 0.0,
        epochs: 5,
        batch: 16,
        triplets_per_epoch: 16,
        embedding_dim: 3,
        lr_decay_every: 0,
        margin: 1.0,
        ..TrainConfig::default()
    };
    let init = EmbeddingModel::random(3, 5, 7);
    let rep = fine_tune(init.clone(), &cfg, &mut FixedTriplets::new(data.clone())).unwrap();

    let mut w = init.weights().to_vec();
    for _ in 0..5 {
        let m = EmbeddingModel::from_weights(3, 5, w.clone()).unwrap();
        let mut g = vec![0.0; w.len()];
        for t in &data {
            for (gi, d) in g.iter_mut().zip(triplet_gradient(&m, t, 1.0)) {
                *gi += d / 16.0;
            }
        }
        w.iter_mut().zip(&g).for_each(|(wi, gi)| *wi -= 0.05 * gi);
    }
    for (a, b) in rep.model.weights().iter().zip(&w) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn separable_triplets_are_learned() {
    // class identity lives in the first two coordinates, the rest is noise
    let mut r = ChaCha8Rng::seed_from_u64(8);
    let dim = 10;
    let centers = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
    let point = |c: usize, r: &mut ChaCha8Rng| {
        let mut v = random_feature(dim, r).values;
        v.iter_mut().for_each(|x| *x *= 0.5);
        v[0] = 0.6 * centers[c][0] + 0.05 * v[0];
        v[1] = 0.6 * centers[c][1] + 0.05 * v[1];
        fv(&v)
    };
    let data: Vec<TripletExample> = (0..400)
        .map(|i| {
            let c = i % 4;
            let o = (c + 1 + i / 4 % 3) % 4;
            TripletExample {
                anchor: point(c, &mut r),
                positive: point(c, &mut r),
                negative: point(o, &mut r),
            }
        })
        .collect();
    let cfg = TrainConfig {
        epochs: 40,
        embedding_dim: 4,
        triplets_per_epoch: 400,
        batch: 32,
        lr: 0.05,
        ..TrainConfig::default()
    };
    let before = margin_satisfied_fraction(&EmbeddingModel::random(4, dim, 0), &data, 0.2);
    let rep = train_embedding(&cfg, dim, &mut FixedTriplets::new(data.clone())).unwrap();
    let after = margin_satisfied_fraction(&rep.model, &data, 0.2);
    assert!(after >= 0.95, "before {before} after {after}");
    assert!(rep.epoch_losses.last() < rep.epoch_losses.first());
}

#[test]
fn bad_inputs_are_rejected() {
    let cfg = TrainConfig {
        epochs: 1,
        triplets_per_epoch: 4,
        embedding_dim: 2,
        ..TrainConfig::default()
    };
    assert!(train_embedding(&cfg, 3, &mut FixedTriplets::new(Vec::new())).is_err());
    assert!(train_embedding(&cfg, 3, &mut FixedTriplets::new(random_triplets(2, 4, 0))).is_err());
    let bad = TrainConfig { margin: 0.0, ..cfg.clone() };
    assert!(bad.validate().is_err());
    let huge = TrainConfig { lr: 1e12, momentum: 0.0, epochs: 20, ..cfg };
    let t = trip(&[0.0, 0.0, 0.0], &[50.0, 50.0, 50.0], &[0.0, 0.0, 0.0]);
    assert!(matches!(
        train_embedding(&huge, 3, &mut FixedTriplets::new(vec![t])),
        Err(Error::Diverged(_))
    ));
}

#[test]
fn model_bytes_round_trip() {
    let m = EmbeddingModel::random(5, 7, 3);
    assert_eq!(EmbeddingModel::from_bytes(&m.to_bytes()).unwrap(), m);
    let mut b = m.to_bytes();
    b[0] ^= 0xff;
    assert!(EmbeddingModel::from_bytes(&b).is_err());
}

mod props {
    use super::*;
    use proptest::prelude::*;

    fn vec3() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-3.0f64..3.0, 3)
    }

    proptest! {
        #[test]
        fn loss_is_nonnegative_and_swap_flips_margin(
            w in proptest::collection::vec(-2.0f64..2.0, 6),
            a in vec3(), p in vec3(), n in vec3(), alpha in 0.01f64..2.0,
        ) {
            let m = EmbeddingModel::from_weights(2, 3, w).unwrap();
            let t = trip(&a, &p, &n);
            prop_assert!(triplet_loss(&m, &t, alpha) >= 0.0);
            let s = trip(&a, &n, &p);
            let lhs = triplet_margin(&m, &t, alpha) - alpha;
            let rhs = triplet_margin(&m, &s, alpha) - alpha;
            prop_assert!((lhs + rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
        }
    }
}

fn feature_eye() -> EmbeddingModel {
    eye(FeatureConfig::default().dim())
}

fn patch_texture(side: usize, cell: f64, seed: u64) -> Vec<f64> {
    crate::synth::value_noise(side, side, cell, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Frames showing the target at a drifting position and, optionally, a
/// look-alike `gap` pixels to its right. Only the target is annotated.
fn planted(twin_weight: Option<f64>, frames: usize) -> LabeledSequence {
    let (w, h, s) = (240usize, 180usize, 28usize);
    let coarse = patch_texture(s, 7.0, 21);
    let fine = patch_texture(s, 2.5, 22);
    let other = patch_texture(s, 2.5, 23);
    let target: Vec<f64> = coarse.iter().zip(&fine).map(|(c, f)| c + 0.7 * f).collect();
    let bg = patch_texture(w.max(h), 18.0, 24);
    let mut r = ChaCha8Rng::seed_from_u64(25);
    let mut out = Vec::new();
    let mut boxes = Vec::new();
    for t in 0..frames {
        let (tx, ty) = (60 + t % 5, 70 + (t / 2) % 4);
        let mut level: Vec<f64> = (0..w * h).map(|i| 120.0 + 20.0 * bg[(i / w) * w.max(h) + i % w]).collect();
        let mut paste = |tex: &[f64], px: usize, py: usize| {
            for y in 0..s {
                for x in 0..s {
                    level[(py + y) * w + px + x] = 125.0 + 45.0 * tex[y * s + x];
                }
            }
        };
        paste(&target, tx, ty);
        if let (Some(a), true) = (twin_weight, t > 0) {
            let twin: Vec<f64> = coarse.iter().zip(&fine).zip(&other).map(|((c, f), o)| c + 0.7 * (a * f + (1.0 - a) * o)).collect();
            paste(&twin, tx + 40, ty + 6);
        }
        let px = level
            .iter()
            .map(|v| (v + rand_distr::Distribution::sample(&rand_distr::Normal::new(0.0, 1.0).unwrap(), &mut r)).round().clamp(0.0, 255.0) as u8)
            .collect();
        out.push(crate::media::Frame::new(w, h, px).unwrap());
        boxes.push(Some(crate::geometry::BBox::new(tx as f64, ty as f64, s as f64, s as f64).unwrap()));
    }
    LabeledSequence {
        frames: out,
        groundtruth: crate::sequence::GroundTruth { boxes },
    }
}

#[test]
fn easy_sequence_yields_no_hard_examples() {
    let h = mine_hard_examples(&feature_eye(), &[planted(None, 12)], &MiningConfig::default()).unwrap();
    assert_eq!(h.misclassified(), 0);
    assert!(h.triplets.is_empty());
}

#[test]
fn look_alike_is_mined_and_fine_tuning_removes_it() {
    let seq = planted(Some(0.5), 12);
    let cfg = MiningConfig::default();
    let h = mine_hard_examples(&feature_eye(), std::slice::from_ref(&seq), &cfg).unwrap();
    assert!(h.false_accepts.len() >= 10, "{}", h.false_accepts.len());
    assert_eq!(h.triplets.len(), h.misclassified());
    for t in &h.triplets {
        assert_eq!(t.anchor.dim(), feature_eye().dim_in());
    }
    let tcfg = TrainConfig {
        margin: 1.0,
        epochs: 30,
        lr_decay_every: 0,
        triplets_per_epoch: 200,
        batch: 16,
        embedding_dim: feature_eye().dim_out(),
        ..TrainConfig::default()
    };
    let rep = fine_tune(feature_eye(), &tcfg, &mut FixedTriplets::new(h.triplets.clone())).unwrap();
    let after = mine_hard_examples(&rep.model, &[seq], &cfg).unwrap();
    assert!(after.misclassified() < h.misclassified(), "{} -> {}", h.misclassified(), after.misclassified());
}

#[test]
fn mining_rejects_unannotated_start() {
    let mut seq = planted(None, 3);
    seq.groundtruth.boxes[0] = None;
    assert!(mine_hard_examples(&feature_eye(), &[seq], &MiningConfig::default()).is_err());
}
