//! Loss semantics, reference-energy fitting, optimizer behavior, and
//! end-to-end gradient correctness of the training path.

use cartens::error::Error;
use cartens::geometry::{LabeledFrame, Labels, Structure};
use cartens::gradients::energy_derivatives;
use cartens::model::{ChargeHead, Model};
use cartens::testutil::lj_frames;
use cartens::training::{
    batch_loss_gradient, compute_loss, evaluate, fit_isolated_energies, split_frames, train, Adam,
    LossWeights, Plateau, TrainConfig,
};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
mod common;
use common::*;

fn frames_from_model(model: &Model, n_frames: usize, seed: u64) -> Vec<LabeledFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_frames)
        .map(|_| {
            let s = random_structure(&mut rng, 3);
            let d = energy_derivatives(model, &s).unwrap();
            LabeledFrame {
                structure: s,
                labels: Labels {
                    energy: Some(d.energy),
                    forces: Some(d.forces.clone()),
                    ..Default::default()
                },
                extra_keys: vec![],
            }
        })
        .collect()
}

#[test]
fn loss_is_zero_when_predictions_match_labels() {
    let mut model = Model::new(small_config(), 1).unwrap();
    randomize(&mut model, 2);
    let frames = frames_from_model(&model, 3, 3);
    let preds: Vec<_> =
        frames.iter().map(|f| energy_derivatives(&model, &f.structure).unwrap()).collect();
    let loss = compute_loss(&LossWeights::default(), &preds, &frames);
    assert!(loss.total.abs() < 1e-24, "{}", loss.total);
}

#[test]
fn doubling_force_weight_doubles_force_term() {
    let mut model = Model::new(small_config(), 4).unwrap();
    randomize(&mut model, 5);
    let mut frames = frames_from_model(&model, 2, 6);
    // perturb labels so residuals are nonzero
    for f in &mut frames {
        for fi in f.labels.forces.as_mut().unwrap() {
            fi[0] += 0.1;
        }
        *f.labels.energy.as_mut().unwrap() += 0.05;
    }
    let preds: Vec<_> =
        frames.iter().map(|f| energy_derivatives(&model, &f.structure).unwrap()).collect();
    let w1 = LossWeights::default();
    let w2 = LossWeights { forces: 2.0 * w1.forces, ..w1.clone() };
    let l1 = compute_loss(&w1, &preds, &frames);
    let l2 = compute_loss(&w2, &preds, &frames);
    assert_eq!(l2.terms[1], 2.0 * l1.terms[1]);
    assert_eq!(l2.terms[0], l1.terms[0]);
}

#[test]
fn masked_charge_term_averages_over_labeled_frame_only() {
    let mut cfg = small_config();
    cfg.charge_head = ChargeHead::Qeq;
    let mut model = Model::new(cfg, 7).unwrap();
    randomize(&mut model, 8);
    let mut frames = frames_from_model(&model, 2, 9);
    for f in &mut frames {
        f.structure.total_charge = Some(0.0);
    }
    // label charges on frame 0 only, offset by 0.1 per atom
    let p0 = energy_derivatives(&model, &frames[0].structure).unwrap();
    frames[0].labels.charges = Some(p0.charges.iter().map(|q| q + 0.1).collect());
    let preds: Vec<_> =
        frames.iter().map(|f| energy_derivatives(&model, &f.structure).unwrap()).collect();
    let w = LossWeights { charges: 1.0, energy: 0.0, forces: 0.0, ..Default::default() };
    let loss = compute_loss(&w, &preds, &frames);
    // one labeled frame, per-atom mean of 0.1^2
    assert!((loss.terms[3] - 0.01).abs() < 1e-12, "{}", loss.terms[3]);
}

#[test]
fn isolated_energy_fit_matches_hand_solutions() {
    let frame = |species: Vec<u32>, e: f64| LabeledFrame {
        structure: Structure::new(vec![[0.0; 3]; species.len()], species),
        labels: Labels { energy: Some(e), ..Default::default() },
        extra_keys: vec![],
    };
    // single-species dimers with E = 2a
    let a = -1.7;
    let frames: Vec<_> = (0..4).map(|_| frame(vec![1, 1], 2.0 * a)).collect();
    let fit = fit_isolated_energies(&frames, &[1]).unwrap();
    assert!((fit[0] - a).abs() < 1e-6);

    // two species, exactly determined: x + y = 3, x + 2y = 5 -> x = 1, y = 2
    let frames = vec![frame(vec![1, 8], 3.0), frame(vec![1, 8, 8], 5.0)];
    let fit = fit_isolated_energies(&frames, &[1, 8]).unwrap();
    assert!((fit[0] - 1.0).abs() < 1e-6 && (fit[1] - 2.0).abs() < 1e-6, "{fit:?}");

    // species 8 never appears: coefficient 0
    let frames = vec![frame(vec![1, 1], -2.0)];
    let fit = fit_isolated_energies(&frames, &[1, 8]).unwrap();
    assert!(fit[1].abs() < 1e-6);
}

#[test]
fn batch_gradient_matches_finite_differences() {
    let mut model = Model::new(small_config(), 10).unwrap();
    randomize(&mut model, 11);
    let mut frames = frames_from_model(&model, 2, 12);
    for f in &mut frames {
        *f.labels.energy.as_mut().unwrap() += 0.3;
        for fi in f.labels.forces.as_mut().unwrap() {
            fi[1] -= 0.2;
        }
    }
    let w = LossWeights::default();
    let (_, grad) = batch_loss_gradient(&model, &frames, &w).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let h = 1e-5;
    for _ in 0..8 {
        let k = rng.gen_range(0..model.params.data.len());
        let orig = model.params.data[k];
        model.params.data[k] = orig + h;
        let (lp, _) = batch_loss_gradient(&model, &frames, &w).unwrap();
        model.params.data[k] = orig - h;
        let (lm, _) = batch_loss_gradient(&model, &frames, &w).unwrap();
        model.params.data[k] = orig;
        let fd = (lp - lm) / (2.0 * h);
        let tol = 1e-6_f64.max(1e-4 * fd.abs());
        assert!((grad[k] - fd).abs() < tol, "param {k}: {} vs {}", grad[k], fd);
    }
}

#[test]
fn weight_validation_and_coverage() {
    let bad = LossWeights { energy: -1.0, ..Default::default() };
    assert!(matches!(bad.validate(), Err(Error::Config(_))));
    let zero = LossWeights {
        energy: 0.0,
        forces: 0.0,
        ..Default::default()
    };
    assert!(matches!(zero.validate(), Err(Error::Config(_))));

    let frames = vec![LabeledFrame {
        structure: Structure::new(vec![[0.0; 3]], vec![1]),
        labels: Labels { energy: Some(1.0), ..Default::default() },
        extra_keys: vec![],
    }];
    let w = LossWeights { dipole: 1.0, ..Default::default() };
    assert!(matches!(w.check_coverage(&frames), Err(Error::Config(_))));
    assert!(LossWeights::default().check_coverage(&frames).is_err()); // no forces labeled
}

#[test]
fn adam_ignores_zero_gradients_and_plateau_halves() {
    let mut adam = Adam::new(3, 1e-2);
    let mut params = vec![1.0, -2.0, 0.5];
    let before = params.clone();
    adam.step(&mut params, &[0.0; 3]);
    assert_eq!(params, before);

    let mut plateau = Plateau::new(2, 0.5, 1e-5);
    let mut lr = 1e-2;
    plateau.step(1.0, &mut lr);
    for _ in 0..3 {
        plateau.step(2.0, &mut lr);
    }
    assert_eq!(lr, 5e-3);
    for _ in 0..40 {
        plateau.step(2.0, &mut lr);
    }
    assert!(lr >= 1e-5);
}

#[test]
fn split_is_seeded_and_disjoint() {
    let (t1, v1) = split_frames(20, 0.25, 7);
    let (t2, v2) = split_frames(20, 0.25, 7);
    assert_eq!(t1, t2);
    assert_eq!(v1, v2);
    assert_eq!(v1.len(), 5);
    let mut all: Vec<usize> = t1.iter().chain(&v1).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..20).collect::<Vec<_>>());
}

#[test]
fn training_aborts_on_non_finite_loss() {
    let mut cfg = small_config();
    cfg.species = vec![1];
    let mut model = Model::new(cfg, 14).unwrap();
    randomize(&mut model, 15);
    model.params.data[0] = f64::NAN;
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let frames = lj_frames(&mut rng, 4, 2, 0.2, 1.5, None);
    let tc = TrainConfig { epochs: 1, valid_fraction: 0.0, ..Default::default() };
    match train(&mut model, &frames, &tc, None) {
        Err(Error::Numerical(msg)) => assert!(msg.contains("non-finite")),
        other => panic!("expected numerical abort, got {other:?}"),
    }
}

#[test]
fn short_training_run_reduces_loss_and_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let frames = lj_frames(&mut rng, 8, 2, 0.2, 1.5, None);
    let mut cfg = small_config();
    cfg.species = vec![1];
    cfg.channels = 8;
    cfg.layers = 1;
    cfg.l_max = 0;
    cfg.edge_l_max = 0;
    cfg.correlation = 1;
    let tc = TrainConfig { epochs: 30, valid_fraction: 0.0, ..Default::default() };

    let run = || {
        let mut model = Model::new(cfg.clone(), 18).unwrap();
        let report = train(&mut model, &frames, &tc, None).unwrap();
        (model, report)
    };
    let (m1, r1) = run();
    let (m2, r2) = run();
    assert_eq!(m1.params.data, m2.params.data);
    let curve1: Vec<f64> = r1.history.iter().map(|e| e.train_loss).collect();
    let curve2: Vec<f64> = r2.history.iter().map(|e| e.train_loss).collect();
    assert_eq!(curve1, curve2);
    assert!(
        r1.history.last().unwrap().train_loss < 0.2 * r1.history[0].train_loss,
        "no progress: {} -> {}",
        r1.history[0].train_loss,
        r1.history.last().unwrap().train_loss
    );
}

#[test]
fn evaluate_reports_per_term_metrics() {
    let mut model = Model::new(small_config(), 19).unwrap();
    randomize(&mut model, 20);
    let mut frames = frames_from_model(&model, 3, 21);
    for f in &mut frames {
        *f.labels.energy.as_mut().unwrap() += 0.3 * f.structure.len() as f64;
    }
    let m = evaluate(&model, &frames).unwrap();
    let e = m.get("energy").unwrap();
    assert!((e.rmse - 0.3).abs() < 1e-10);
    assert!((e.mae - 0.3).abs() < 1e-10);
    assert!(m.get("forces").unwrap().rmse < 1e-12);
    assert!(m.get("dipole").is_none() || m.get("dipole").unwrap().count == 0);
}
