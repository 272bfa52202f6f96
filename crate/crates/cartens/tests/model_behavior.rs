//! Behavioral properties of the forward pass: symmetry, locality, body
//! order, head constraints, and checkpoint stability.

use cartens::embeddings::AttributeSchema;
use cartens::error::Error;
use cartens::geometry::Structure;
use cartens::model::{ChargeHead, Model};
use cartens::testutil::random_orthogonal;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
mod common;
use common::*;

#[test]
fn energy_invariant_under_rotation_translation_permutation() {
    let mut model = Model::new(small_config(), 7).unwrap();
    randomize(&mut model, 100);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..10 {
        let s = random_structure(&mut rng, 5);
        let e0 = model.forward(&s).unwrap().energy_value();

        let rot = random_orthogonal(&mut rng, true);
        let shift = [rng.gen::<f64>() * 9.0 - 4.0, rng.gen::<f64>() * 9.0, rng.gen::<f64>()];
        let mut s2 = s.clone();
        s2.positions = s
            .positions
            .iter()
            .map(|&p| {
                let q = apply_rot(&rot, p);
                [q[0] + shift[0], q[1] + shift[1], q[2] + shift[2]]
            })
            .collect();
        let e1 = model.forward(&s2).unwrap().energy_value();
        assert!((e0 - e1).abs() < 1e-9, "trial {trial}: {e0} vs {e1}");

        let mut order: Vec<usize> = (0..s.len()).collect();
        order.shuffle(&mut rng);
        let s3 = Structure::new(
            order.iter().map(|&i| s.positions[i]).collect(),
            order.iter().map(|&i| s.species[i]).collect(),
        );
        let e2 = model.forward(&s3).unwrap().energy_value();
        assert!((e0 - e2).abs() < 1e-9, "trial {trial} permutation: {e0} vs {e2}");
    }
}

#[test]
fn dimer_beyond_cutoff_equals_sum_of_isolated() {
    let mut model = Model::new(small_config(), 3).unwrap();
    randomize(&mut model, 11);
    let far = Structure::new(vec![[0.0; 3], [10.0, 0.0, 0.0]], vec![1, 8]);
    let a = Structure::new(vec![[0.0; 3]], vec![1]);
    let b = Structure::new(vec![[0.0; 3]], vec![8]);
    let e = model.forward(&far).unwrap().energy_value();
    let ea = model.forward(&a).unwrap().energy_value();
    let eb = model.forward(&b).unwrap().energy_value();
    assert!((e - ea - eb).abs() < 1e-12, "{e} vs {}", ea + eb);
}

#[test]
fn site_energy_is_two_body_additive_at_correlation_one() {
    let mut cfg = small_config();
    cfg.correlation = 1;
    let mut model = Model::new(cfg, 9).unwrap();
    randomize(&mut model, 21);
    // only the linear layer-0 readout contributes: silence the final MLP
    for w in model.params.get_mut("readout.final.w1") {
        *w = 0.0;
    }
    let pi = [0.0, 0.0, 0.0];
    let pj = [1.6, 0.4, -0.2];
    let pk = [-0.9, 1.8, 0.7];
    let both = Structure::new(vec![pi, pj, pk], vec![8, 1, 1]);
    let with_j = Structure::new(vec![pi, pj], vec![8, 1]);
    let with_k = Structure::new(vec![pi, pk], vec![8, 1]);
    let iso = Structure::new(vec![pi], vec![8]);
    let e_both = model.forward(&both).unwrap().site_energy_values()[0];
    let e_j = model.forward(&with_j).unwrap().site_energy_values()[0];
    let e_k = model.forward(&with_k).unwrap().site_energy_values()[0];
    let e_iso = model.forward(&iso).unwrap().site_energy_values()[0];
    let lhs = e_both - e_iso;
    let rhs = (e_j - e_iso) + (e_k - e_iso);
    assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
}

#[test]
fn dipole_rotates_and_vanishes_for_centrosymmetric_structures() {
    let mut model = Model::new(small_config(), 2).unwrap();
    randomize(&mut model, 33);
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let s = random_structure(&mut rng, 4);
    let f = model.forward(&s).unwrap();
    let mu = f.dipole_value().unwrap();
    let rot = random_orthogonal(&mut rng, false);
    let mut s2 = s.clone();
    s2.positions = s.positions.iter().map(|&p| apply_rot(&rot, p)).collect();
    let mu2 = model.forward(&s2).unwrap().dipole_value().unwrap();
    let want = apply_rot(&rot, mu);
    for a in 0..3 {
        assert!((mu2[a] - want[a]).abs() < 1e-10);
    }

    // atoms in +/- pairs about the origin: inversion maps the structure to
    // itself, so the dipole must vanish
    let v1 = [1.1, 0.3, -0.4];
    let v2 = [-0.2, 1.4, 0.8];
    let cs = Structure::new(
        vec![v1, [-v1[0], -v1[1], -v1[2]], v2, [-v2[0], -v2[1], -v2[2]]],
        vec![1, 1, 8, 8],
    );
    let mu0 = model.forward(&cs).unwrap().dipole_value().unwrap();
    for a in 0..3 {
        assert!(mu0[a].abs() < 1e-10, "{mu0:?}");
    }
}

#[test]
fn polarizability_symmetric_traceless_split_and_rotation() {
    let mut model = Model::new(small_config(), 6).unwrap();
    randomize(&mut model, 55);
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let s = random_structure(&mut rng, 4);
    let alpha = model.forward(&s).unwrap().alpha_value().unwrap();
    let tr = alpha[0][0] + alpha[1][1] + alpha[2][2];
    for a in 0..3 {
        for b in 0..3 {
            assert!((alpha[a][b] - alpha[b][a]).abs() < 1e-12, "not symmetric");
        }
    }
    // traceless part of the anisotropy
    let mut beta = alpha;
    for a in 0..3 {
        beta[a][a] -= tr / 3.0;
    }
    assert!((beta[0][0] + beta[1][1] + beta[2][2]).abs() < 1e-14);

    let rot = random_orthogonal(&mut rng, false);
    let mut s2 = s.clone();
    s2.positions = s.positions.iter().map(|&p| apply_rot(&rot, p)).collect();
    let alpha2 = model.forward(&s2).unwrap().alpha_value().unwrap();
    for a in 0..3 {
        for b in 0..3 {
            let mut want = 0.0;
            for x in 0..3 {
                for y in 0..3 {
                    want += rot[a][x] * alpha[x][y] * rot[b][y];
                }
            }
            assert!((alpha2[a][b] - want).abs() < 1e-10);
        }
    }
}

#[test]
fn qeq_head_conserves_total_charge() {
    let mut cfg = small_config();
    cfg.charge_head = ChargeHead::Qeq;
    let mut model = Model::new(cfg, 4).unwrap();
    randomize(&mut model, 77);
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let mut s = random_structure(&mut rng, 5);
    s.total_charge = Some(1.0);
    let f = model.forward(&s).unwrap();
    let q = f.charge_values();
    let sum: f64 = q.iter().sum();
    assert!((sum - 1.0).abs() < 1e-12, "{sum}");
    for &e in &f.eta {
        assert!(f.graph.scalar_value(e) > 0.0);
    }
}

#[test]
fn direct_head_redistributes_surplus() {
    let mut cfg = small_config();
    cfg.charge_head = ChargeHead::Direct;
    let mut model = Model::new(cfg, 4).unwrap();
    randomize(&mut model, 78);
    let mut rng = ChaCha8Rng::seed_from_u64(89);
    let mut s = random_structure(&mut rng, 4);
    s.total_charge = Some(-0.5);
    let q = model.forward(&s).unwrap().charge_values();
    let sum: f64 = q.iter().sum();
    assert!((sum + 0.5).abs() < 1e-12);
}

#[test]
fn empty_structure_gives_zero_energy() {
    let model = Model::new(small_config(), 1).unwrap();
    let s = Structure::new(vec![], vec![]);
    let f = model.forward(&s).unwrap();
    assert_eq!(f.energy_value(), 0.0);
    assert!(f.site_energies.is_empty());
}

#[test]
fn forward_is_deterministic() {
    let mut model = Model::new(small_config(), 8).unwrap();
    randomize(&mut model, 99);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let s = random_structure(&mut rng, 6);
    let e1 = model.forward(&s).unwrap().energy_value();
    let e2 = model.forward(&s).unwrap().energy_value();
    assert_eq!(e1.to_bits(), e2.to_bits());
}

#[test]
fn total_charge_attribute_separates_site_energies() {
    let mut cfg = small_config();
    cfg.schema = AttributeSchema { total_charge: true, ..Default::default() };
    let mut model = Model::new(cfg, 13).unwrap();
    randomize(&mut model, 14);
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut s = random_structure(&mut rng, 3);
    s.total_charge = Some(0.0);
    let e0 = model.forward(&s).unwrap().site_energy_values();
    s.total_charge = Some(1.0);
    let e1 = model.forward(&s).unwrap().site_energy_values();
    assert!(e0.iter().zip(&e1).any(|(a, b)| (a - b).abs() > 1e-9));

    s.total_charge = None;
    assert!(matches!(model.forward(&s), Err(Error::MissingAttribute(_))));
}

#[test]
fn field_and_geometry_rotate_together() {
    let mut cfg = small_config();
    cfg.schema = AttributeSchema { field: true, ..Default::default() };
    let mut model = Model::new(cfg, 16).unwrap();
    randomize(&mut model, 17);
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let mut s = random_structure(&mut rng, 4);
    s.external_field = Some([0.2, -0.4, 0.1]);
    let e0 = model.forward(&s).unwrap().energy_value();
    let rot = random_orthogonal(&mut rng, false);
    let mut s2 = s.clone();
    s2.positions = s.positions.iter().map(|&p| apply_rot(&rot, p)).collect();
    s2.external_field = Some(apply_rot(&rot, s.external_field.unwrap()));
    let e1 = model.forward(&s2).unwrap().energy_value();
    assert!((e0 - e1).abs() < 1e-9, "{e0} vs {e1}");
}

#[test]
fn unknown_species_rejected() {
    let model = Model::new(small_config(), 20).unwrap();
    let s = Structure::new(vec![[0.0; 3]], vec![26]);
    assert!(matches!(model.forward(&s), Err(Error::UnknownSpecies(26))));
}

#[test]
fn energy_continuous_at_cutoff() {
    let mut model = Model::new(small_config(), 23).unwrap();
    randomize(&mut model, 24);
    let cutoff = model.config.radial.cutoff;
    let e_at = |r: f64| {
        let s = Structure::new(vec![[0.0; 3], [r, 0.0, 0.0]], vec![1, 1]);
        model.forward(&s).unwrap().energy_value()
    };
    let inside = e_at(cutoff - 1e-4);
    let outside = e_at(cutoff + 1e-4);
    assert!((inside - outside).abs() < 1e-8, "jump {}", (inside - outside).abs());
}

#[test]
fn checkpoint_roundtrip_is_bit_exact() {
    let mut cfg = small_config();
    cfg.les = true;
    cfg.charge_head = ChargeHead::Qeq;
    let mut model = Model::new(cfg, 30).unwrap();
    randomize(&mut model, 31);
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let mut s = random_structure(&mut rng, 4);
    s.total_charge = Some(0.0);
    let e0 = model.forward(&s).unwrap().energy_value();
    let json = serde_json::to_string(&model.to_checkpoint()).unwrap();
    let restored = Model::from_checkpoint(serde_json::from_str(&json).unwrap()).unwrap();
    let e1 = restored.forward(&s).unwrap().energy_value();
    assert_eq!(e0.to_bits(), e1.to_bits());
}

#[test]
fn all_path_mode_forward_runs_and_is_invariant() {
    let mut cfg = small_config();
    cfg.path_mode = cartens::contraction::PathMode::All;
    cfg.coupled = false;
    let mut model = Model::new(cfg, 40).unwrap();
    randomize(&mut model, 41);
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let s = random_structure(&mut rng, 4);
    let e0 = model.forward(&s).unwrap().energy_value();
    let rot = random_orthogonal(&mut rng, true);
    let mut s2 = s.clone();
    s2.positions = s.positions.iter().map(|&p| apply_rot(&rot, p)).collect();
    let e1 = model.forward(&s2).unwrap().energy_value();
    assert!((e0 - e1).abs() < 1e-9, "{e0} vs {e1}");
}
