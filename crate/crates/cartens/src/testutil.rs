//! Shared helpers for randomized tests. Compiled into the library so
//! integration tests can reuse them; not part of the stable API.

use crate::geometry::{LabeledFrame, Labels, Structure};
use crate::tensor::CartesianTensor;
use rand::Rng;

/// Random orthogonal 3x3 matrix (Gram-Schmidt on a random basis). With
/// `allow_improper`, half the draws include an inversion.
pub fn random_orthogonal<R: Rng>(rng: &mut R, allow_improper: bool) -> [[f64; 3]; 3] {
    loop {
        let mut v: Vec<[f64; 3]> = (0..3)
            .map(|_| [rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5])
            .collect();
        // Gram-Schmidt
        let mut ok = true;
        for i in 0..3 {
            for j in 0..i {
                let d = dot(&v[i], &v[j]);
                for a in 0..3 {
                    v[i][a] -= d * v[j][a];
                }
            }
            let n = dot(&v[i], &v[i]).sqrt();
            if n < 1e-3 {
                ok = false;
                break;
            }
            for a in 0..3 {
                v[i][a] /= n;
            }
        }
        if !ok {
            continue;
        }
        let sign = if allow_improper && rng.gen_bool(0.5) { -1.0 } else { 1.0 };
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = sign * v[i][j];
            }
        }
        return m;
    }
}

pub fn random_tensor<R: Rng>(rng: &mut R, rank: usize, channels: usize) -> CartesianTensor {
    let mut t = CartesianTensor::zeros(rank, channels);
    for x in t.data.iter_mut() {
        *x = rng.gen::<f64>() * 2.0 - 1.0;
    }
    t
}

pub fn random_unit_vector<R: Rng>(rng: &mut R) -> [f64; 3] {
    loop {
        let v = [rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0];
        let n = dot(&v, &v).sqrt();
        if n > 1e-2 && n < 1.0 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Lennard-Jones energy and analytic forces for a finite cluster.
pub fn lj_energy_forces(
    positions: &[[f64; 3]],
    eps: f64,
    sigma: f64,
) -> (f64, Vec<[f64; 3]>) {
    let n = positions.len();
    let mut energy = 0.0;
    let mut forces = vec![[0.0; 3]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let u = [
                positions[i][0] - positions[j][0],
                positions[i][1] - positions[j][1],
                positions[i][2] - positions[j][2],
            ];
            let r = dot(&u, &u).sqrt();
            let s6 = (sigma / r).powi(6);
            energy += 4.0 * eps * (s6 * s6 - s6);
            let de_dr = 4.0 * eps * (-12.0 * s6 * s6 + 6.0 * s6) / r;
            for a in 0..3 {
                let f = -de_dr * u[a] / r;
                forces[i][a] += f;
                forces[j][a] -= f;
            }
        }
    }
    (energy, forces)
}

/// Random small LJ clusters with analytic energy/force labels. All atoms are
/// species 1; pair distances are kept in the repulsive-to-tail window so the
/// labels stay well scaled.
pub fn lj_frames<R: Rng>(
    rng: &mut R,
    n_frames: usize,
    atoms: usize,
    eps: f64,
    sigma: f64,
    fidelity: Option<i64>,
) -> Vec<LabeledFrame> {
    let mut frames = Vec::with_capacity(n_frames);
    while frames.len() < n_frames {
        let box_side = sigma * 2.2;
        let positions: Vec<[f64; 3]> = (0..atoms)
            .map(|_| {
                [
                    rng.gen::<f64>() * box_side,
                    rng.gen::<f64>() * box_side,
                    rng.gen::<f64>() * box_side,
                ]
            })
            .collect();
        let mut min_r = f64::INFINITY;
        for i in 0..atoms {
            for j in (i + 1)..atoms {
                let u = [
                    positions[i][0] - positions[j][0],
                    positions[i][1] - positions[j][1],
                    positions[i][2] - positions[j][2],
                ];
                min_r = min_r.min(dot(&u, &u).sqrt());
            }
        }
        if min_r < sigma * 1.02 {
            continue;
        }
        let (energy, forces) = lj_energy_forces(&positions, eps, sigma);
        let mut structure = Structure::new(positions, vec![1; atoms]);
        structure.fidelity = fidelity;
        frames.push(LabeledFrame {
            structure,
            labels: Labels {
                energy: Some(energy),
                forces: Some(forces),
                ..Default::default()
            },
            extra_keys: vec![],
        });
    }
    frames
}
