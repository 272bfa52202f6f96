#![allow(dead_code)]

use cartens::geometry::Structure;
use cartens::model::{Model, ModelConfig};
use cartens::radial::RadialBasisConfig;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn small_config() -> ModelConfig {
    ModelConfig {
        species: vec![1, 8],
        channels: 4,
        layers: 2,
        l_max: 2,
        edge_l_max: 2,
        correlation: 2,
        radial: RadialBasisConfig { n_max: 4, cutoff: 4.0, ..Default::default() },
        radial_mlp: vec![8],
        readout_hidden: 8,
        ..Default::default()
    }
}

pub fn randomize(model: &mut Model, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Normal::new(0.0, 0.3).unwrap();
    for x in model.params.data.iter_mut() {
        *x = dist.sample(&mut rng);
    }
}

pub fn random_structure(rng: &mut ChaCha8Rng, n: usize) -> Structure {
    let positions: Vec<[f64; 3]> = (0..n)
        .map(|_| [rng.gen::<f64>() * 5.0, rng.gen::<f64>() * 5.0, rng.gen::<f64>() * 5.0])
        .collect();
    let species: Vec<u32> = (0..n).map(|_| if rng.gen_bool(0.5) { 1 } else { 8 }).collect();
    Structure::new(positions, species)
}

pub fn random_periodic_structure(rng: &mut ChaCha8Rng, n: usize) -> Structure {
    let a = 5.0 + rng.gen::<f64>();
    let cell = [
        [a, 0.0, 0.0],
        [rng.gen::<f64>() * 0.5, a, 0.0],
        [rng.gen::<f64>() * 0.5, rng.gen::<f64>() * 0.5, a],
    ];
    let positions: Vec<[f64; 3]> =
        (0..n).map(|_| [rng.gen::<f64>() * a, rng.gen::<f64>() * a, rng.gen::<f64>() * a]).collect();
    let species: Vec<u32> = (0..n).map(|_| if rng.gen_bool(0.5) { 1 } else { 8 }).collect();
    Structure::new(positions, species).with_cell(cell, [true; 3])
}

pub fn apply_rot(r: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        r[0][0] * v[0] + r[0][1] * v[1] + r[0][2] * v[2],
        r[1][0] * v[0] + r[1][1] * v[1] + r[1][2] * v[2],
        r[2][0] * v[0] + r[2][1] * v[1] + r[2][2] * v[2],
    ]
}
