//! Loss assembly, optimizer, LR scheduling, dataset splitting, reference
//! energy fitting, and the training loop.

use crate::contraction::{ContractionPath, TripleTable};
use crate::error::{Error, Result};
use crate::geometry::LabeledFrame;
use crate::gradients::{energy_derivatives, EnergyDerivatives};
use crate::model::{ChargeHead, Model};
use crate::tensor::CartesianTensor;
use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;

pub const TERM_NAMES: [&str; 8] = [
    "energy",
    "forces",
    "virial",
    "charges",
    "dipole",
    "polarizability",
    "magnetic_forces",
    "enthalpy",
];

/// Per-term MSE weights; energy and enthalpy residuals are per atom.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub energy: f64,
    pub forces: f64,
    pub virial: f64,
    pub charges: f64,
    pub dipole: f64,
    pub polarizability: f64,
    pub magnetic_forces: f64,
    pub enthalpy: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            energy: 1.0,
            forces: 10.0,
            virial: 0.0,
            charges: 0.0,
            dipole: 0.0,
            polarizability: 0.0,
            magnetic_forces: 0.0,
            enthalpy: 0.0,
        }
    }
}

impl LossWeights {
    pub fn as_array(&self) -> [f64; 8] {
        [
            self.energy,
            self.forces,
            self.virial,
            self.charges,
            self.dipole,
            self.polarizability,
            self.magnetic_forces,
            self.enthalpy,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.as_array();
        if w.iter().any(|&x| x < 0.0) {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        if w.iter().all(|&x| x == 0.0) {
            return Err(Error::Config("at least one loss weight must be positive".into()));
        }
        Ok(())
    }

    /// Every positively weighted term must be labeled somewhere in the dataset.
    pub fn check_coverage(&self, frames: &[LabeledFrame]) -> Result<()> {
        let w = self.as_array();
        for (t, &wt) in w.iter().enumerate() {
            if wt > 0.0 && !frames.iter().any(|f| has_label(f, t)) {
                return Err(Error::Config(format!(
                    "loss term '{}' has positive weight but no labeled frames",
                    TERM_NAMES[t]
                )));
            }
        }
        Ok(())
    }
}

fn has_label(f: &LabeledFrame, term: usize) -> bool {
    let l = &f.labels;
    match term {
        0 => l.energy.is_some(),
        1 => l.forces.is_some(),
        2 => l.virial.is_some(),
        3 => l.charges.is_some(),
        4 => l.dipole.is_some(),
        5 => l.polarizability.is_some(),
        6 => l.magnetic_forces.is_some(),
        7 => l.enthalpy.is_some(),
        _ => unreachable!(),
    }
}

/// Shift a periodic dipole residual by the lattice vector (unit charge
/// quantum) that minimizes its norm.
fn dipole_branch_shift(delta: [f64; 3], cell: &[[f64; 3]; 3]) -> [f64; 3] {
    let mut best = [0.0; 3];
    let mut best_n = delta[0] * delta[0] + delta[1] * delta[1] + delta[2] * delta[2];
    for na in -1..=1i32 {
        for nb in -1..=1i32 {
            for nc in -1..=1i32 {
                let mut l = [0.0; 3];
                for a in 0..3 {
                    l[a] = na as f64 * cell[0][a] + nb as f64 * cell[1][a] + nc as f64 * cell[2][a];
                }
                let mut n = 0.0;
                for a in 0..3 {
                    let d = delta[a] - l[a];
                    n += d * d;
                }
                if n < best_n {
                    best_n = n;
                    best = l;
                }
            }
        }
    }
    best
}

/// Flat residual components for one frame and term; energy-like residuals are
/// divided by the atom count so the MSE is per atom.
fn frame_residuals(pred: &EnergyDerivatives, frame: &LabeledFrame, term: usize) -> Option<Vec<f64>> {
    let n = frame.structure.len();
    let l = &frame.labels;
    match term {
        0 => l.energy.map(|e| vec![(pred.energy - e) / n as f64]),
        1 => l.forces.as_ref().map(|f| {
            f.iter().zip(&pred.forces).flat_map(|(a, b)| (0..3).map(|x| b[x] - a[x])).collect()
        }),
        2 => l.virial.and_then(|v| {
            pred.virial.map(|w| {
                (0..9).map(|k| w[k / 3][k % 3] - v[k / 3][k % 3]).collect()
            })
        }),
        3 => l.charges.as_ref().map(|q| {
            q.iter().zip(&pred.charges).map(|(a, b)| b - a).collect()
        }),
        4 => l.dipole.and_then(|mu| {
            pred.dipole.map(|p| {
                let mut d = [p[0] - mu[0], p[1] - mu[1], p[2] - mu[2]];
                if frame.structure.pbc.iter().all(|&x| x) {
                    let shift = dipole_branch_shift(d, &frame.structure.cell.unwrap());
                    for a in 0..3 {
                        d[a] -= shift[a];
                    }
                }
                d.to_vec()
            })
        }),
        5 => l.polarizability.and_then(|al| {
            pred.alpha.map(|p| (0..9).map(|k| p[k / 3][k % 3] - al[k / 3][k % 3]).collect())
        }),
        6 => l.magnetic_forces.as_ref().and_then(|mf| {
            pred.magnetic_forces.as_ref().map(|p| {
                mf.iter().zip(p).flat_map(|(a, b)| (0..3).map(|x| b[x] - a[x])).collect()
            })
        }),
        7 => l.enthalpy.map(|h| vec![(pred.energy - h) / n as f64]),
        _ => unreachable!(),
    }
}

#[derive(Clone, Debug, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub terms: [f64; 8],
}

/// Masked weighted MSE over precomputed predictions; frames without a label
/// are excluded from that term's mean.
pub fn compute_loss(
    weights: &LossWeights,
    preds: &[EnergyDerivatives],
    frames: &[LabeledFrame],
) -> LossBreakdown {
    assert_eq!(preds.len(), frames.len());
    let w = weights.as_array();
    let mut out = LossBreakdown::default();
    for t in 0..8 {
        if w[t] == 0.0 {
            continue;
        }
        let mut sum = 0.0;
        let mut count = 0usize;
        for (p, f) in preds.iter().zip(frames) {
            if let Some(r) = frame_residuals(p, f, t) {
                sum += r.iter().map(|x| x * x).sum::<f64>() / r.len() as f64;
                count += 1;
            }
        }
        if count > 0 {
            out.terms[t] = w[t] * sum / count as f64;
            out.total += out.terms[t];
        }
    }
    out
}

#[derive(Clone, Copy, Debug, Default)]
pub struct TermMetric {
    pub rmse: f64,
    pub mae: f64,
    pub count: usize,
}

#[derive(Clone, Debug, Default)]
pub struct Metrics {
    pub terms: [Option<TermMetric>; 8],
}

impl Metrics {
    pub fn get(&self, name: &str) -> Option<TermMetric> {
        TERM_NAMES.iter().position(|&n| n == name).and_then(|i| self.terms[i])
    }
}

/// Component-wise RMSE and MAE for every labeled term in the dataset.
pub fn evaluate(model: &Model, frames: &[LabeledFrame]) -> Result<Metrics> {
    let preds: Vec<EnergyDerivatives> =
        frames.iter().map(|f| energy_derivatives(model, &f.structure)).collect::<Result<_>>()?;
    Ok(metrics_from(&preds, frames))
}

pub fn metrics_from(preds: &[EnergyDerivatives], frames: &[LabeledFrame]) -> Metrics {
    let mut out = Metrics::default();
    for t in 0..8 {
        let mut sq = 0.0;
        let mut ab = 0.0;
        let mut n = 0usize;
        for (p, f) in preds.iter().zip(frames) {
            if let Some(r) = frame_residuals(p, f, t) {
                for x in r {
                    sq += x * x;
                    ab += x.abs();
                    n += 1;
                }
            }
        }
        if n > 0 {
            out.terms[t] =
                Some(TermMetric { rmse: (sq / n as f64).sqrt(), mae: ab / n as f64, count: n });
        }
    }
    out
}

/// Per-species reference energies by ridge-regularized least squares on
/// frame energies.
pub fn fit_isolated_energies(frames: &[LabeledFrame], species: &[u32]) -> Result<Vec<f64>> {
    let labeled: Vec<&LabeledFrame> = frames.iter().filter(|f| f.labels.energy.is_some()).collect();
    if labeled.is_empty() {
        return Err(Error::InsufficientData("no energy-labeled frames".into()));
    }
    let ns = species.len();
    let mut a = DMatrix::zeros(labeled.len(), ns);
    let mut e = DVector::zeros(labeled.len());
    for (row, f) in labeled.iter().enumerate() {
        for &z in &f.structure.species {
            if let Some(col) = species.iter().position(|&s| s == z) {
                a[(row, col)] += 1.0;
            }
        }
        e[row] = f.labels.energy.unwrap();
    }
    for (col, &z) in species.iter().enumerate() {
        if a.column(col).iter().all(|&x| x == 0.0) {
            eprintln!("warning: species {z} never appears; reference energy set to 0");
        }
    }
    let ata = a.transpose() * &a + DMatrix::identity(ns, ns) * 1e-8;
    let atb = a.transpose() * e;
    let x = ata
        .cholesky()
        .ok_or_else(|| Error::Numerical("reference energy normal equations".into()))?
        .solve(&atb);
    Ok(x.iter().copied().collect())
}

/// Weighted batch loss and its parameter gradient, built as graph nodes so
/// force-type terms differentiate through the reverse pass.
pub fn batch_loss_gradient(
    model: &Model,
    frames: &[LabeledFrame],
    weights: &LossWeights,
) -> Result<(f64, Vec<f64>)> {
    let w = weights.as_array();
    if w[2] > 0.0 && model.config.les {
        return Err(Error::Capability("virial training with LES is not supported".into()));
    }
    if w[3] > 0.0 && matches!(model.config.charge_head, ChargeHead::None) {
        return Err(Error::Capability("charge loss requires a charge head".into()));
    }
    let mut counts = [0usize; 8];
    for f in frames {
        for (t, c) in counts.iter_mut().enumerate() {
            if w[t] > 0.0 && has_label(f, t) && !f.structure.is_empty() {
                *c += 1;
            }
        }
    }
    let outer = TripleTable::from_path(&ContractionPath::canonical(1, 1, 2)?);

    let mut total = 0.0;
    let mut grad_acc = vec![0.0; model.params.data.len()];
    for frame in frames {
        let s = &frame.structure;
        let n = s.len();
        if n == 0 {
            continue;
        }
        let active = |t: usize| w[t] > 0.0 && has_label(frame, t);
        let mut fwd = model.forward(s)?;
        let need_grad = active(1) || active(2) || active(6);
        let mut wrt = Vec::new();
        if need_grad {
            wrt.extend(fwd.positions.iter().copied());
            wrt.extend(fwd.edge_vectors.iter().copied());
            wrt.extend(fwd.magmom_nodes.iter().copied());
        }
        let adj = fwd.graph.grad(fwd.energy, &wrt);
        let g = &mut fwd.graph;
        let neg_vec = |g: &mut crate::graph::Graph, v: [f64; 3]| {
            g.constant(CartesianTensor::vector([-v[0], -v[1], -v[2]]))
        };
        let mut terms = Vec::new();

        for (t, label) in [(0, frame.labels.energy), (7, frame.labels.enthalpy)] {
            if active(t) {
                let target = g.scalar(-label.unwrap());
                let r = g.add(&[fwd.energy, target]);
                let r = g.scale(r, 1.0 / n as f64);
                let sq = g.mul(r, r);
                terms.push(g.scale(sq, w[t] / counts[t] as f64));
            }
        }
        if active(1) {
            let labels = frame.labels.forces.as_ref().unwrap();
            let mut sq_terms = Vec::with_capacity(n);
            for i in 0..n {
                let target = neg_vec(g, labels[i]);
                let r = match adj[i] {
                    Some(a) => {
                        let f = g.scale(a, -1.0);
                        g.add(&[f, target])
                    }
                    None => target,
                };
                sq_terms.push(g.channel_dot(r, r));
            }
            let sum = g.add(&sq_terms);
            terms.push(g.scale(sum, w[1] / (3.0 * n as f64 * counts[1] as f64)));
        }
        if active(2) {
            let label = frame.labels.virial.unwrap();
            let mut prods = Vec::new();
            for (e, &d) in fwd.edge_vectors.iter().enumerate() {
                if let Some(a) = adj[n + e] {
                    prods.push(g.bilinear(a, d, outer.clone()));
                }
            }
            let target = g.constant(CartesianTensor::matrix(&label));
            let r = if prods.is_empty() {
                g.scale(target, -1.0)
            } else {
                let sum = g.add(&prods);
                // virial convention: -dE/deps
                let v = g.scale(sum, -1.0);
                g.sub(v, target)
            };
            let sq = g.channel_dot(r, r);
            terms.push(g.scale(sq, w[2] / (9.0 * counts[2] as f64)));
        }
        if active(3) {
            let labels = frame.labels.charges.as_ref().unwrap();
            let mut sq_terms = Vec::with_capacity(n);
            for i in 0..n {
                let target = g.scalar(-labels[i]);
                let r = g.add(&[fwd.charges[i], target]);
                sq_terms.push(g.mul(r, r));
            }
            let sum = g.add(&sq_terms);
            terms.push(g.scale(sum, w[3] / (n as f64 * counts[3] as f64)));
        }
        if active(4) {
            let label = frame.labels.dipole.unwrap();
            let mu = fwd.dipole.ok_or_else(|| {
                Error::Capability("dipole loss requires a rank-1 readout".into())
            })?;
            let pv = g.value(mu).data.clone();
            let mut target = label;
            if s.pbc.iter().all(|&x| x) {
                let delta = [pv[0] - label[0], pv[1] - label[1], pv[2] - label[2]];
                let shift = dipole_branch_shift(delta, &s.cell.unwrap());
                for a in 0..3 {
                    target[a] += shift[a];
                }
            }
            let tnode = neg_vec(g, target);
            let r = g.add(&[mu, tnode]);
            let sq = g.channel_dot(r, r);
            terms.push(g.scale(sq, w[4] / (3.0 * counts[4] as f64)));
        }
        if active(5) {
            let label = frame.labels.polarizability.unwrap();
            let al = fwd.alpha.ok_or_else(|| {
                Error::Capability("polarizability loss requires a rank-2 readout".into())
            })?;
            let target = g.constant(CartesianTensor::matrix(&label));
            let r = g.sub(al, target);
            let sq = g.channel_dot(r, r);
            terms.push(g.scale(sq, w[5] / (9.0 * counts[5] as f64)));
        }
        if active(6) {
            let labels = frame.labels.magnetic_forces.as_ref().unwrap();
            if fwd.magmom_nodes.is_empty() {
                return Err(Error::Capability(
                    "magnetic force loss requires the magnetic embedding".into(),
                ));
            }
            let base = n + fwd.edge_vectors.len();
            let mut sq_terms = Vec::with_capacity(n);
            for i in 0..n {
                let target = neg_vec(g, labels[i]);
                let r = match adj[base + i] {
                    Some(a) => {
                        let f = g.scale(a, -1.0);
                        g.add(&[f, target])
                    }
                    None => target,
                };
                sq_terms.push(g.channel_dot(r, r));
            }
            let sum = g.add(&sq_terms);
            terms.push(g.scale(sum, w[6] / (3.0 * n as f64 * counts[6] as f64)));
        }

        if terms.is_empty() {
            continue;
        }
        let loss = g.add(&terms);
        total += g.scalar_value(loss);
        let pg = g.param_gradient(loss, &model.params)?;
        for (acc, x) in grad_acc.iter_mut().zip(&pg) {
            *acc += x;
        }
    }
    Ok((total, grad_acc))
}

/// Adam with the AMSGrad variant.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
    vhat: Vec<f64>,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
            vhat: vec![0.0; n],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), grad.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            self.vhat[i] = self.vhat[i].max(self.v[i]);
            let denom = (self.vhat[i] / bc2).sqrt() + self.eps;
            params[i] -= self.lr * (self.m[i] / bc1) / denom;
        }
    }
}

/// Halve the LR after `patience` epochs without improvement, down to `floor`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Plateau {
    pub patience: usize,
    pub factor: f64,
    pub floor: f64,
    best: f64,
    bad: usize,
}

impl Plateau {
    pub fn new(patience: usize, factor: f64, floor: f64) -> Self {
        Plateau { patience, factor, floor, best: f64::INFINITY, bad: 0 }
    }

    pub fn step(&mut self, metric: f64, lr: &mut f64) {
        if metric < self.best {
            self.best = metric;
            self.bad = 0;
        } else {
            self.bad += 1;
            if self.bad > self.patience {
                *lr = (*lr * self.factor).max(self.floor);
                self.bad = 0;
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub valid_fraction: f64,
    pub seed: u64,
    pub patience: usize,
    pub lr_factor: f64,
    pub lr_floor: f64,
    pub fit_reference_energies: bool,
    pub weights: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 500,
            batch_size: 4,
            lr: 1e-2,
            valid_fraction: 0.1,
            seed: 0,
            patience: 50,
            lr_factor: 0.5,
            lr_floor: 1e-5,
            fit_reference_energies: true,
            weights: LossWeights::default(),
        }
    }
}

/// Seeded shuffle split into (train, valid) index lists; valid may be empty.
pub fn split_frames(n: usize, valid_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let n_valid = ((n as f64 * valid_fraction).round() as usize).min(n.saturating_sub(1));
    let valid = idx.split_off(n - n_valid);
    (idx, valid)
}

#[derive(Clone, Debug)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub valid_loss: Option<f64>,
}

#[derive(Debug)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub best_monitor: f64,
    pub final_lr: f64,
    pub train_metrics: Metrics,
    pub valid_metrics: Option<Metrics>,
    pub history: Vec<EpochRecord>,
}

fn dataset_loss_and_metrics(
    model: &Model,
    frames: &[LabeledFrame],
    weights: &LossWeights,
) -> Result<(f64, Metrics)> {
    let preds: Vec<EnergyDerivatives> =
        frames.iter().map(|f| energy_derivatives(model, &f.structure)).collect::<Result<_>>()?;
    let loss = compute_loss(weights, &preds, frames);
    Ok((loss.total, metrics_from(&preds, frames)))
}

fn write_metrics_row(
    out: &mut dyn Write,
    epoch: usize,
    lr: f64,
    train: &Metrics,
    valid: Option<&Metrics>,
) -> std::io::Result<()> {
    let mut row = format!("{epoch},{lr}");
    for t in 0..8 {
        let cell = |m: Option<TermMetric>| match m {
            Some(m) => format!("{},{}", m.rmse, m.mae),
            None => ",".into(),
        };
        row.push(',');
        row.push_str(&cell(train.terms[t]));
        row.push(',');
        row.push_str(&cell(valid.and_then(|v| v.terms[t])));
    }
    writeln!(out, "{row}")
}

pub fn metrics_csv_header() -> String {
    let mut h = String::from("epoch,lr");
    for name in TERM_NAMES {
        h.push_str(&format!(
            ",train_{name}_rmse,train_{name}_mae,valid_{name}_rmse,valid_{name}_mae"
        ));
    }
    h
}

pub fn train(
    model: &mut Model,
    frames: &[LabeledFrame],
    cfg: &TrainConfig,
    mut metrics_out: Option<&mut dyn Write>,
) -> Result<TrainReport> {
    cfg.weights.validate()?;
    cfg.weights.check_coverage(frames)?;
    if frames.is_empty() {
        return Err(Error::InsufficientData("empty dataset".into()));
    }
    if cfg.fit_reference_energies && frames.iter().any(|f| f.labels.energy.is_some()) {
        let species = model.config.species.clone();
        let e_ele = fit_isolated_energies(frames, &species)?;
        for (zi, e) in e_ele.iter().enumerate() {
            model.params.get_mut(&format!("e_ele.z{zi}"))[0] = *e;
        }
    }

    let (train_idx, valid_idx) = split_frames(frames.len(), cfg.valid_fraction, cfg.seed);
    let train_set: Vec<LabeledFrame> = train_idx.iter().map(|&i| frames[i].clone()).collect();
    let valid_set: Vec<LabeledFrame> = valid_idx.iter().map(|&i| frames[i].clone()).collect();

    let mut adam = Adam::new(model.params.data.len(), cfg.lr);
    let mut plateau = Plateau::new(cfg.patience, cfg.lr_factor, cfg.lr_floor);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut best_monitor = f64::INFINITY;
    let mut best_params = model.params.data.clone();
    let mut history = Vec::with_capacity(cfg.epochs);

    if let Some(out) = metrics_out.as_deref_mut() {
        writeln!(out, "{}", metrics_csv_header())?;
    }

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut n_batches = 0usize;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let batch: Vec<LabeledFrame> = chunk.iter().map(|&i| train_set[i].clone()).collect();
            let (loss, grad) = batch_loss_gradient(model, &batch, &cfg.weights)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite loss at epoch {epoch} on training frames {chunk:?}"
                )));
            }
            adam.step(&mut model.params.data, &grad);
            epoch_loss += loss;
            n_batches += 1;
        }
        epoch_loss /= n_batches.max(1) as f64;

        let (train_loss, train_metrics) =
            dataset_loss_and_metrics(model, &train_set, &cfg.weights)?;
        let (valid_loss, valid_metrics) = if valid_set.is_empty() {
            (None, None)
        } else {
            let (l, m) = dataset_loss_and_metrics(model, &valid_set, &cfg.weights)?;
            (Some(l), Some(m))
        };
        let monitor = valid_loss.unwrap_or(train_loss);
        if monitor < best_monitor {
            best_monitor = monitor;
            best_params.copy_from_slice(&model.params.data);
        }
        plateau.step(monitor, &mut adam.lr);

        if let Some(out) = metrics_out.as_deref_mut() {
            write_metrics_row(out, epoch, adam.lr, &train_metrics, valid_metrics.as_ref())?;
        }
        history.push(EpochRecord { epoch, lr: adam.lr, train_loss: epoch_loss, valid_loss });
    }

    model.params.data.copy_from_slice(&best_params);
    let (_, train_metrics) = dataset_loss_and_metrics(model, &train_set, &cfg.weights)?;
    let valid_metrics = if valid_set.is_empty() {
        None
    } else {
        Some(dataset_loss_and_metrics(model, &valid_set, &cfg.weights)?.1)
    };
    Ok(TrainReport {
        epochs_run: cfg.epochs,
        best_monitor,
        final_lr: adam.lr,
        train_metrics,
        valid_metrics,
        history,
    })
}
