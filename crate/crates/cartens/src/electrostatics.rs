//! Charge equilibration and latent Ewald long-range energy.

use crate::error::{Error, Result};
use crate::geometry::det3;
use crate::graph::{Func, Graph, NodeId};
use crate::tensor::CartesianTensor;
use serde::{Deserialize, Serialize};

/// Coulomb constant 1/(4 pi eps0), eV Angstrom / e^2.
pub const COULOMB: f64 = 14.399645;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LesConfig {
    /// Gaussian smearing, Angstrom.
    pub sigma: f64,
    /// Reciprocal-space cutoff, 1/Angstrom.
    pub k_cutoff: f64,
}

impl Default for LesConfig {
    fn default() -> Self {
        LesConfig { sigma: 1.0, k_cutoff: std::f64::consts::PI }
    }
}

/// Charge equilibration: Q_i = ((Q_tot + sum chi/eta) / sum(1/eta) - chi_i) / eta_i.
pub fn qeq_charges(chi: &[f64], eta: &[f64], q_tot: f64) -> Result<Vec<f64>> {
    assert_eq!(chi.len(), eta.len());
    if let Some(&bad) = eta.iter().find(|&&e| e <= 0.0) {
        return Err(Error::HardnessPositivity(bad));
    }
    let sum_inv: f64 = eta.iter().map(|e| 1.0 / e).sum();
    let sum_ratio: f64 = chi.iter().zip(eta).map(|(x, e)| x / e).sum();
    let mu = (q_tot + sum_ratio) / sum_inv;
    Ok(chi.iter().zip(eta).map(|(x, e)| (mu - x) / e).collect())
}

/// Graph-composed QEq over per-atom scalar nodes; differentiable in chi and
/// eta. Positivity of eta is the caller's responsibility (softplus head).
pub fn qeq_nodes(g: &mut Graph, chi: &[NodeId], eta: &[NodeId], q_tot: f64) -> Vec<NodeId> {
    assert_eq!(chi.len(), eta.len());
    let inv_eta: Vec<NodeId> = eta.iter().map(|&e| g.pointwise(e, Func::PowInt(-1))).collect();
    let ratios: Vec<NodeId> = chi.iter().zip(&inv_eta).map(|(&x, &ie)| g.mul(x, ie)).collect();
    let sum_ratio = g.add(&ratios);
    let sum_inv = g.add(&inv_eta);
    let qt = g.scalar(q_tot);
    let num = g.add(&[qt, sum_ratio]);
    let inv_sum = g.pointwise(sum_inv, Func::PowInt(-1));
    let mu = g.mul(num, inv_sum);
    chi.iter()
        .zip(&inv_eta)
        .map(|(&x, &ie)| {
            let d = g.sub(mu, x);
            g.mul(d, ie)
        })
        .collect()
}

/// Reciprocal lattice row vectors: b_k = 2 pi (cell^-1)^T rows.
pub fn reciprocal_cell(cell: &[[f64; 3]; 3]) -> Result<[[f64; 3]; 3]> {
    let d = det3(cell);
    if d.abs() <= crate::geometry::CELL_DET_TOL {
        return Err(Error::InvalidCell("singular cell in reciprocal construction".into()));
    }
    let f = 2.0 * std::f64::consts::PI / d;
    let cro = |a: [f64; 3], b: [f64; 3]| {
        [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
    };
    let b0 = cro(cell[1], cell[2]);
    let b1 = cro(cell[2], cell[0]);
    let b2 = cro(cell[0], cell[1]);
    let scale = |v: [f64; 3]| [v[0] * f, v[1] * f, v[2] * f];
    Ok([scale(b0), scale(b1), scale(b2)])
}

/// All nonzero k = n . B with |k| < k_cutoff, enumerated over the integer
/// bounding box implied by the reciprocal cell.
pub fn enumerate_k_vectors(cell: &[[f64; 3]; 3], k_cutoff: f64) -> Result<Vec<[f64; 3]>> {
    let b = reciprocal_cell(cell)?;
    let vol = det3(&b).abs();
    let cro = |a: [f64; 3], c: [f64; 3]| {
        [a[1] * c[2] - a[2] * c[1], a[2] * c[0] - a[0] * c[2], a[0] * c[1] - a[1] * c[0]]
    };
    let mut bounds = [0i32; 3];
    for k in 0..3 {
        let x = cro(b[(k + 1) % 3], b[(k + 2) % 3]);
        let area = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        bounds[k] = (k_cutoff / (vol / area)).ceil() as i32;
    }
    let mut out = Vec::new();
    for n0 in -bounds[0]..=bounds[0] {
        for n1 in -bounds[1]..=bounds[1] {
            for n2 in -bounds[2]..=bounds[2] {
                if (n0, n1, n2) == (0, 0, 0) {
                    continue;
                }
                let k = [
                    n0 as f64 * b[0][0] + n1 as f64 * b[1][0] + n2 as f64 * b[2][0],
                    n0 as f64 * b[0][1] + n1 as f64 * b[1][1] + n2 as f64 * b[2][1],
                    n0 as f64 * b[0][2] + n1 as f64 * b[1][2] + n2 as f64 * b[2][2],
                ];
                let kn = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt();
                if kn < k_cutoff {
                    out.push(k);
                }
            }
        }
    }
    Ok(out)
}

/// E_lr = 1/(2 eps0 V) sum_{0<|k|<kc} exp(-sigma^2 k^2 / 2)/k^2 |S(k)|^2,
/// S(k) = sum_i q_i exp(i k . r_i).
pub fn les_energy_periodic(
    positions: &[[f64; 3]],
    cell: &[[f64; 3]; 3],
    q: &[f64],
    cfg: &LesConfig,
) -> Result<f64> {
    assert_eq!(positions.len(), q.len());
    let vol = det3(cell).abs();
    let kvecs = enumerate_k_vectors(cell, cfg.k_cutoff)?;
    let mut e = 0.0;
    for k in &kvecs {
        let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
        let mut sre = 0.0;
        let mut sim = 0.0;
        for (r, &qi) in positions.iter().zip(q) {
            let phase = k[0] * r[0] + k[1] * r[1] + k[2] * r[2];
            sre += qi * phase.cos();
            sim += qi * phase.sin();
        }
        e += (-cfg.sigma * cfg.sigma * k2 / 2.0).exp() / k2 * (sre * sre + sim * sim);
    }
    // 1/(2 eps0 V) with 1/eps0 = 4 pi k_e
    Ok(2.0 * std::f64::consts::PI * COULOMB / vol * e)
}

/// Finite (non-periodic) form: 1/2 k_e sum_{i != j} erf(r/(sqrt2 sigma)) q_i q_j / r.
pub fn les_energy_finite(positions: &[[f64; 3]], q: &[f64], cfg: &LesConfig) -> Result<f64> {
    assert_eq!(positions.len(), q.len());
    let mut e = 0.0;
    for i in 0..positions.len() {
        for j in (i + 1)..positions.len() {
            let d = [
                positions[j][0] - positions[i][0],
                positions[j][1] - positions[i][1],
                positions[j][2] - positions[i][2],
            ];
            let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            if r < 1e-8 {
                return Err(Error::Geometry(format!("coincident atoms {i} and {j} (r = {r:.2e})")));
            }
            e += COULOMB * crate::math::erf(r / (std::f64::consts::SQRT_2 * cfg.sigma)) * q[i] * q[j] / r;
        }
    }
    Ok(e)
}

/// Graph form of the periodic LES energy over per-atom position and charge
/// nodes; differentiable in both.
pub fn les_periodic_node(
    g: &mut Graph,
    positions: &[NodeId],
    q: &[NodeId],
    cell: &[[f64; 3]; 3],
    cfg: &LesConfig,
) -> Result<NodeId> {
    assert_eq!(positions.len(), q.len());
    let vol = det3(cell).abs();
    let kvecs = enumerate_k_vectors(cell, cfg.k_cutoff)?;
    let mut terms = Vec::with_capacity(kvecs.len());
    for k in &kvecs {
        let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
        let kn = g.constant(CartesianTensor::vector(*k));
        let mut re_parts = Vec::with_capacity(positions.len());
        let mut im_parts = Vec::with_capacity(positions.len());
        for (&r, &qi) in positions.iter().zip(q) {
            let phase = g.diag_dot(kn, r);
            let c = g.pointwise(phase, Func::Cos);
            let s = g.pointwise(phase, Func::Sin);
            re_parts.push(g.mul(qi, c));
            im_parts.push(g.mul(qi, s));
        }
        let sre = g.add(&re_parts);
        let sim = g.add(&im_parts);
        let re2 = g.mul(sre, sre);
        let im2 = g.mul(sim, sim);
        let s2 = g.add(&[re2, im2]);
        terms.push(g.scale(s2, (-cfg.sigma * cfg.sigma * k2 / 2.0).exp() / k2));
    }
    if terms.is_empty() {
        return Ok(g.scalar(0.0));
    }
    let sum = g.add(&terms);
    Ok(g.scale(sum, 2.0 * std::f64::consts::PI * COULOMB / vol))
}

/// Graph form of the finite LES energy.
pub fn les_finite_node(g: &mut Graph, positions: &[NodeId], q: &[NodeId], cfg: &LesConfig) -> Result<NodeId> {
    assert_eq!(positions.len(), q.len());
    let mut terms = Vec::new();
    for i in 0..positions.len() {
        for j in (i + 1)..positions.len() {
            let d = g.sub(positions[j], positions[i]);
            let r = g.norm3(d);
            if g.scalar_value(r) < 1e-8 {
                return Err(Error::Geometry(format!("coincident atoms {i} and {j}")));
            }
            let arg = g.scale(r, 1.0 / (std::f64::consts::SQRT_2 * cfg.sigma));
            let ef = g.pointwise(arg, Func::Erf);
            let inv_r = g.pointwise(r, Func::PowInt(-1));
            let qq = g.mul(q[i], q[j]);
            let a = g.mul(ef, inv_r);
            let b = g.mul(a, qq);
            terms.push(g.scale(b, COULOMB));
        }
    }
    if terms.is_empty() {
        return Ok(g.scalar(0.0));
    }
    Ok(g.add(&terms))
}

/// Strain derivative of the periodic LES energy,
/// dE/d eps_{ab} = 1/(2 eps0 V) sum_k f(k) |S(k)|^2 (sigma^2 + 2/k^2) k_a k_b
///                 - delta_ab E_lr,
/// used for the long-range part of the virial.
pub fn les_periodic_strain_derivative(
    positions: &[[f64; 3]],
    cell: &[[f64; 3]; 3],
    q: &[f64],
    cfg: &LesConfig,
) -> Result<[[f64; 3]; 3]> {
    let vol = det3(cell).abs();
    let kvecs = enumerate_k_vectors(cell, cfg.k_cutoff)?;
    let pref = 2.0 * std::f64::consts::PI * COULOMB / vol;
    let mut e_lr = 0.0;
    let mut out = [[0.0; 3]; 3];
    for k in &kvecs {
        let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
        let mut sre = 0.0;
        let mut sim = 0.0;
        for (r, &qi) in positions.iter().zip(q) {
            let phase = k[0] * r[0] + k[1] * r[1] + k[2] * r[2];
            sre += qi * phase.cos();
            sim += qi * phase.sin();
        }
        let s2 = sre * sre + sim * sim;
        let f = (-cfg.sigma * cfg.sigma * k2 / 2.0).exp() / k2;
        e_lr += pref * f * s2;
        let coeff = pref * f * s2 * (cfg.sigma * cfg.sigma + 2.0 / k2);
        for a in 0..3 {
            for b in 0..3 {
                out[a][b] += coeff * k[a] * k[b];
            }
        }
    }
    for a in 0..3 {
        out[a][a] -= e_lr;
    }
    Ok(out)
}
