//! First-derivative properties from reverse passes over the model graph,
//! plus finite-difference second derivatives (polarizability response,
//! Born charges, Hessian).

use crate::electrostatics::les_periodic_strain_derivative;
use crate::error::{Error, Result};
use crate::geometry::Structure;
use crate::model::{Forward, Model};
use nalgebra::DMatrix;

#[derive(Debug, Clone)]
pub struct EnergyDerivatives {
    pub energy: f64,
    pub site_energies: Vec<f64>,
    pub forces: Vec<[f64; 3]>,
    /// -dE/deps (strain derivative), periodic structures only.
    pub virial: Option<[[f64; 3]; 3]>,
    /// dE/deps / V, periodic structures only.
    pub stress: Option<[[f64; 3]; 3]>,
    /// -dE/dm_i when the magnetic embedding is active.
    pub magnetic_forces: Option<Vec<[f64; 3]>>,
    /// dE/dfield when the field embedding is active.
    pub field_gradient: Option<[f64; 3]>,
    pub charges: Vec<f64>,
    pub dipole: Option<[f64; 3]>,
    pub alpha: Option<[[f64; 3]; 3]>,
}

pub fn energy_derivatives(model: &Model, s: &Structure) -> Result<EnergyDerivatives> {
    let mut fwd = model.forward(s)?;
    let n = s.len();

    let mut wrt: Vec<_> = fwd.positions.clone();
    wrt.extend(fwd.edge_vectors.iter().copied());
    if let Some(f) = fwd.field_node {
        wrt.push(f);
    }
    wrt.extend(fwd.magmom_nodes.iter().copied());
    let adj = fwd.graph.grad(fwd.energy, &wrt);

    let vec3 = |fwd: &Forward, id: Option<crate::graph::NodeId>| -> [f64; 3] {
        match id {
            Some(id) => {
                let d = &fwd.graph.value(id).data;
                [d[0], d[1], d[2]]
            }
            None => [0.0; 3],
        }
    };

    let mut forces = Vec::with_capacity(n);
    for i in 0..n {
        let g = vec3(&fwd, adj[i]);
        forces.push([-g[0], -g[1], -g[2]]);
    }

    let (virial, stress) = if s.pbc.iter().all(|&p| p) {
        let mut d_eps = [[0.0; 3]; 3];
        for (e, &dn) in fwd.edge_vectors.iter().enumerate() {
            let g = vec3(&fwd, adj[n + e]);
            let d = &fwd.graph.value(dn).data;
            for a in 0..3 {
                for b in 0..3 {
                    d_eps[a][b] += g[a] * d[b];
                }
            }
        }
        if model.config.les {
            let q = fwd.q_les_values();
            let cell = s.cell.unwrap();
            let lr =
                les_periodic_strain_derivative(&s.positions, &cell, &q, &model.config.les_config)?;
            for a in 0..3 {
                for b in 0..3 {
                    d_eps[a][b] += lr[a][b];
                }
            }
        }
        let mut sym = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                sym[a][b] = 0.5 * (d_eps[a][b] + d_eps[b][a]);
            }
        }
        let vol = s.volume()?;
        let mut vir = [[0.0; 3]; 3];
        let mut sig = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                vir[a][b] = -sym[a][b];
                sig[a][b] = sym[a][b] / vol;
            }
        }
        (Some(vir), Some(sig))
    } else {
        (None, None)
    };

    let mut cursor = n + fwd.edge_vectors.len();
    let field_gradient = if fwd.field_node.is_some() {
        let g = vec3(&fwd, adj[cursor]);
        cursor += 1;
        Some(g)
    } else {
        None
    };

    let magnetic_forces = if fwd.magmom_nodes.is_empty() {
        None
    } else {
        let mut mf = Vec::with_capacity(n);
        for i in 0..n {
            let g = vec3(&fwd, adj[cursor + i]);
            mf.push([-g[0], -g[1], -g[2]]);
        }
        Some(mf)
    };

    Ok(EnergyDerivatives {
        energy: fwd.energy_value(),
        site_energies: fwd.site_energy_values(),
        forces,
        virial,
        stress,
        magnetic_forces,
        field_gradient,
        charges: fwd.charge_values(),
        dipole: fwd.dipole_value(),
        alpha: fwd.alpha_value(),
    })
}

pub fn forces(model: &Model, s: &Structure) -> Result<Vec<[f64; 3]>> {
    Ok(energy_derivatives(model, s)?.forces)
}

pub fn stress(model: &Model, s: &Structure) -> Result<[[f64; 3]; 3]> {
    if !s.pbc.iter().all(|&p| p) {
        return Err(Error::WrongVariant("stress requires a fully periodic structure".into()));
    }
    Ok(energy_derivatives(model, s)?.stress.unwrap())
}

pub fn magnetic_forces(model: &Model, s: &Structure) -> Result<Vec<[f64; 3]>> {
    if !model.config.schema.magmoms {
        return Err(Error::Capability("model has no magnetic embedding".into()));
    }
    energy_derivatives(model, s)?
        .magnetic_forces
        .ok_or_else(|| Error::Capability("magnetic forces unavailable".into()))
}

/// Polarization P = -dU/dfield from one reverse pass.
pub fn polarization(model: &Model, s: &Structure) -> Result<[f64; 3]> {
    if !model.config.schema.field {
        return Err(Error::Capability("model has no field embedding".into()));
    }
    let d = energy_derivatives(model, s)?;
    let g = d.field_gradient.unwrap();
    Ok([-g[0], -g[1], -g[2]])
}

fn richardson(d_h: [f64; 3], d_2h: [f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for a in 0..3 {
        out[a] = (4.0 * d_h[a] - d_2h[a]) / 3.0;
    }
    out
}

fn central_p(model: &Model, plus: &Structure, minus: &Structure, h: f64) -> Result<[f64; 3]> {
    let pp = polarization(model, plus)?;
    let pm = polarization(model, minus)?;
    Ok([(pp[0] - pm[0]) / (2.0 * h), (pp[1] - pm[1]) / (2.0 * h), (pp[2] - pm[2]) / (2.0 * h)])
}

/// alpha_{ab} = dP_a/dfield_b by central differences of the analytic P,
/// step 1e-3, one Richardson step.
pub fn polarizability_response(model: &Model, s: &Structure) -> Result<[[f64; 3]; 3]> {
    if !model.config.schema.field {
        return Err(Error::Capability("model has no field embedding".into()));
    }
    let f0 = s.external_field.ok_or(Error::MissingAttribute("external_field".into()))?;
    let h = 1e-3;
    let mut alpha = [[0.0; 3]; 3];
    for b in 0..3 {
        let probe = |step: f64| -> Result<[f64; 3]> {
            let mut sp = s.clone();
            let mut sm = s.clone();
            let mut fp = f0;
            let mut fm = f0;
            fp[b] += step;
            fm[b] -= step;
            sp.external_field = Some(fp);
            sm.external_field = Some(fm);
            central_p(model, &sp, &sm, step)
        };
        let d = richardson(probe(h)?, probe(2.0 * h)?);
        for a in 0..3 {
            alpha[a][b] = d[a];
        }
    }
    Ok(alpha)
}

/// Born effective charges: bec[i][a][b] = dP_a/dr_{i,b} in units of e,
/// central differences with step 1e-3 Angstrom and one Richardson step.
pub fn born_charges(model: &Model, s: &Structure) -> Result<Vec<[[f64; 3]; 3]>> {
    if !model.config.schema.field {
        return Err(Error::Capability("model has no field embedding".into()));
    }
    let h = 1e-3;
    let mut bec = Vec::with_capacity(s.len());
    for i in 0..s.len() {
        let mut z = [[0.0; 3]; 3];
        for b in 0..3 {
            let probe = |step: f64| -> Result<[f64; 3]> {
                let mut sp = s.clone();
                let mut sm = s.clone();
                sp.positions[i][b] += step;
                sm.positions[i][b] -= step;
                central_p(model, &sp, &sm, step)
            };
            let d = richardson(probe(h)?, probe(2.0 * h)?);
            for a in 0..3 {
                z[a][b] = d[a];
            }
        }
        bec.push(z);
    }
    Ok(bec)
}

/// 3N x 3N Hessian of E by central differences of analytic forces.
pub fn hessian_fd(model: &Model, s: &Structure, h: f64) -> Result<DMatrix<f64>> {
    let n = s.len();
    let mut hess = DMatrix::zeros(3 * n, 3 * n);
    for i in 0..n {
        for b in 0..3 {
            let mut sp = s.clone();
            let mut sm = s.clone();
            sp.positions[i][b] += h;
            sm.positions[i][b] -= h;
            let fp = forces(model, &sp)?;
            let fm = forces(model, &sm)?;
            for j in 0..n {
                for a in 0..3 {
                    hess[(3 * j + a, 3 * i + b)] = -(fp[j][a] - fm[j][a]) / (2.0 * h);
                }
            }
        }
    }
    // symmetrize away FD noise
    let sym = (&hess + hess.transpose()) * 0.5;
    Ok(sym)
}
