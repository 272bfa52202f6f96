//! Radial embedding: spherical Bessel j0 basis with a smooth polynomial
//! cutoff envelope, and the bias-free MLPs that turn the basis into path
//! weights.

use crate::error::{Error, Result};
use crate::graph::{Func, Graph, NodeId};
use crate::params::ParamStore;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadialBasisConfig {
    pub n_max: usize,
    pub cutoff: f64,
    pub envelope_p: u32,
    pub trainable: bool,
}

impl Default for RadialBasisConfig {
    fn default() -> Self {
        RadialBasisConfig { n_max: 8, cutoff: 5.0, envelope_p: 6, trainable: false }
    }
}

/// Polynomial cutoff envelope (DimeNet family), exponent `p`:
/// 1 - (p+1)(p+2)/2 u^p + p(p+2) u^{p+1} - p(p+1)/2 u^{p+2}, u = r/c.
/// Has p-1 vanishing derivatives at u = 1.
pub fn envelope(u: f64, p: u32) -> f64 {
    if u >= 1.0 {
        return 0.0;
    }
    let p = p as f64;
    let up = u.powf(p);
    1.0 - 0.5 * (p + 1.0) * (p + 2.0) * up + p * (p + 2.0) * up * u - 0.5 * p * (p + 1.0) * up * u * u
}

/// j0 basis component n (1-based): sqrt(2/c) sin(n pi r / c) / r, times the
/// envelope.
pub fn radial_basis(r: f64, cfg: &RadialBasisConfig) -> Result<Vec<f64>> {
    if r <= 0.0 {
        return Err(Error::Domain(format!("radial basis needs r > 0, got {r}")));
    }
    let c = cfg.cutoff;
    if r >= c {
        return Ok(vec![0.0; cfg.n_max]);
    }
    let amp = (2.0 / c).sqrt();
    let env = envelope(r / c, cfg.envelope_p);
    Ok((1..=cfg.n_max)
        .map(|n| amp * (n as f64 * std::f64::consts::PI * r / c).sin() / r * env)
        .collect())
}

/// Graph-composed radial basis for a rank-0 single-channel distance node.
/// Output has `n_max` channels. Valid on edges, where 0 < r <= c always
/// holds; the envelope keeps value and derivatives smooth at the cutoff.
pub fn radial_basis_node(g: &mut Graph, r: NodeId, cfg: &RadialBasisConfig) -> NodeId {
    let c = cfg.cutoff;
    let amp = (2.0 / c).sqrt();
    let inv_r = g.pointwise(r, Func::PowInt(-1));

    // envelope as a polynomial in u = r/c
    let u = g.scale(r, 1.0 / c);
    let p = cfg.envelope_p as i32;
    let pf = cfg.envelope_p as f64;
    let up0 = g.pointwise(u, Func::PowInt(p));
    let up1 = g.pointwise(u, Func::PowInt(p + 1));
    let up2 = g.pointwise(u, Func::PowInt(p + 2));
    let one = g.scalar(1.0);
    let t0 = g.scale(up0, -0.5 * (pf + 1.0) * (pf + 2.0));
    let t1 = g.scale(up1, pf * (pf + 2.0));
    let t2 = g.scale(up2, -0.5 * pf * (pf + 1.0));
    let env = g.add(&[one, t0, t1, t2]);

    let env_over_r = g.mul(env, inv_r);
    let mut parts = Vec::with_capacity(cfg.n_max);
    for n in 1..=cfg.n_max {
        let arg = g.scale(r, n as f64 * std::f64::consts::PI / c);
        let s = g.pointwise(arg, Func::Sin);
        let term = g.mul(s, env_over_r);
        parts.push(g.scale(term, amp));
    }
    g.concat(&parts)
}

/// Register the weights of a bias-free MLP with layer sizes
/// `[n_in, h1, ..., n_out]` under `prefix.w0`, `prefix.w1`, ...
pub fn register_mlp<R: Rng>(store: &mut ParamStore, prefix: &str, sizes: &[usize], rng: &mut R) {
    assert!(sizes.len() >= 2, "mlp needs at least input and output sizes");
    for l in 0..sizes.len() - 1 {
        store.register_normal(&format!("{prefix}.w{l}"), sizes[l] * sizes[l + 1], sizes[l], rng);
    }
}

/// Apply the MLP registered under `prefix` to a rank-0 node with `sizes[0]`
/// channels. SiLU between layers, linear output, no biases anywhere, so a
/// zero input maps to exactly zero.
pub fn mlp_node(g: &mut Graph, store: &ParamStore, prefix: &str, sizes: &[usize], x: NodeId) -> NodeId {
    let mut h = x;
    for l in 0..sizes.len() - 1 {
        let w = g.param(store, &format!("{prefix}.w{l}"));
        h = g.linear_mix(h, w, sizes[l], sizes[l + 1], false);
        if l + 2 < sizes.len() {
            h = g.pointwise(h, Func::SiluD(0));
        }
    }
    h
}
