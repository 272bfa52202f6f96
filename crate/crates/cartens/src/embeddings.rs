//! Angular edge tensors and the element / universal attribute embeddings.

use crate::contraction::ContractionPath;
use crate::decomp::DecompositionTable;
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId, Projector};
use crate::params::ParamStore;
use crate::radial::{mlp_node, register_mlp};
use crate::tensor::CartesianTensor;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Which optional attributes the model consumes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttributeSchema {
    /// Size of the fidelity-id table; 0 disables the discrete embedding.
    pub fidelity_table: usize,
    /// Embed the scalar total charge through an MLP.
    pub total_charge: bool,
    /// Equivariant external-field embedding.
    pub field: bool,
    /// Equivariant magnetic-moment embedding.
    pub magmoms: bool,
}

impl AttributeSchema {
    pub fn has_invariant(&self) -> bool {
        self.fidelity_table > 0 || self.total_charge
    }
}

/// Embedding width of one discrete attribute before projection.
pub const DISCRETE_DIM: usize = 8;
/// Hidden sizes of the continuous-attribute MLP.
pub const CONTINUOUS_SIZES: [usize; 3] = [1, 16, 16];

/// (2 nu - 1)!! / nu!, the normalization making the angular tensor contract
/// back onto lower-rank angular tensors.
pub fn angular_prefactor(nu: usize) -> f64 {
    let dfac: f64 = (0..nu).map(|m| (2 * m + 1) as f64).product();
    let fac: f64 = (1..=nu).map(|m| m as f64).product();
    dfac / fac.max(1.0)
}

/// Symmetric traceless angular tensor of rank `nu` for a unit vector.
/// Inputs off unit norm by more than 1e-6 are rejected; smaller deviations
/// are renormalized.
pub fn angular_embedding(rhat: [f64; 3], nu: usize, table: &DecompositionTable) -> Result<CartesianTensor> {
    let n = (rhat[0] * rhat[0] + rhat[1] * rhat[1] + rhat[2] * rhat[2]).sqrt();
    if (n - 1.0).abs() > 1e-6 {
        return Err(Error::Domain(format!("angular embedding expects a unit vector, |r| = {n}")));
    }
    let r = [rhat[0] / n, rhat[1] / n, rhat[2] / n];
    let mut power = CartesianTensor::scalar(1.0);
    for _ in 0..nu {
        let path = ContractionPath::canonical(power.rank, 1, power.rank + 1)?;
        power = crate::contraction::contract(&power, &CartesianTensor::vector(r), &path)?;
    }
    Ok(table.highest_weight_project(&power)?.scaled(angular_prefactor(nu)))
}

/// Graph-built angular tensors for every rank 0..=l_max from a unit-vector
/// node. `hwp[nu]` are the highest-weight projectors.
pub fn angular_nodes(
    g: &mut Graph,
    rhat: NodeId,
    l_max: usize,
    hwp: &[Arc<Projector>],
) -> Vec<NodeId> {
    let mut out = Vec::with_capacity(l_max + 1);
    out.push(g.constant(CartesianTensor::scalar(1.0)));
    let mut power = rhat;
    for nu in 1..=l_max {
        if nu > 1 {
            let path = ContractionPath::canonical(nu - 1, 1, nu).expect("outer product path");
            let table = crate::contraction::TripleTable::from_path(&path);
            power = g.bilinear(power, rhat, table);
        }
        let proj = g.project(power, hwp[nu].clone(), false);
        out.push(g.scale(proj, angular_prefactor(nu)));
    }
    out
}

/// Register per-species element rows and the universal invariant tables.
pub fn register_embedding_params<R: Rng>(
    store: &mut ParamStore,
    schema: &AttributeSchema,
    n_species: usize,
    channels: usize,
    rng: &mut R,
) {
    for zi in 0..n_species {
        store.register_normal(&format!("element.z{zi}"), channels, 1, rng);
    }
    let mut uni_in = 0;
    if schema.fidelity_table > 0 {
        for id in 0..schema.fidelity_table {
            store.register_normal(&format!("uni.fid.t{id}"), DISCRETE_DIM, 1, rng);
        }
        uni_in += DISCRETE_DIM;
    }
    if schema.total_charge {
        register_mlp(store, "uni.q", &CONTINUOUS_SIZES, rng);
        uni_in += *CONTINUOUS_SIZES.last().unwrap();
    }
    if uni_in > 0 {
        store.register_normal("uni.proj", uni_in * channels, uni_in, rng);
        store.register("uni.energy", channels); // zero so the initial model sits on the baseline
    }
}

/// Rank-0 element embedding: the table row of the species.
pub fn element_embed(g: &mut Graph, store: &ParamStore, species_index: usize) -> NodeId {
    g.param(store, &format!("element.z{species_index}"))
}

/// Universal invariant embedding of the configured graph-level attributes,
/// projected to `channels`. Returns `None` when no invariant attributes are
/// configured.
pub fn universal_invariant_embed(
    g: &mut Graph,
    store: &ParamStore,
    schema: &AttributeSchema,
    channels: usize,
    fidelity: Option<i64>,
    total_charge: Option<f64>,
) -> Result<Option<NodeId>> {
    let mut parts = Vec::new();
    let mut uni_in = 0;
    if schema.fidelity_table > 0 {
        let id = fidelity.ok_or_else(|| Error::MissingAttribute("fidelity".into()))?;
        if id < 0 || id as usize >= schema.fidelity_table {
            return Err(Error::UnknownLabel(id.max(0) as usize, schema.fidelity_table));
        }
        parts.push(g.param(store, &format!("uni.fid.t{id}")));
        uni_in += DISCRETE_DIM;
    }
    if schema.total_charge {
        let q = total_charge.ok_or_else(|| Error::MissingAttribute("total_charge".into()))?;
        let x = g.constant(CartesianTensor::scalar(q));
        parts.push(mlp_node(g, store, "uni.q", &CONTINUOUS_SIZES, x));
        uni_in += *CONTINUOUS_SIZES.last().unwrap();
    }
    if parts.is_empty() {
        return Ok(None);
    }
    let cat = g.concat(&parts);
    let w = g.param(store, "uni.proj");
    Ok(Some(g.linear_mix(cat, w, uni_in, channels, false)))
}

/// Add the equivariant attribute term to a rank-1 atomic-basis node:
/// A1_c += w_c * v / sigma.
pub fn equivariant_embed(
    g: &mut Graph,
    a1: NodeId,
    v: NodeId,
    weight: NodeId,
    sigma: f64,
    channels: usize,
) -> NodeId {
    let scaled = g.scale(v, 1.0 / sigma);
    let b = g.broadcast(scaled, channels);
    let term = g.channel_mul(b, weight);
    g.add(&[a1, term])
}
