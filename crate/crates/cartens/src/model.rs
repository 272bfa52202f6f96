//! The network: one-particle basis, atomic basis, product basis, message
//! passing, readouts, charge heads, and site-energy assembly.

use crate::contraction::{enumerate_paths, PathMode, TripleTable};
use crate::decomp::build_decomposition_table;
use crate::electrostatics::{les_finite_node, les_periodic_node, qeq_nodes, LesConfig};
use crate::embeddings::{
    angular_nodes, element_embed, equivariant_embed, register_embedding_params,
    universal_invariant_embed, AttributeSchema,
};
use crate::error::{Error, Result};
use crate::geometry::{build_neighbor_list, Structure};
use crate::graph::{Func, Graph, NodeId, Projector};
use crate::params::ParamStore;
use crate::radial::{mlp_node, radial_basis_node, register_mlp, RadialBasisConfig};
use crate::tensor::{CartesianTensor, MAX_RANK};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChargeHead {
    None,
    Direct,
    Qeq,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub species: Vec<u32>,
    pub channels: usize,
    /// Message-passing layers T.
    pub layers: usize,
    /// Max rank of node features.
    pub l_max: usize,
    /// Max rank of angular edge attributes.
    pub edge_l_max: usize,
    /// Correlation order of the product basis.
    pub correlation: usize,
    pub path_mode: PathMode,
    /// Species-indexed message weights when true.
    pub coupled: bool,
    pub radial: RadialBasisConfig,
    /// Hidden sizes of the radial MLPs.
    pub radial_mlp: Vec<usize>,
    /// Hidden width of the final energy readout MLP.
    pub readout_hidden: usize,
    pub schema: AttributeSchema,
    pub les: bool,
    pub les_config: LesConfig,
    pub charge_head: ChargeHead,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            species: Vec::new(),
            channels: 64,
            layers: 2,
            l_max: 2,
            edge_l_max: 3,
            correlation: 3,
            path_mode: PathMode::Single,
            coupled: true,
            radial: RadialBasisConfig::default(),
            radial_mlp: vec![64, 64, 64],
            readout_hidden: 16,
            schema: AttributeSchema::default(),
            les: false,
            les_config: LesConfig::default(),
            charge_head: ChargeHead::None,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.species.is_empty() {
            return Err(Error::Config("species list is empty".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for &z in &self.species {
            if z == 0 || !seen.insert(z) {
                return Err(Error::Config(format!("bad or duplicate species {z}")));
            }
        }
        if self.layers < 1 {
            return Err(Error::Config("layers must be >= 1".into()));
        }
        if self.correlation < 1 {
            return Err(Error::Config("correlation order must be >= 1".into()));
        }
        if self.channels < 1 {
            return Err(Error::Config("channels must be >= 1".into()));
        }
        if self.l_max > MAX_RANK || self.edge_l_max > MAX_RANK {
            return Err(Error::UnsupportedRank(self.l_max.max(self.edge_l_max), MAX_RANK));
        }
        if (self.schema.field || self.schema.magmoms) && self.l_max < 1 {
            return Err(Error::Config("equivariant attributes need l_max >= 1".into()));
        }
        Ok(())
    }
}

/// Dataset statistics baked into the checkpoint.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Statistics {
    /// Scale on the learned residual site energy (RMS of training forces).
    pub e_scale: f64,
    pub sigma_field: f64,
    pub sigma_mag: f64,
    pub avg_neighbors: f64,
}

impl Default for Statistics {
    fn default() -> Self {
        Statistics { e_scale: 1.0, sigma_field: 1.0, sigma_mag: 1.0, avg_neighbors: 1.0 }
    }
}

/// One contraction path in the one-particle basis plan.
struct PathEntry {
    nu1: usize,
    nu2: usize,
    nu3: usize,
    table: Arc<TripleTable>,
    /// Variance normalization 1/sqrt(3^k) for k contracted index pairs.
    variance: f64,
    /// Radial weight groups; `None` is the identity (single-path mode), in
    /// all-path mode one projector per (l, q) component of the output rank.
    groups: Vec<Option<Arc<Projector>>>,
    /// First group index into the layer's radial-weight output.
    radial_offset: usize,
}

struct LayerPlan {
    entries: Vec<PathEntry>,
    n_groups: usize,
    /// Entry indices grouped by output rank.
    by_rank: Vec<Vec<usize>>,
}

/// Canonical self-contraction combos for the product basis.
struct ProdEntry {
    nu1: usize,
    nu2: usize,
    nu3: usize,
    table: Arc<TripleTable>,
    variance: f64,
}

struct Plan {
    layers: Vec<LayerPlan>,
    prod: Vec<ProdEntry>,
    hwp: Vec<Arc<Projector>>,
}

fn build_plan(cfg: &ModelConfig) -> Result<Plan> {
    let max_rank = cfg.l_max.max(cfg.edge_l_max);
    let decomp = build_decomposition_table(max_rank)?;
    let hwp: Vec<Arc<Projector>> = (0..=max_rank)
        .map(|nu| {
            if nu == 0 {
                Ok(Projector::new(nalgebra::DMatrix::identity(1, 1)))
            } else {
                Ok(Projector::new(decomp.highest_weight_projector(nu)?.clone()))
            }
        })
        .collect::<Result<_>>()?;

    let mut layers = Vec::with_capacity(cfg.layers);
    for t in 0..cfg.layers {
        let node_ranks: Vec<usize> = if t == 0 { vec![0] } else { (0..=cfg.l_max).collect() };
        let mut entries = Vec::new();
        let mut by_rank = vec![Vec::new(); cfg.l_max + 1];
        let mut offset = 0;
        for nu3 in 0..=cfg.l_max {
            for &nu1 in &node_ranks {
                for nu2 in 0..=cfg.edge_l_max {
                    let Ok(paths) = enumerate_paths(nu1, nu2, nu3, cfg.path_mode) else { continue };
                    for path in paths {
                        let groups: Vec<Option<Arc<Projector>>> = match cfg.path_mode {
                            PathMode::Single => vec![None],
                            PathMode::All => decomp
                                .entries(nu3)?
                                .iter()
                                .map(|e| Some(Projector::new(e.projector.clone())))
                                .collect(),
                        };
                        let n = groups.len();
                        by_rank[nu3].push(entries.len());
                        entries.push(PathEntry {
                            nu1,
                            nu2,
                            nu3,
                            table: TripleTable::from_path(&path),
                            variance: 1.0 / (3.0f64.powi(path.k as i32)).sqrt(),
                            groups,
                            radial_offset: offset,
                        });
                        offset += n;
                    }
                }
            }
        }
        layers.push(LayerPlan { entries, n_groups: offset, by_rank });
    }

    let mut prod = Vec::new();
    for nu3 in 0..=cfg.l_max {
        for nu1 in 0..=cfg.l_max {
            for nu2 in 0..=cfg.l_max {
                let Ok(path) = crate::contraction::ContractionPath::canonical(nu1, nu2, nu3) else {
                    continue;
                };
                prod.push(ProdEntry {
                    nu1,
                    nu2,
                    nu3,
                    table: TripleTable::from_path(&path),
                    variance: 1.0 / (3.0f64.powi(path.k as i32)).sqrt(),
                });
            }
        }
    }

    Ok(Plan { layers, prod, hwp })
}

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: ModelConfig,
    pub stats: Statistics,
    pub params: ParamStore,
}

pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub stats: Statistics,
    plan: Plan,
}

/// Everything a forward pass exposes: node ids into the owned graph, so
/// callers can read values or differentiate further.
pub struct Forward {
    pub graph: Graph,
    pub energy: NodeId,
    pub site_energies: Vec<NodeId>,
    pub positions: Vec<NodeId>,
    pub edges: Vec<(usize, usize, [i32; 3])>,
    pub edge_vectors: Vec<NodeId>,
    pub field_node: Option<NodeId>,
    pub magmom_nodes: Vec<NodeId>,
    pub h_final: Vec<Vec<NodeId>>,
    pub q_les: Vec<NodeId>,
    pub e_lr: Option<NodeId>,
    pub charges: Vec<NodeId>,
    pub chi: Vec<NodeId>,
    pub eta: Vec<NodeId>,
    pub dipole: Option<NodeId>,
    /// Full 3x3 polarizability as a rank-2 node (gamma I + beta).
    pub alpha: Option<NodeId>,
}

impl Forward {
    pub fn energy_value(&self) -> f64 {
        self.graph.scalar_value(self.energy)
    }

    pub fn site_energy_values(&self) -> Vec<f64> {
        self.site_energies.iter().map(|&id| self.graph.scalar_value(id)).collect()
    }

    pub fn charge_values(&self) -> Vec<f64> {
        self.charges.iter().map(|&id| self.graph.scalar_value(id)).collect()
    }

    pub fn q_les_values(&self) -> Vec<f64> {
        self.q_les.iter().map(|&id| self.graph.scalar_value(id)).collect()
    }

    pub fn dipole_value(&self) -> Option<[f64; 3]> {
        self.dipole.map(|id| {
            let d = &self.graph.value(id).data;
            [d[0], d[1], d[2]]
        })
    }

    pub fn alpha_value(&self) -> Option<[[f64; 3]; 3]> {
        self.alpha.map(|id| {
            let d = &self.graph.value(id).data;
            [[d[0], d[1], d[2]], [d[3], d[4], d[5]], [d[6], d[7], d[8]]]
        })
    }
}

/// Initial value of the hardness offset; softplus of it is 1.
const ETA0: f64 = 0.541_324_854_612_918;

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let plan = build_plan(&config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = register_params(&config, &plan, &mut rng);
        Ok(Model { config, params, stats: Statistics::default(), plan })
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "checkpoint format {} unsupported (expected {CHECKPOINT_VERSION})",
                ck.format_version
            )));
        }
        ck.config.validate()?;
        let plan = build_plan(&ck.config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let reference = register_params(&ck.config, &plan, &mut rng);
        reference.compatible(&ck.params)?;
        Ok(Model { config: ck.config, params: ck.params, stats: ck.stats, plan })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            stats: self.stats,
            params: self.params.clone(),
        }
    }

    pub fn species_index(&self, z: u32) -> Result<usize> {
        self.config
            .species
            .iter()
            .position(|&s| s == z)
            .ok_or(Error::UnknownSpecies(z as i64))
    }

    /// Species-suffixed weight name in coupled mode, shared name otherwise.
    fn wz(&self, base: &str, zi: usize) -> String {
        if self.config.coupled {
            format!("{base}.z{zi}")
        } else {
            base.to_string()
        }
    }

    fn residual_active(&self, t: usize) -> bool {
        t >= 1 || self.config.layers == 1
    }

    fn radial_sizes(&self, t: usize) -> Vec<usize> {
        let mut sizes = vec![self.config.radial.n_max];
        sizes.extend(&self.config.radial_mlp);
        sizes.push(self.plan.layers[t].n_groups * self.config.channels);
        sizes
    }

    pub fn forward(&self, s: &Structure) -> Result<Forward> {
        s.validate()?;
        let cfg = &self.config;
        let n = s.len();
        let zi: Vec<usize> = s.species.iter().map(|&z| self.species_index(z)).collect::<Result<_>>()?;
        if cfg.schema.field && s.external_field.is_none() {
            return Err(Error::MissingAttribute("external_field".into()));
        }
        if cfg.schema.magmoms && s.magmoms.is_none() {
            return Err(Error::MissingAttribute("magmoms".into()));
        }
        let fully_periodic = s.pbc == [true; 3];
        if cfg.les && s.is_periodic() && !fully_periodic {
            return Err(Error::WrongVariant("LES needs a fully periodic or fully open structure".into()));
        }

        let mut g = Graph::new();
        if n == 0 {
            let zero = g.scalar(0.0);
            return Ok(Forward {
                graph: g,
                energy: zero,
                site_energies: vec![],
                positions: vec![],
                edges: vec![],
                edge_vectors: vec![],
                field_node: None,
                magmom_nodes: vec![],
                h_final: vec![],
                q_les: vec![],
                e_lr: None,
                charges: vec![],
                chi: vec![],
                eta: vec![],
                dipole: None,
                alpha: None,
            });
        }

        let mut nl = build_neighbor_list(s, cfg.radial.cutoff)?;
        nl.edges.sort_unstable();
        let identity = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let cell = s.cell.unwrap_or(identity);

        let positions: Vec<NodeId> =
            s.positions.iter().map(|&p| g.input(CartesianTensor::vector(p))).collect();
        let field_node = if cfg.schema.field {
            Some(g.input(CartesianTensor::vector(s.external_field.unwrap())))
        } else {
            None
        };
        let magmom_nodes: Vec<NodeId> = if cfg.schema.magmoms {
            s.magmoms.as_ref().unwrap().iter().map(|&m| g.input(CartesianTensor::vector(m))).collect()
        } else {
            vec![]
        };

        // per-edge geometry nodes
        let mut edge_vectors = Vec::with_capacity(nl.edges.len());
        let mut edge_ang: Vec<Vec<NodeId>> = Vec::with_capacity(nl.edges.len());
        let mut edge_rb: Vec<NodeId> = Vec::with_capacity(nl.edges.len());
        let mut in_edges: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (ei, &(i, j, shift)) in nl.edges.iter().enumerate() {
            let off = [
                shift[0] as f64 * cell[0][0] + shift[1] as f64 * cell[1][0] + shift[2] as f64 * cell[2][0],
                shift[0] as f64 * cell[0][1] + shift[1] as f64 * cell[1][1] + shift[2] as f64 * cell[2][1],
                shift[0] as f64 * cell[0][2] + shift[1] as f64 * cell[1][2] + shift[2] as f64 * cell[2][2],
            ];
            let shift_node = g.constant(CartesianTensor::vector(off));
            let neg_i = g.scale(positions[i], -1.0);
            let d = g.add(&[positions[j], neg_i, shift_node]);
            let r = g.norm3(d);
            let inv_r = g.pointwise(r, Func::PowInt(-1));
            let rhat = g.channel_mul(d, inv_r);
            edge_vectors.push(d);
            edge_ang.push(angular_nodes(&mut g, rhat, cfg.edge_l_max, &self.plan.hwp));
            edge_rb.push(radial_basis_node(&mut g, r, &cfg.radial));
            in_edges[i].push(ei);
        }

        // initial node features: element row plus the universal invariant term
        let uni = universal_invariant_embed(
            &mut g,
            &self.params,
            &cfg.schema,
            cfg.channels,
            s.fidelity,
            s.total_charge,
        )?;
        let mut h: Vec<Vec<Option<NodeId>>> = (0..n)
            .map(|i| {
                let mut e = element_embed(&mut g, &self.params, zi[i]);
                if let Some(u) = uni {
                    e = g.add(&[e, u]);
                }
                let mut ranks = vec![None; cfg.l_max + 1];
                ranks[0] = Some(e);
                ranks
            })
            .collect();

        let inv_avg = 1.0 / self.stats.avg_neighbors.max(1e-12);
        let c = cfg.channels;
        let mut readout_terms: Vec<Vec<NodeId>> = vec![Vec::new(); n];

        for t in 0..cfg.layers {
            let lp = &self.plan.layers[t];
            let sizes = self.radial_sizes(t);
            // radial path weights per edge
            let rw: Vec<NodeId> = edge_rb
                .iter()
                .map(|&rb| mlp_node(&mut g, &self.params, &format!("layer{t}.radial"), &sizes, rb))
                .collect();

            // atomic basis
            let mut a_basis: Vec<Vec<NodeId>> = Vec::with_capacity(n);
            for i in 0..n {
                let mut a_ranks = Vec::with_capacity(cfg.l_max + 1);
                for nu3 in 0..=cfg.l_max {
                    let mut mixed_terms: Vec<NodeId> = Vec::new();
                    for &eidx in &lp.by_rank[nu3] {
                        let entry = &lp.entries[eidx];
                        let mut per_edge: Vec<NodeId> = Vec::new();
                        for &ei in &in_edges[i] {
                            let j = nl.edges[ei].1;
                            let Some(hj) = h[j][entry.nu1] else { continue };
                            let raw = g.bilinear(hj, edge_ang[ei][entry.nu2], entry.table.clone());
                            let raw = g.scale(raw, entry.variance);
                            let mut group_terms = Vec::with_capacity(entry.groups.len());
                            for (gi, group) in entry.groups.iter().enumerate() {
                                let comp = match group {
                                    Some(p) => g.project(raw, p.clone(), false),
                                    None => raw,
                                };
                                let slice = g.slice(rw[ei], (entry.radial_offset + gi) * c, c);
                                group_terms.push(g.channel_mul(comp, slice));
                            }
                            per_edge.push(g.add(&group_terms));
                        }
                        if per_edge.is_empty() {
                            continue;
                        }
                        let pooled = g.add(&per_edge);
                        let w = g.param(&self.params, &self.wz(&format!("layer{t}.A.r{nu3}.p{eidx}"), zi[i]));
                        mixed_terms.push(g.linear_mix(pooled, w, c, c, false));
                    }
                    let a = if mixed_terms.is_empty() {
                        g.constant(CartesianTensor::zeros(nu3, c))
                    } else {
                        let sum = g.add(&mixed_terms);
                        let proj = g.project(sum, self.plan.hwp[nu3].clone(), false);
                        g.scale(proj, inv_avg)
                    };
                    a_ranks.push(a);
                }

                // equivariant attribute terms on the rank-1 basis
                if let Some(f) = field_node {
                    let w = g.param(&self.params, &self.wz(&format!("layer{t}.field"), zi[i]));
                    a_ranks[1] = equivariant_embed(&mut g, a_ranks[1], f, w, self.stats.sigma_field, c);
                }
                if cfg.schema.magmoms {
                    let w = g.param(&self.params, &self.wz(&format!("layer{t}.mag"), zi[i]));
                    a_ranks[1] =
                        equivariant_embed(&mut g, a_ranks[1], magmom_nodes[i], w, self.stats.sigma_mag, c);
                }
                a_basis.push(a_ranks);
            }

            // product basis and message update
            for i in 0..n {
                let a = &a_basis[i];
                let mut bs: Vec<Vec<NodeId>> = vec![a.clone()];
                let mut cur = a.clone();
                for _ in 2..=cfg.correlation {
                    let mut next = Vec::with_capacity(cfg.l_max + 1);
                    for nu3 in 0..=cfg.l_max {
                        let mut terms = Vec::new();
                        for pe in &self.plan.prod {
                            if pe.nu3 != nu3 {
                                continue;
                            }
                            let raw = g.bilinear(cur[pe.nu1], a[pe.nu2], pe.table.clone());
                            terms.push(g.scale(raw, pe.variance));
                        }
                        let sum = g.add(&terms);
                        next.push(g.project(sum, self.plan.hwp[nu3].clone(), false));
                    }
                    bs.push(next.clone());
                    cur = next;
                }

                let mut h_new = Vec::with_capacity(cfg.l_max + 1);
                for nu in 0..=cfg.l_max {
                    let mut terms = Vec::new();
                    for (ni, b) in bs.iter().enumerate() {
                        let w = g.param(
                            &self.params,
                            &self.wz(&format!("layer{t}.msg.n{}.r{nu}", ni + 1), zi[i]),
                        );
                        terms.push(g.linear_mix(b[nu], w, c, c, false));
                    }
                    if self.residual_active(t) {
                        let w = g.param(&self.params, &self.wz(&format!("layer{t}.res.r{nu}"), zi[i]));
                        terms.push(g.linear_mix(a[nu], w, c, c, false));
                    }
                    h_new.push(Some(g.add(&terms)));
                }

                // readout of the layer's invariant features
                let h0 = h_new[0].unwrap();
                let r = if t + 1 < cfg.layers {
                    let w = g.param(&self.params, &format!("readout.t{t}"));
                    g.linear_mix(h0, w, c, 1, false)
                } else {
                    mlp_node(&mut g, &self.params, "readout.final", &[c, cfg.readout_hidden, 1], h0)
                };
                readout_terms[i].push(r);
                h[i] = h_new;
            }
        }

        let h_final: Vec<Vec<NodeId>> =
            h.iter().map(|ranks| ranks.iter().map(|r| r.unwrap()).collect()).collect();

        // site energies
        let uni_energy = uni.map(|u| {
            let w = g.param(&self.params, "uni.energy");
            let e = g.linear_mix(u, w, c, 1, false);
            g.scale(e, 1.0 / n as f64)
        });
        let mut site_energies = Vec::with_capacity(n);
        for i in 0..n {
            let mut terms = vec![g.param(&self.params, &format!("e_ele.z{}", zi[i]))];
            if let Some(u) = uni_energy {
                terms.push(u);
            }
            let res = g.add(&readout_terms[i]);
            terms.push(g.scale(res, self.stats.e_scale));
            site_energies.push(g.add(&terms));
        }

        // charge heads
        let (mut charges, mut chi, mut eta) = (Vec::new(), Vec::new(), Vec::new());
        match cfg.charge_head {
            ChargeHead::None => {}
            ChargeHead::Qeq => {
                for i in 0..n {
                    let wc = g.param(&self.params, "charge.chi");
                    let base = g.linear_mix(h_final[i][0], wc, c, 1, false);
                    let off = g.param(&self.params, &format!("charge.chi0.z{}", zi[i]));
                    chi.push(g.add(&[base, off]));
                    let we = g.param(&self.params, "charge.eta");
                    let raw = g.linear_mix(h_final[i][0], we, c, 1, false);
                    let off = g.param(&self.params, &format!("charge.eta0.z{}", zi[i]));
                    let pre = g.add(&[raw, off]);
                    eta.push(g.pointwise(pre, Func::SoftplusD(0)));
                }
                charges = qeq_nodes(&mut g, &chi, &eta, s.total_charge.unwrap_or(0.0));
            }
            ChargeHead::Direct => {
                let raw: Vec<NodeId> = (0..n)
                    .map(|i| {
                        let w = g.param(&self.params, "charge.direct");
                        let base = g.linear_mix(h_final[i][0], w, c, 1, false);
                        let off = g.param(&self.params, &format!("charge.q0.z{}", zi[i]));
                        g.add(&[base, off])
                    })
                    .collect();
                let total = g.add(&raw);
                let qt = g.scalar(s.total_charge.unwrap_or(0.0));
                let surplus = g.sub(total, qt);
                let correction = g.scale(surplus, -1.0 / n as f64);
                charges = raw.iter().map(|&q| g.add(&[q, correction])).collect();
            }
        }

        // latent charges and long-range energy
        let mut q_les = Vec::new();
        let mut e_lr = None;
        if cfg.les {
            for i in 0..n {
                let w = g.param(&self.params, "les.q");
                q_les.push(g.linear_mix(h_final[i][0], w, c, 1, false));
            }
            let e = if fully_periodic {
                les_periodic_node(&mut g, &positions, &q_les, &cell, &cfg.les_config)?
            } else {
                les_finite_node(&mut g, &positions, &q_les, &cfg.les_config)?
            };
            e_lr = Some(e);
        }

        let mut energy_terms = site_energies.clone();
        if let Some(e) = e_lr {
            energy_terms.push(e);
        }
        let energy = g.add(&energy_terms);

        // tensorial readouts
        let dipole = if cfg.l_max >= 1 {
            let parts: Vec<NodeId> = (0..n)
                .map(|i| {
                    let w = g.param(&self.params, "readout.dipole");
                    g.linear_mix(h_final[i][1], w, c, 1, false)
                })
                .collect();
            Some(g.add(&parts))
        } else {
            None
        };
        let alpha = if cfg.l_max >= 2 {
            let eye = g.constant(CartesianTensor::matrix(&identity));
            let parts: Vec<NodeId> = (0..n)
                .map(|i| {
                    let w0 = g.param(&self.params, "readout.alpha0");
                    let gamma = g.linear_mix(h_final[i][0], w0, c, 1, false);
                    let iso = g.channel_mul(eye, gamma);
                    let w2 = g.param(&self.params, "readout.alpha2");
                    let beta = g.linear_mix(h_final[i][2], w2, c, 1, false);
                    g.add(&[iso, beta])
                })
                .collect();
            Some(g.add(&parts))
        } else {
            None
        };

        Ok(Forward {
            graph: g,
            energy,
            site_energies,
            positions,
            edges: nl.edges,
            edge_vectors,
            field_node,
            magmom_nodes,
            h_final,
            q_les,
            e_lr,
            charges,
            chi,
            eta,
            dipole,
            alpha,
        })
    }
}

fn register_params(cfg: &ModelConfig, plan: &Plan, rng: &mut ChaCha8Rng) -> ParamStore {
    let mut store = ParamStore::new();
    let ns = cfg.species.len();
    let c = cfg.channels;
    register_embedding_params(&mut store, &cfg.schema, ns, c, rng);
    for zi in 0..ns {
        store.register(&format!("e_ele.z{zi}"), 1);
    }
    let species_variants = |coupled: bool| if coupled { ns } else { 1 };
    let name_z = |base: &str, zi: usize, coupled: bool| {
        if coupled {
            format!("{base}.z{zi}")
        } else {
            base.to_string()
        }
    };
    for (t, lp) in plan.layers.iter().enumerate() {
        let mut sizes = vec![cfg.radial.n_max];
        sizes.extend(&cfg.radial_mlp);
        sizes.push(lp.n_groups * c);
        register_mlp(&mut store, &format!("layer{t}.radial"), &sizes, rng);
        for (eidx, _) in lp.entries.iter().enumerate() {
            let nu3 = lp.entries[eidx].nu3;
            for zi in 0..species_variants(cfg.coupled) {
                store.register_normal(&name_z(&format!("layer{t}.A.r{nu3}.p{eidx}"), zi, cfg.coupled), c * c, c, rng);
            }
        }
        if cfg.schema.field {
            for zi in 0..species_variants(cfg.coupled) {
                store.register_normal(&name_z(&format!("layer{t}.field"), zi, cfg.coupled), c, 1, rng);
            }
        }
        if cfg.schema.magmoms {
            for zi in 0..species_variants(cfg.coupled) {
                store.register_normal(&name_z(&format!("layer{t}.mag"), zi, cfg.coupled), c, 1, rng);
            }
        }
        for ni in 1..=cfg.correlation {
            for nu in 0..=cfg.l_max {
                for zi in 0..species_variants(cfg.coupled) {
                    store.register_normal(&name_z(&format!("layer{t}.msg.n{ni}.r{nu}"), zi, cfg.coupled), c * c, c, rng);
                }
            }
        }
        let residual = t >= 1 || cfg.layers == 1;
        if residual {
            for nu in 0..=cfg.l_max {
                for zi in 0..species_variants(cfg.coupled) {
                    store.register_normal(&name_z(&format!("layer{t}.res.r{nu}"), zi, cfg.coupled), c * c, c, rng);
                }
            }
        }
    }
    for t in 0..cfg.layers.saturating_sub(1) {
        store.register(&format!("readout.t{t}"), c); // zero: baseline prediction at init
    }
    store.register_normal("readout.final.w0", c * cfg.readout_hidden, c, rng);
    store.register("readout.final.w1", cfg.readout_hidden); // zero final layer
    if cfg.l_max >= 1 {
        store.register_normal("readout.dipole", c, c, rng);
    }
    if cfg.l_max >= 2 {
        store.register_normal("readout.alpha0", c, c, rng);
        store.register_normal("readout.alpha2", c, c, rng);
    }
    match cfg.charge_head {
        ChargeHead::None => {}
        ChargeHead::Qeq => {
            store.register_normal("charge.chi", c, c, rng);
            store.register_normal("charge.eta", c, c, rng);
            for zi in 0..ns {
                store.register(&format!("charge.chi0.z{zi}"), 1);
                store.register_const(&format!("charge.eta0.z{zi}"), &[ETA0]);
            }
        }
        ChargeHead::Direct => {
            store.register_normal("charge.direct", c, c, rng);
            for zi in 0..ns {
                store.register(&format!("charge.q0.z{zi}"), 1);
            }
        }
    }
    if cfg.les {
        store.register_normal("les.q", c, c, rng);
    }
    store
}
