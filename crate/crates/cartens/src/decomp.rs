//! Irreducible Cartesian tensor decomposition.
//!
//! Projector matrices are built from the quadratic Casimir operator of the
//! rotation group acting on the rank-`nu` index space: eigenspaces of
//! `-sum_a (J_a)^2` with eigenvalue `l(l+1)` carry weight `l`. Multiplicity
//! copies are split by chunking the (deterministically ordered) eigenvector
//! basis into blocks of `2l+1`; only the multiplicity-summed weight
//! projectors are canonical.

use crate::error::{Error, Result};
use crate::tensor::{comps, flatten, unflatten, CartesianTensor, MAX_RANK};
use nalgebra::DMatrix;
use std::collections::BTreeMap;

#[derive(Clone, Debug)]
pub struct IrrepEntry {
    pub weight: usize,
    pub label: usize,
    pub projector: DMatrix<f64>,
}

#[derive(Clone, Debug)]
pub struct IrrepComponent {
    pub rank: usize,
    pub weight: usize,
    pub label: usize,
    pub data: CartesianTensor,
}

#[derive(Clone, Debug)]
pub struct DecompositionTable {
    max_rank: usize,
    /// `entries[nu]` lists `(l, q)` projectors in increasing `(l, q)` order.
    entries: Vec<Vec<IrrepEntry>>,
    /// `weight_projectors[nu][l]`: multiplicity-summed projector.
    weight_projectors: Vec<BTreeMap<usize, DMatrix<f64>>>,
}

/// The 3x3 antisymmetric rotation generators, `(J_a)_{bc} = -eps_{abc}`.
pub fn so3_generators() -> [DMatrix<f64>; 3] {
    let mut j = [
        DMatrix::zeros(3, 3),
        DMatrix::zeros(3, 3),
        DMatrix::zeros(3, 3),
    ];
    let eps = |a: usize, b: usize, c: usize| -> f64 {
        match (a, b, c) {
            (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
            (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
            _ => 0.0,
        }
    };
    for a in 0..3 {
        for b in 0..3 {
            for c in 0..3 {
                j[a][(b, c)] = -eps(a, b, c);
            }
        }
    }
    j
}

/// Generator `J_a` acting on the full rank-`nu` index space (Kronecker sum).
pub fn generator_on_rank(a: usize, rank: usize) -> DMatrix<f64> {
    let j3 = &so3_generators()[a];
    let n = comps(rank);
    let mut out = DMatrix::zeros(n, n);
    for axis in 0..rank {
        let stride = 3usize.pow((rank - 1 - axis) as u32);
        for m in 0..n {
            let i_axis = (m / stride) % 3;
            let base = m - i_axis * stride;
            for jdx in 0..3 {
                out[(m, base + jdx * stride)] += j3[(i_axis, jdx)];
            }
        }
    }
    out
}

fn casimir(rank: usize) -> DMatrix<f64> {
    let n = comps(rank);
    let mut c = DMatrix::zeros(n, n);
    for a in 0..3 {
        let j = generator_on_rank(a, rank);
        c += &j * &j;
    }
    -c
}

pub fn build_decomposition_table(max_rank: usize) -> Result<DecompositionTable> {
    if max_rank > MAX_RANK {
        return Err(Error::UnsupportedRank(max_rank, MAX_RANK));
    }
    let mut entries = Vec::with_capacity(max_rank + 1);
    let mut weight_projectors = Vec::with_capacity(max_rank + 1);
    for nu in 0..=max_rank {
        let n = comps(nu);
        let c = casimir(nu);
        let eig = c.symmetric_eigen();
        // group eigenvectors by eigenvalue l(l+1)
        let mut by_weight: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &lam) in eig.eigenvalues.iter().enumerate() {
            let l = (((1.0 + 4.0 * lam).max(0.0).sqrt() - 1.0) / 2.0).round() as usize;
            let expect = (l * (l + 1)) as f64;
            if (lam - expect).abs() > 1e-6 {
                return Err(Error::Numerical(format!(
                    "casimir eigenvalue {lam} at rank {nu} is not of the form l(l+1)"
                )));
            }
            by_weight.entry(l).or_default().push(i);
        }
        let mut nu_entries = Vec::new();
        let mut nu_weight_proj = BTreeMap::new();
        for (&l, cols) in &by_weight {
            let dim = 2 * l + 1;
            if cols.len() % dim != 0 {
                return Err(Error::Numerical(format!(
                    "weight-{l} eigenspace at rank {nu} has dimension {} not divisible by {dim}",
                    cols.len()
                )));
            }
            let mult = cols.len() / dim;
            // deterministic order: sort eigenvector columns by index
            let mut cols = cols.clone();
            cols.sort_unstable();
            let mut summed = DMatrix::zeros(n, n);
            for q in 0..mult {
                let mut p = DMatrix::zeros(n, n);
                for &col in &cols[q * dim..(q + 1) * dim] {
                    let v = eig.eigenvectors.column(col);
                    p += &v * v.transpose();
                }
                summed += &p;
                nu_entries.push(IrrepEntry { weight: l, label: q + 1, projector: p });
            }
            nu_weight_proj.insert(l, summed);
        }
        nu_entries.sort_by_key(|e| (e.weight, e.label));
        entries.push(nu_entries);
        weight_projectors.push(nu_weight_proj);
    }
    Ok(DecompositionTable { max_rank, entries, weight_projectors })
}

impl DecompositionTable {
    pub fn max_rank(&self) -> usize {
        self.max_rank
    }

    pub fn entries(&self, rank: usize) -> Result<&[IrrepEntry]> {
        self.entries
            .get(rank)
            .map(|v| v.as_slice())
            .ok_or(Error::UnsupportedRank(rank, self.max_rank))
    }

    pub fn weight_projector(&self, rank: usize, weight: usize) -> Option<&DMatrix<f64>> {
        self.weight_projectors.get(rank).and_then(|m| m.get(&weight))
    }

    /// Projector onto the fully symmetric traceless `(nu; nu; 1)` subspace.
    pub fn highest_weight_projector(&self, rank: usize) -> Result<&DMatrix<f64>> {
        self.weight_projector(rank, rank)
            .ok_or(Error::UnsupportedRank(rank, self.max_rank))
    }

    /// Split a tensor into its `(l, q)` irreducible components.
    pub fn decompose(&self, t: &CartesianTensor) -> Result<Vec<IrrepComponent>> {
        let entries = self.entries(t.rank)?;
        let n = t.comps();
        let mut out = Vec::with_capacity(entries.len());
        for e in entries {
            let mut data = CartesianTensor::zeros(t.rank, t.channels);
            for c in 0..t.channels {
                let src = t.channel(c);
                let dst = data.channel_mut(c);
                for row in 0..n {
                    let mut acc = 0.0;
                    for col in 0..n {
                        acc += e.projector[(row, col)] * src[col];
                    }
                    dst[row] = acc;
                }
            }
            out.push(IrrepComponent { rank: t.rank, weight: e.weight, label: e.label, data });
        }
        Ok(out)
    }

    /// Extract the highest-weight (fully symmetric, traceless) part.
    pub fn highest_weight_project(&self, t: &CartesianTensor) -> Result<CartesianTensor> {
        let p = self.highest_weight_projector(t.rank)?;
        let n = t.comps();
        let mut out = CartesianTensor::zeros(t.rank, t.channels);
        for c in 0..t.channels {
            let src = t.channel(c);
            let dst = out.channel_mut(c);
            for row in 0..n {
                let mut acc = 0.0;
                for col in 0..n {
                    acc += p[(row, col)] * src[col];
                }
                dst[row] = acc;
            }
        }
        Ok(out)
    }
}

/// Independent construction of the highest-weight projector: full index
/// symmetrization followed by removal of the trace-bearing subspace
/// (orthogonal projection away from the image of `sym(delta (x) .)`).
/// Used to cross-check the Casimir route.
pub fn highest_weight_projector_detrace(rank: usize) -> Result<DMatrix<f64>> {
    if rank > MAX_RANK {
        return Err(Error::UnsupportedRank(rank, MAX_RANK));
    }
    let n = comps(rank);
    let sym = symmetrizer(rank);
    if rank < 2 {
        return Ok(sym);
    }
    // D: rank-(nu-2) -> rank-nu, x |-> delta (x) x, then symmetrize
    let m = comps(rank - 2);
    let mut d = DMatrix::zeros(n, m);
    for col in 0..m {
        let xi = unflatten(rank - 2, col);
        for i in 0..3 {
            // delta_{ii} x_{...}
            let mut idx = [0usize; MAX_RANK * 2];
            idx[0] = i;
            idx[1] = i;
            idx[2..2 + rank - 2].copy_from_slice(&xi[..rank - 2]);
            d[(flatten(rank, &idx[..rank]), col)] += 1.0;
        }
    }
    let b = &sym * d;
    // orthogonal projector onto range(b) via SVD
    let svd = b.clone().svd(true, false);
    let u = svd.u.as_ref().expect("svd with u");
    let tol = 1e-10 * svd.singular_values.max();
    let mut pb = DMatrix::zeros(n, n);
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > tol {
            let ui = u.column(i);
            pb += &ui * ui.transpose();
        }
    }
    Ok(sym - pb)
}

fn symmetrizer(rank: usize) -> DMatrix<f64> {
    let n = comps(rank);
    let mut perms: Vec<Vec<usize>> = vec![vec![]];
    for i in 0..rank {
        let mut next = Vec::new();
        for p in &perms {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, i);
                next.push(q);
            }
        }
        perms = next;
    }
    let mut s = DMatrix::zeros(n, n);
    let w = 1.0 / perms.len() as f64;
    for m in 0..n {
        let idx = unflatten(rank, m);
        for p in &perms {
            let permuted: Vec<usize> = p.iter().map(|&ax| idx[ax]).collect();
            s[(m, flatten(rank, &permuted))] += w;
        }
    }
    s
}
