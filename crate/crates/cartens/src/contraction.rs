//! Tensor contraction with explicit contraction paths.
//!
//! A path pairs `k` indices of the first tensor with `k` indices of the
//! second; the output rank is `nu1 + nu2 - 2k`. Free indices of the first
//! tensor come first in the output, followed by the free indices of the
//! second.

use crate::error::{Error, Result};
use crate::tensor::{comps, flatten, unflatten, CartesianTensor, MAX_RANK};
use std::sync::Arc;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContractionPath {
    pub nu1: usize,
    pub nu2: usize,
    pub k: usize,
    /// `pairing[m] = (i, j)` contracts index `i` of the first tensor with
    /// index `j` of the second.
    pub pairing: Vec<(usize, usize)>,
}

impl ContractionPath {
    pub fn out_rank(&self) -> usize {
        self.nu1 + self.nu2 - 2 * self.k
    }

    /// The canonical path: the last `k` indices of the first tensor paired in
    /// order with the first `k` of the second, matching the element-wise
    /// contraction formula.
    pub fn canonical(nu1: usize, nu2: usize, nu3: usize) -> Result<Self> {
        let k = admissible_k(nu1, nu2, nu3)?;
        let pairing = (0..k).map(|m| (nu1 - k + m, m)).collect();
        Ok(ContractionPath { nu1, nu2, k, pairing })
    }
}

/// Number of contracted index pairs implied by `(nu1, nu2, nu3)`.
pub fn admissible_k(nu1: usize, nu2: usize, nu3: usize) -> Result<usize> {
    if nu3 > nu1 + nu2 || (nu1 + nu2 - nu3) % 2 != 0 {
        return Err(Error::InvalidSignature(nu1, nu2, nu3));
    }
    let k = (nu1 + nu2 - nu3) / 2;
    if k > nu1.min(nu2) {
        return Err(Error::InvalidSignature(nu1, nu2, nu3));
    }
    Ok(k)
}

/// Path selection policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum PathMode {
    /// One canonical path per `(nu1, nu2, nu3)`.
    Single,
    /// Every distinct pairing.
    All,
}

/// Enumerate contraction paths for the rank signature `(nu1, nu2, nu3)`.
///
/// In `All` mode the count is `C(nu1,k) * C(nu2,k) * k!`.
pub fn enumerate_paths(nu1: usize, nu2: usize, nu3: usize, mode: PathMode) -> Result<Vec<ContractionPath>> {
    let k = admissible_k(nu1, nu2, nu3)?;
    match mode {
        PathMode::Single => Ok(vec![ContractionPath::canonical(nu1, nu2, nu3)?]),
        PathMode::All => {
            let lhs_sets = combinations(nu1, k);
            let rhs_sets = combinations(nu2, k);
            let perms = permutations(k);
            let mut paths = Vec::new();
            for ls in &lhs_sets {
                for rs in &rhs_sets {
                    for p in &perms {
                        let pairing = (0..k).map(|m| (ls[m], rs[p[m]])).collect();
                        paths.push(ContractionPath { nu1, nu2, k, pairing });
                    }
                }
            }
            Ok(paths)
        }
    }
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    let sub = permutations(k - 1);
    for s in &sub {
        for pos in 0..k {
            let mut p = s.clone();
            p.insert(pos, k - 1);
            out.push(p);
        }
    }
    out
}

/// Precomputed sparse kernel for one contraction path:
/// `out[o] += a[ia] * b[ib]` over all triples.
#[derive(Debug)]
pub struct TripleTable {
    pub rank_out: usize,
    pub rank_a: usize,
    pub rank_b: usize,
    pub triples: Vec<(u32, u32, u32)>,
}

impl TripleTable {
    pub fn from_path(path: &ContractionPath) -> Arc<TripleTable> {
        let (nu1, nu2, k) = (path.nu1, path.nu2, path.k);
        let rank_out = path.out_rank();
        let free1: Vec<usize> = (0..nu1).filter(|i| !path.pairing.iter().any(|&(a, _)| a == *i)).collect();
        let free2: Vec<usize> = (0..nu2).filter(|j| !path.pairing.iter().any(|&(_, b)| b == *j)).collect();
        let mut triples = Vec::with_capacity(comps(rank_out) * comps(k));
        let mut ia_idx = [0usize; MAX_RANK * 2];
        let mut ib_idx = [0usize; MAX_RANK * 2];
        for o in 0..comps(rank_out) {
            let oi = unflatten(rank_out, o);
            for s in 0..comps(k) {
                let si = unflatten(k, s);
                for (m, &f) in free1.iter().enumerate() {
                    ia_idx[f] = oi[m];
                }
                for (m, &f) in free2.iter().enumerate() {
                    ib_idx[f] = oi[free1.len() + m];
                }
                for (m, &(pa, pb)) in path.pairing.iter().enumerate() {
                    ia_idx[pa] = si[m];
                    ib_idx[pb] = si[m];
                }
                let ia = flatten(nu1, &ia_idx[..nu1]);
                let ib = flatten(nu2, &ib_idx[..nu2]);
                triples.push((o as u32, ia as u32, ib as u32));
            }
        }
        Arc::new(TripleTable { rank_out, rank_a: nu1, rank_b: nu2, triples })
    }

    /// Kernel for the adjoint with respect to the first input:
    /// `da[ia] += g[o] * b[ib]`.
    pub fn vjp_a(&self) -> Arc<TripleTable> {
        Arc::new(TripleTable {
            rank_out: self.rank_a,
            rank_a: self.rank_out,
            rank_b: self.rank_b,
            triples: self.triples.iter().map(|&(o, a, b)| (a, o, b)).collect(),
        })
    }

    /// Kernel for the adjoint with respect to the second input:
    /// `db[ib] += g[o] * a[ia]`.
    pub fn vjp_b(&self) -> Arc<TripleTable> {
        Arc::new(TripleTable {
            rank_out: self.rank_b,
            rank_a: self.rank_out,
            rank_b: self.rank_a,
            triples: self.triples.iter().map(|&(o, a, b)| (b, o, a)).collect(),
        })
    }
}

/// Contract two tensors along the given path (channel-wise; a single-channel
/// input broadcasts against a multi-channel one).
pub fn contract(t1: &CartesianTensor, t2: &CartesianTensor, path: &ContractionPath) -> Result<CartesianTensor> {
    if t1.rank != path.nu1 || t2.rank != path.nu2 {
        return Err(Error::Shape(format!(
            "path expects ranks ({}, {}), got ({}, {})",
            path.nu1, path.nu2, t1.rank, t2.rank
        )));
    }
    if t1.channels != t2.channels && t1.channels != 1 && t2.channels != 1 {
        return Err(Error::Shape(format!(
            "channel mismatch: {} vs {}",
            t1.channels, t2.channels
        )));
    }
    let table = TripleTable::from_path(path);
    Ok(apply_triples(&table, t1, t2))
}

pub fn apply_triples(table: &TripleTable, a: &CartesianTensor, b: &CartesianTensor) -> CartesianTensor {
    let channels = a.channels.max(b.channels);
    let mut out = CartesianTensor::zeros(table.rank_out, channels);
    let (na, nb, no) = (comps(table.rank_a), comps(table.rank_b), comps(table.rank_out));
    for c in 0..channels {
        let ca = if a.channels == 1 { 0 } else { c };
        let cb = if b.channels == 1 { 0 } else { c };
        let av = &a.data[ca * na..(ca + 1) * na];
        let bv = &b.data[cb * nb..(cb + 1) * nb];
        let ov = &mut out.data[c * no..(c + 1) * no];
        for &(o, ia, ib) in &table.triples {
            ov[o as usize] += av[ia as usize] * bv[ib as usize];
        }
    }
    out
}
