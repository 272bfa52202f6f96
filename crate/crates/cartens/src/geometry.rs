//! Structures, periodic boundary conditions, and neighbor lists.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

pub const CELL_DET_TOL: f64 = 1e-10;

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Structure {
    pub positions: Vec<[f64; 3]>,
    pub species: Vec<u32>,
    pub cell: Option<[[f64; 3]; 3]>,
    pub pbc: [bool; 3],
    pub charges: Option<Vec<f64>>,
    /// Magnetic moments, always stored as 3-vectors; collinear scalars are
    /// lifted to (0, 0, m) at ingest.
    pub magmoms: Option<Vec<[f64; 3]>>,
    pub total_charge: Option<f64>,
    pub external_field: Option<[f64; 3]>,
    pub fidelity: Option<i64>,
}

impl Structure {
    pub fn new(positions: Vec<[f64; 3]>, species: Vec<u32>) -> Self {
        assert_eq!(positions.len(), species.len());
        Structure { positions, species, ..Default::default() }
    }

    pub fn with_cell(mut self, cell: [[f64; 3]; 3], pbc: [bool; 3]) -> Self {
        self.cell = Some(cell);
        self.pbc = pbc;
        self
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn is_periodic(&self) -> bool {
        self.pbc.iter().any(|&p| p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.positions.len() != self.species.len() {
            return Err(Error::Shape("positions/species length mismatch".into()));
        }
        if self.species.iter().any(|&z| z == 0) {
            return Err(Error::Geometry("species must be positive integers".into()));
        }
        if self.is_periodic() {
            let cell = self.cell.ok_or_else(|| Error::InvalidCell("pbc set but no cell".into()))?;
            let d = det3(&cell);
            if d.abs() <= CELL_DET_TOL {
                return Err(Error::InvalidCell(format!("cell determinant {d:.3e} is singular")));
            }
        }
        Ok(())
    }

    pub fn volume(&self) -> Result<f64> {
        let cell = self.cell.ok_or_else(|| Error::InvalidCell("volume of a cell-free structure".into()))?;
        Ok(det3(&cell).abs())
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Labels {
    pub energy: Option<f64>,
    pub forces: Option<Vec<[f64; 3]>>,
    pub virial: Option<[[f64; 3]; 3]>,
    pub charges: Option<Vec<f64>>,
    /// eV/mu_B internally; reported in meV/mu_B at the interface.
    pub magnetic_forces: Option<Vec<[f64; 3]>>,
    pub dipole: Option<[f64; 3]>,
    pub polarizability: Option<[[f64; 3]; 3]>,
    pub enthalpy: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct LabeledFrame {
    pub structure: Structure,
    pub labels: Labels,
    /// Unrecognized extended-XYZ comment-line keys, preserved verbatim.
    pub extra_keys: Vec<(String, String)>,
}

impl LabeledFrame {
    pub fn validate(&self) -> Result<()> {
        self.structure.validate()?;
        let n = self.structure.len();
        if let Some(f) = &self.labels.forces {
            if f.len() != n {
                return Err(Error::Shape(format!("forces rows {} != atoms {}", f.len(), n)));
            }
        }
        if let Some(f) = &self.labels.magnetic_forces {
            if f.len() != n {
                return Err(Error::Shape(format!("magnetic force rows {} != atoms {}", f.len(), n)));
            }
        }
        if let Some(q) = &self.labels.charges {
            if q.len() != n {
                return Err(Error::Shape(format!("charge rows {} != atoms {}", q.len(), n)));
            }
        }
        Ok(())
    }

    /// Symmetrize the polarizability label in place, returning the norm of
    /// the discarded antisymmetric part.
    pub fn symmetrize_polarizability(&mut self) -> f64 {
        match &mut self.labels.polarizability {
            Some(a) => {
                let mut asym = 0.0;
                for i in 0..3 {
                    for j in (i + 1)..3 {
                        let d = 0.5 * (a[i][j] - a[j][i]);
                        asym += 2.0 * d * d;
                        let s = 0.5 * (a[i][j] + a[j][i]);
                        a[i][j] = s;
                        a[j][i] = s;
                    }
                }
                asym.sqrt()
            }
            None => 0.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NeighborList {
    /// Directed edges `(i, j, shift)`: neighbor position is
    /// `r_j + shift · cell`.
    pub edges: Vec<(usize, usize, [i32; 3])>,
    pub cutoff: f64,
    pub avg_neighbors: f64,
}

pub fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn norm(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// Shift position: r + n · cell with integer n (rows of `cell` are lattice
/// vectors).
pub fn shifted(r: [f64; 3], shift: [i32; 3], cell: &[[f64; 3]; 3]) -> [f64; 3] {
    let mut out = r;
    for k in 0..3 {
        for a in 0..3 {
            out[a] += shift[k] as f64 * cell[k][a];
        }
    }
    out
}

/// Integer shift bounds per axis so that every image within `cutoff` of the
/// home cell is enumerated: ceil(cutoff / h_k) with h_k the perpendicular
/// slab width along lattice vector k. Non-periodic axes get 0.
fn shift_bounds(cell: &[[f64; 3]; 3], pbc: [bool; 3], cutoff: f64) -> [i32; 3] {
    let vol = det3(cell).abs();
    let mut n = [0i32; 3];
    for k in 0..3 {
        if !pbc[k] {
            continue;
        }
        let area = norm(cross(cell[(k + 1) % 3], cell[(k + 2) % 3]));
        let h = vol / area;
        n[k] = (cutoff / h).ceil() as i32;
    }
    n
}

const BRUTE_FORCE_LIMIT: usize = 64;

pub fn build_neighbor_list(s: &Structure, cutoff: f64) -> Result<NeighborList> {
    if cutoff <= 0.0 {
        return Err(Error::Domain("cutoff must be positive".into()));
    }
    s.validate()?;
    let edges = if s.len() < BRUTE_FORCE_LIMIT {
        neighbor_edges_brute(s, cutoff)?
    } else {
        neighbor_edges_binned(s, cutoff)?
    };
    let avg = if s.is_empty() { 0.0 } else { edges.len() as f64 / s.len() as f64 };
    Ok(NeighborList { edges, cutoff, avg_neighbors: avg })
}

/// O(N² · images) reference search.
pub fn neighbor_edges_brute(s: &Structure, cutoff: f64) -> Result<Vec<(usize, usize, [i32; 3])>> {
    let identity = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let cell = s.cell.unwrap_or(identity);
    let bounds = if s.is_periodic() { shift_bounds(&cell, s.pbc, cutoff) } else { [0; 3] };
    let c2 = cutoff * cutoff;
    let mut edges = Vec::new();
    for i in 0..s.len() {
        for j in 0..s.len() {
            for n0 in -bounds[0]..=bounds[0] {
                for n1 in -bounds[1]..=bounds[1] {
                    for n2 in -bounds[2]..=bounds[2] {
                        let shift = [n0, n1, n2];
                        if i == j && shift == [0, 0, 0] {
                            continue;
                        }
                        let rj = shifted(s.positions[j], shift, &cell);
                        let d = [
                            rj[0] - s.positions[i][0],
                            rj[1] - s.positions[i][1],
                            rj[2] - s.positions[i][2],
                        ];
                        if d[0] * d[0] + d[1] * d[1] + d[2] * d[2] <= c2 {
                            edges.push((i, j, shift));
                        }
                    }
                }
            }
        }
    }
    Ok(edges)
}

/// Cell-list search: ghost images are binned on a grid with edge `cutoff`,
/// each atom then scans its bin and the 26 surrounding ones.
pub fn neighbor_edges_binned(s: &Structure, cutoff: f64) -> Result<Vec<(usize, usize, [i32; 3])>> {
    let identity = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let cell = s.cell.unwrap_or(identity);
    let bounds = if s.is_periodic() { shift_bounds(&cell, s.pbc, cutoff) } else { [0; 3] };

    // ghost = every (atom, shift) image that could fall within cutoff of a
    // real atom
    let mut ghosts: Vec<(usize, [i32; 3], [f64; 3])> = Vec::new();
    for j in 0..s.len() {
        for n0 in -bounds[0]..=bounds[0] {
            for n1 in -bounds[1]..=bounds[1] {
                for n2 in -bounds[2]..=bounds[2] {
                    let shift = [n0, n1, n2];
                    ghosts.push((j, shift, shifted(s.positions[j], shift, &cell)));
                }
            }
        }
    }

    let mut lo = [f64::INFINITY; 3];
    for p in &s.positions {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
        }
    }
    let bin_of = |r: &[f64; 3]| -> [i64; 3] {
        let mut b = [0i64; 3];
        for a in 0..3 {
            b[a] = ((r[a] - lo[a]) / cutoff).floor() as i64;
        }
        b
    };
    let mut bins: std::collections::HashMap<[i64; 3], Vec<usize>> = std::collections::HashMap::new();
    for (gi, g) in ghosts.iter().enumerate() {
        bins.entry(bin_of(&g.2)).or_default().push(gi);
    }

    let c2 = cutoff * cutoff;
    let mut edges = Vec::new();
    for i in 0..s.len() {
        let b = bin_of(&s.positions[i]);
        for d0 in -1..=1i64 {
            for d1 in -1..=1i64 {
                for d2 in -1..=1i64 {
                    let key = [b[0] + d0, b[1] + d1, b[2] + d2];
                    let Some(cands) = bins.get(&key) else { continue };
                    for &gi in cands {
                        let (j, shift, rj) = ghosts[gi];
                        if i == j && shift == [0, 0, 0] {
                            continue;
                        }
                        let d = [
                            rj[0] - s.positions[i][0],
                            rj[1] - s.positions[i][1],
                            rj[2] - s.positions[i][2],
                        ];
                        if d[0] * d[0] + d[1] * d[1] + d[2] * d[2] <= c2 {
                            edges.push((i, j, shift));
                        }
                    }
                }
            }
        }
    }
    Ok(edges)
}

/// Edge displacement vector r_j + shift·cell - r_i.
pub fn edge_vector(s: &Structure, edge: &(usize, usize, [i32; 3])) -> [f64; 3] {
    let identity = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let cell = s.cell.unwrap_or(identity);
    let rj = shifted(s.positions[edge.1], edge.2, &cell);
    let ri = s.positions[edge.0];
    [rj[0] - ri[0], rj[1] - ri[1], rj[2] - ri[2]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn edge_set(edges: &[(usize, usize, [i32; 3])]) -> BTreeSet<(usize, usize, [i32; 3])> {
        edges.iter().copied().collect()
    }

    #[test]
    fn two_atoms_within_cutoff() {
        let s = Structure::new(vec![[0.0; 3], [3.0, 0.0, 0.0]], vec![1, 1]);
        let nl = build_neighbor_list(&s, 5.0).unwrap();
        assert_eq!(nl.edges.len(), 2);
        assert!((nl.avg_neighbors - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_atoms_beyond_cutoff() {
        let s = Structure::new(vec![[0.0; 3], [6.0, 0.0, 0.0]], vec![1, 1]);
        let nl = build_neighbor_list(&s, 5.0).unwrap();
        assert!(nl.edges.is_empty());
    }

    #[test]
    fn single_atom_periodic_images_match_shift_enumeration() {
        let cell = [[2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 2.0]];
        let s = Structure::new(vec![[0.5, 0.5, 0.5]], vec![1]).with_cell(cell, [true; 3]);
        let nl = build_neighbor_list(&s, 5.0).unwrap();
        // oracle: direct enumeration over |n| <= 3
        let mut count = 0;
        for n0 in -3..=3i32 {
            for n1 in -3..=3i32 {
                for n2 in -3..=3i32 {
                    if (n0, n1, n2) == (0, 0, 0) {
                        continue;
                    }
                    let d2 = (2.0 * n0 as f64).powi(2) + (2.0 * n1 as f64).powi(2) + (2.0 * n2 as f64).powi(2);
                    if d2 <= 25.0 {
                        count += 1;
                    }
                }
            }
        }
        assert_eq!(nl.edges.len(), count);
        for e in &nl.edges {
            let d = edge_vector(&s, e);
            assert!(norm(d) <= 5.0 + 1e-12);
        }
    }

    #[test]
    fn pbc_without_cell_is_an_error() {
        let mut s = Structure::new(vec![[0.0; 3]], vec![1]);
        s.pbc = [true, false, false];
        assert!(matches!(build_neighbor_list(&s, 3.0), Err(Error::InvalidCell(_))));
    }

    #[test]
    fn singular_cell_is_an_error() {
        let cell = [[1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        let s = Structure::new(vec![[0.0; 3]], vec![1]).with_cell(cell, [true; 3]);
        assert!(matches!(build_neighbor_list(&s, 3.0), Err(Error::InvalidCell(_))));
    }

    #[test]
    fn binned_matches_brute_force_on_random_structures() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for case in 0..50 {
            let n = rng.gen_range(1..=16);
            let periodic = case % 2 == 0;
            let mut s = Structure::new(
                (0..n)
                    .map(|_| [rng.gen::<f64>() * 6.0, rng.gen::<f64>() * 6.0, rng.gen::<f64>() * 6.0])
                    .collect(),
                vec![1; n],
            );
            if periodic {
                // random cell, retried until comfortably non-singular
                let cell = loop {
                    let c: [[f64; 3]; 3] = [
                        [4.0 + rng.gen::<f64>() * 3.0, rng.gen::<f64>(), rng.gen::<f64>()],
                        [rng.gen::<f64>(), 4.0 + rng.gen::<f64>() * 3.0, rng.gen::<f64>()],
                        [rng.gen::<f64>(), rng.gen::<f64>(), 4.0 + rng.gen::<f64>() * 3.0],
                    ];
                    if det3(&c).abs() > 1.0 {
                        break c;
                    }
                };
                s = s.with_cell(cell, [true, true, case % 4 != 0]);
            }
            let cutoff = 2.0 + rng.gen::<f64>() * 3.0;
            let brute = neighbor_edges_brute(&s, cutoff).unwrap();
            let binned = neighbor_edges_binned(&s, cutoff).unwrap();
            assert_eq!(edge_set(&brute), edge_set(&binned), "case {case}");
        }
    }

    #[test]
    fn binned_matches_brute_force_large() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 90;
        let cell = [[9.0, 0.3, 0.0], [0.0, 8.5, 0.2], [0.1, 0.0, 9.5]];
        let s = Structure::new(
            (0..n)
                .map(|_| [rng.gen::<f64>() * 9.0, rng.gen::<f64>() * 8.5, rng.gen::<f64>() * 9.5])
                .collect(),
            vec![1; n],
        )
        .with_cell(cell, [true; 3]);
        let nl = build_neighbor_list(&s, 3.5).unwrap(); // takes the binned path
        let brute = neighbor_edges_brute(&s, 3.5).unwrap();
        assert_eq!(edge_set(&nl.edges), edge_set(&brute));
    }

    #[test]
    fn directed_edges_come_in_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = Structure::new(
            (0..10).map(|_| [rng.gen::<f64>() * 5.0, rng.gen::<f64>() * 5.0, rng.gen::<f64>() * 5.0]).collect(),
            vec![1; 10],
        );
        let nl = build_neighbor_list(&s, 3.0).unwrap();
        let set = edge_set(&nl.edges);
        for &(i, j, sh) in &set {
            assert!(set.contains(&(j, i, [-sh[0], -sh[1], -sh[2]])));
        }
    }

    #[test]
    fn lattice_translation_preserves_edge_distances() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cell = [[5.0, 0.0, 0.0], [1.0, 5.0, 0.0], [0.0, 0.5, 5.0]];
        let pos: Vec<[f64; 3]> =
            (0..8).map(|_| [rng.gen::<f64>() * 5.0, rng.gen::<f64>() * 5.0, rng.gen::<f64>() * 5.0]).collect();
        let s1 = Structure::new(pos.clone(), vec![1; 8]).with_cell(cell, [true; 3]);
        let shifted_pos: Vec<[f64; 3]> =
            pos.iter().map(|p| [p[0] + cell[1][0], p[1] + cell[1][1], p[2] + cell[1][2]]).collect();
        let s2 = Structure::new(shifted_pos, vec![1; 8]).with_cell(cell, [true; 3]);
        let nl1 = build_neighbor_list(&s1, 4.0).unwrap();
        let nl2 = build_neighbor_list(&s2, 4.0).unwrap();
        let mut d1: Vec<(usize, usize, i64)> = nl1
            .edges
            .iter()
            .map(|e| (e.0, e.1, (norm(edge_vector(&s1, e)) * 1e10).round() as i64))
            .collect();
        let mut d2: Vec<(usize, usize, i64)> = nl2
            .edges
            .iter()
            .map(|e| (e.0, e.1, (norm(edge_vector(&s2, e)) * 1e10).round() as i64))
            .collect();
        d1.sort_unstable();
        d2.sort_unstable();
        assert_eq!(d1, d2);
    }

    #[test]
    fn polarizability_symmetrized_on_ingest() {
        let mut f = LabeledFrame {
            structure: Structure::new(vec![[0.0; 3]], vec![1]),
            labels: Labels {
                polarizability: Some([[1.0, 0.5, 0.0], [0.3, 2.0, 0.0], [0.0, 0.0, 3.0]]),
                ..Default::default()
            },
            extra_keys: vec![],
        };
        let asym = f.symmetrize_polarizability();
        let a = f.labels.polarizability.unwrap();
        assert_eq!(a[0][1], 0.4);
        assert_eq!(a[1][0], 0.4);
        assert!((asym - (2.0f64 * 0.1 * 0.1).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn label_shape_validation() {
        let f = LabeledFrame {
            structure: Structure::new(vec![[0.0; 3], [1.0, 0.0, 0.0]], vec![1, 1]),
            labels: Labels { forces: Some(vec![[0.0; 3]]), ..Default::default() },
            extra_keys: vec![],
        };
        assert!(f.validate().is_err());
    }
}
