//! Dense Cartesian tensors with a channel axis.
//!
//! A rank-`nu` tensor has `3^nu` components per channel, stored flat in
//! row-major index order (the first index is the slowest). Rank-0 tensors are
//! plain per-channel scalars, which is how scalar features and radial weights
//! travel through the engine.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Hard cap on tensor rank for this build.
pub const MAX_RANK: usize = 4;

/// `3^nu`.
pub fn comps(rank: usize) -> usize {
    3usize.pow(rank as u32)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CartesianTensor {
    pub rank: usize,
    pub channels: usize,
    /// Layout: `data[c * 3^rank + m]`.
    pub data: Vec<f64>,
}

impl CartesianTensor {
    pub fn zeros(rank: usize, channels: usize) -> Self {
        CartesianTensor {
            rank,
            channels,
            data: vec![0.0; channels * comps(rank)],
        }
    }

    pub fn from_data(rank: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * comps(rank) {
            return Err(Error::Shape(format!(
                "rank-{rank} tensor with {channels} channels needs {} values, got {}",
                channels * comps(rank),
                data.len()
            )));
        }
        Ok(CartesianTensor { rank, channels, data })
    }

    /// Single-channel scalar.
    pub fn scalar(x: f64) -> Self {
        CartesianTensor { rank: 0, channels: 1, data: vec![x] }
    }

    /// Single-channel vector.
    pub fn vector(v: [f64; 3]) -> Self {
        CartesianTensor { rank: 1, channels: 1, data: v.to_vec() }
    }

    /// Single-channel rank-2 tensor from a row-major 3x3 matrix.
    pub fn matrix(m: &[[f64; 3]; 3]) -> Self {
        let mut data = Vec::with_capacity(9);
        for row in m {
            data.extend_from_slice(row);
        }
        CartesianTensor { rank: 2, channels: 1, data }
    }

    pub fn comps(&self) -> usize {
        comps(self.rank)
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.comps();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.comps();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |a, x| a.max(x.abs()))
    }

    pub fn scaled(&self, k: f64) -> Self {
        CartesianTensor {
            rank: self.rank,
            channels: self.channels,
            data: self.data.iter().map(|x| k * x).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Apply a rotation (or improper rotation) `r` to every tensor index of
    /// every channel. `r` acts as `T'_{i1..in} = r_{i1 j1} .. r_{in jn} T_{j1..jn}`.
    pub fn rotated(&self, r: &[[f64; 3]; 3]) -> Self {
        let mut out = self.clone();
        // rotate one index at a time
        for axis in 0..self.rank {
            let src = out.data.clone();
            let n = self.comps();
            let stride = 3usize.pow((self.rank - 1 - axis) as u32);
            for c in 0..self.channels {
                for m in 0..n {
                    let idx_axis = (m / stride) % 3;
                    let base = m - idx_axis * stride;
                    let mut acc = 0.0;
                    for j in 0..3 {
                        acc += r[idx_axis][j] * src[c * n + base + j * stride];
                    }
                    out.data[c * n + m] = acc;
                }
            }
        }
        out
    }
}

/// Decode a flat component index into per-axis indices (first axis slowest).
pub fn unflatten(rank: usize, mut m: usize) -> [usize; MAX_RANK * 2] {
    let mut idx = [0usize; MAX_RANK * 2];
    for axis in (0..rank).rev() {
        idx[axis] = m % 3;
        m /= 3;
    }
    idx
}

/// Inverse of [`unflatten`].
pub fn flatten(rank: usize, idx: &[usize]) -> usize {
    let mut m = 0;
    for axis in 0..rank {
        m = m * 3 + idx[axis];
    }
    m
}
