//! Reverse-mode gradient engine.
//!
//! The engine records every operation on an eager graph of tensor-valued
//! nodes: values are computed at node creation, and the node list doubles as
//! the tape. `grad` walks the tape in reverse and *builds new nodes* for the
//! adjoints, so derivatives are themselves differentiable. That is what makes
//! training on forces (a gradient-of-gradient objective) exact.
//!
//! The op set is deliberately small and closed under differentiation; every
//! adjoint rule is a composition of ops from the same set.

use crate::contraction::{apply_triples, TripleTable};
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::{comps, CartesianTensor};
use nalgebra::DMatrix;
use std::sync::Arc;

pub type NodeId = usize;

/// Pointwise scalar functions (rank-0 nodes only).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Func {
    /// k-th derivative of SiLU (x * sigmoid(x)); k in 0..=3.
    SiluD(u8),
    /// k-th derivative of softplus ln(1 + e^x); k in 0..=3.
    SoftplusD(u8),
    Sin,
    Cos,
    Exp,
    Sqrt,
    /// x^n for integer n (negative n requires nonzero input).
    PowInt(i32),
    Erf,
}

impl Func {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Func::SiluD(k) => {
                let s = sigmoid(x);
                let s1 = s * (1.0 - s);
                let s2 = s1 * (1.0 - 2.0 * s);
                let s3 = s2 * (1.0 - 2.0 * s) - 2.0 * s1 * s1;
                match k {
                    0 => x * s,
                    1 => s + x * s1,
                    2 => 2.0 * s1 + x * s2,
                    3 => 3.0 * s2 + x * s3,
                    _ => unreachable!("silu derivative order"),
                }
            }
            Func::SoftplusD(k) => match k {
                0 => {
                    // numerically stable ln(1+e^x)
                    if x > 30.0 {
                        x
                    } else {
                        x.exp().ln_1p()
                    }
                }
                1 => sigmoid(x),
                2 => {
                    let s = sigmoid(x);
                    s * (1.0 - s)
                }
                3 => {
                    let s = sigmoid(x);
                    s * (1.0 - s) * (1.0 - 2.0 * s)
                }
                _ => unreachable!("softplus derivative order"),
            },
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Exp => x.exp(),
            Func::Sqrt => x.sqrt(),
            Func::PowInt(n) => x.powi(n),
            Func::Erf => crate::math::erf(x),
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Per-channel projector matrix (with its transpose, for adjoints).
#[derive(Debug)]
pub struct Projector {
    pub fwd: DMatrix<f64>,
    pub adj: DMatrix<f64>,
}

impl Projector {
    pub fn new(m: DMatrix<f64>) -> Arc<Self> {
        let adj = m.transpose();
        Arc::new(Projector { fwd: m, adj })
    }
}

#[derive(Clone, Debug)]
enum Op {
    /// Constant or external input; not differentiated into.
    Leaf,
    /// Parameter slice at `offset` in the parameter store.
    Param,
    AddN,
    Scale(f64),
    Bilinear(Arc<TripleTable>),
    /// inputs `[x, w]`; `w` is rank-0 with `rows*cols` channels, row-major.
    LinearMix { rows: usize, cols: usize, transpose: bool },
    /// inputs `[a, b]`; out rank-0, `ca*cb` channels: `out[i*cb+j] = sum_m a[i,m] b[j,m]`.
    ChannelDot { ca: usize, cb: usize },
    /// inputs `[x, s]`; per-channel scalar multiply (`s` may have 1 channel).
    ChannelMul,
    /// inputs `[x, y]` of equal shape; `out[c] = sum_m x[c,m] y[c,m]`.
    DiagDot,
    Project { p: Arc<Projector>, transpose: bool },
    Concat,
    Slice { start: usize, len: usize },
    SumChannels,
    Broadcast,
    Pointwise(Func),
}

struct Node {
    op: Op,
    inputs: Vec<NodeId>,
    value: CartesianTensor,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    /// `(node, offset, len)` for every parameter node, in creation order.
    params: Vec<(NodeId, usize, usize)>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &CartesianTensor {
        &self.nodes[id].value
    }

    pub fn scalar_value(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.nodes[id].value.data.len(), 1);
        self.nodes[id].value.data[0]
    }

    fn push(&mut self, op: Op, inputs: Vec<NodeId>, value: CartesianTensor) -> NodeId {
        self.nodes.push(Node { op, inputs, value });
        self.nodes.len() - 1
    }

    pub fn constant(&mut self, value: CartesianTensor) -> NodeId {
        self.push(Op::Leaf, vec![], value)
    }

    pub fn scalar(&mut self, x: f64) -> NodeId {
        self.constant(CartesianTensor::scalar(x))
    }

    /// Leaf that participates in differentiation (positions, fields, moments).
    pub fn input(&mut self, value: CartesianTensor) -> NodeId {
        self.push(Op::Leaf, vec![], value)
    }

    pub fn param(&mut self, store: &ParamStore, name: &str) -> NodeId {
        let (offset, len) = store.slice_info(name);
        let value = CartesianTensor {
            rank: 0,
            channels: len,
            data: store.data[offset..offset + len].to_vec(),
        };
        let id = self.push(Op::Param, vec![], value);
        self.params.push((id, offset, len));
        id
    }

    pub fn add(&mut self, terms: &[NodeId]) -> NodeId {
        assert!(!terms.is_empty());
        if terms.len() == 1 {
            return terms[0];
        }
        let mut value = self.nodes[terms[0]].value.clone();
        for &t in &terms[1..] {
            let v = &self.nodes[t].value;
            assert_eq!(value.rank, v.rank, "add rank mismatch");
            assert_eq!(value.channels, v.channels, "add channel mismatch");
            value.add_assign(v);
        }
        self.push(Op::AddN, terms.to_vec(), value)
    }

    pub fn scale(&mut self, x: NodeId, k: f64) -> NodeId {
        let value = self.nodes[x].value.scaled(k);
        self.push(Op::Scale(k), vec![x], value)
    }

    pub fn bilinear(&mut self, a: NodeId, b: NodeId, table: Arc<TripleTable>) -> NodeId {
        let value = apply_triples(&table, &self.nodes[a].value, &self.nodes[b].value);
        self.push(Op::Bilinear(table), vec![a, b], value)
    }

    pub fn linear_mix(&mut self, x: NodeId, w: NodeId, rows: usize, cols: usize, transpose: bool) -> NodeId {
        let xv = &self.nodes[x].value;
        let wv = &self.nodes[w].value;
        assert_eq!(wv.rank, 0);
        assert_eq!(wv.channels, rows * cols, "weight channel count");
        let (cin, cout) = if transpose { (cols, rows) } else { (rows, cols) };
        assert_eq!(xv.channels, cin, "linear_mix input channels");
        let n = xv.comps();
        let mut value = CartesianTensor::zeros(xv.rank, cout);
        for co in 0..cout {
            for ci in 0..cin {
                let wij = if transpose { wv.data[co * cols + ci] } else { wv.data[ci * cols + co] };
                if wij == 0.0 {
                    continue;
                }
                for m in 0..n {
                    value.data[co * n + m] += wij * xv.data[ci * n + m];
                }
            }
        }
        self.push(Op::LinearMix { rows, cols, transpose }, vec![x, w], value)
    }

    pub fn channel_dot(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let av = &self.nodes[a].value;
        let bv = &self.nodes[b].value;
        assert_eq!(av.rank, bv.rank, "channel_dot rank mismatch");
        let (ca, cb, n) = (av.channels, bv.channels, av.comps());
        let mut value = CartesianTensor::zeros(0, ca * cb);
        for i in 0..ca {
            for j in 0..cb {
                let mut acc = 0.0;
                for m in 0..n {
                    acc += av.data[i * n + m] * bv.data[j * n + m];
                }
                value.data[i * cb + j] = acc;
            }
        }
        self.push(Op::ChannelDot { ca, cb }, vec![a, b], value)
    }

    pub fn channel_mul(&mut self, x: NodeId, s: NodeId) -> NodeId {
        let xv = &self.nodes[x].value;
        let sv = &self.nodes[s].value;
        assert_eq!(sv.rank, 0, "channel_mul scale must be rank 0");
        assert!(
            sv.channels == xv.channels || sv.channels == 1 || xv.channels == 1,
            "channel_mul channel mismatch: {} vs {}",
            xv.channels,
            sv.channels
        );
        let channels = xv.channels.max(sv.channels);
        let n = xv.comps();
        let mut value = CartesianTensor::zeros(xv.rank, channels);
        for c in 0..channels {
            let sc = if sv.channels == 1 { sv.data[0] } else { sv.data[c] };
            let xc = if xv.channels == 1 { 0 } else { c };
            for m in 0..n {
                value.data[c * n + m] = sc * xv.data[xc * n + m];
            }
        }
        self.push(Op::ChannelMul, vec![x, s], value)
    }

    pub fn diag_dot(&mut self, x: NodeId, y: NodeId) -> NodeId {
        let xv = &self.nodes[x].value;
        let yv = &self.nodes[y].value;
        assert_eq!(xv.rank, yv.rank);
        assert_eq!(xv.channels, yv.channels);
        let n = xv.comps();
        let mut value = CartesianTensor::zeros(0, xv.channels);
        for c in 0..xv.channels {
            let mut acc = 0.0;
            for m in 0..n {
                acc += xv.data[c * n + m] * yv.data[c * n + m];
            }
            value.data[c] = acc;
        }
        self.push(Op::DiagDot, vec![x, y], value)
    }

    pub fn project(&mut self, x: NodeId, p: Arc<Projector>, transpose: bool) -> NodeId {
        let xv = &self.nodes[x].value;
        let m = if transpose { &p.adj } else { &p.fwd };
        let n = xv.comps();
        assert_eq!(m.ncols(), n, "projector size");
        let mut value = CartesianTensor::zeros(xv.rank, xv.channels);
        for c in 0..xv.channels {
            for row in 0..n {
                let mut acc = 0.0;
                for col in 0..n {
                    acc += m[(row, col)] * xv.data[c * n + col];
                }
                value.data[c * n + row] = acc;
            }
        }
        self.push(Op::Project { p, transpose }, vec![x], value)
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let rank = self.nodes[parts[0]].value.rank;
        let n = comps(rank);
        let channels: usize = parts.iter().map(|&p| self.nodes[p].value.channels).sum();
        let mut value = CartesianTensor::zeros(rank, channels);
        let mut at = 0;
        for &p in parts {
            let v = &self.nodes[p].value;
            assert_eq!(v.rank, rank, "concat rank mismatch");
            value.data[at..at + v.data.len()].copy_from_slice(&v.data);
            at += v.data.len();
        }
        let _ = n;
        self.push(Op::Concat, parts.to_vec(), value)
    }

    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let xv = &self.nodes[x].value;
        let n = xv.comps();
        assert!(start + len <= xv.channels);
        let value = CartesianTensor {
            rank: xv.rank,
            channels: len,
            data: xv.data[start * n..(start + len) * n].to_vec(),
        };
        self.push(Op::Slice { start, len }, vec![x], value)
    }

    pub fn sum_channels(&mut self, x: NodeId) -> NodeId {
        let xv = &self.nodes[x].value;
        let n = xv.comps();
        let mut value = CartesianTensor::zeros(xv.rank, 1);
        for c in 0..xv.channels {
            for m in 0..n {
                value.data[m] += xv.data[c * n + m];
            }
        }
        self.push(Op::SumChannels, vec![x], value)
    }

    pub fn broadcast(&mut self, x: NodeId, channels: usize) -> NodeId {
        let xv = &self.nodes[x].value;
        assert_eq!(xv.channels, 1, "broadcast expects a single channel");
        let n = xv.comps();
        let mut value = CartesianTensor::zeros(xv.rank, channels);
        for c in 0..channels {
            value.data[c * n..(c + 1) * n].copy_from_slice(&xv.data[..n]);
        }
        self.push(Op::Broadcast, vec![x], value)
    }

    pub fn pointwise(&mut self, x: NodeId, f: Func) -> NodeId {
        let xv = &self.nodes[x].value;
        assert_eq!(xv.rank, 0, "pointwise funcs act on rank-0 nodes");
        let value = CartesianTensor {
            rank: 0,
            channels: xv.channels,
            data: xv.data.iter().map(|&v| f.eval(v)).collect(),
        };
        self.push(Op::Pointwise(f), vec![x], value)
    }

    // -- convenience compositions -------------------------------------------

    /// Elementwise product of two rank-0 nodes.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.channel_mul(a, b)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let nb = self.scale(b, -1.0);
        self.add(&[a, nb])
    }

    /// `|v|` for a single-channel rank-1 node.
    pub fn norm3(&mut self, v: NodeId) -> NodeId {
        let d = self.diag_dot(v, v);
        self.pointwise(d, Func::Sqrt)
    }

    // -- differentiation ----------------------------------------------------

    /// Reverse-mode differentiation of a scalar node, building adjoint nodes.
    /// Returns one (optional) node per requested input; `None` means the
    /// output does not depend on it.
    pub fn grad(&mut self, output: NodeId, wrt: &[NodeId]) -> Vec<Option<NodeId>> {
        let watermark = self.nodes.len();
        let mut adj: Vec<Option<NodeId>> = vec![None; watermark];
        let seed_shape = {
            let v = &self.nodes[output].value;
            assert_eq!(v.rank, 0, "grad seeds a scalar output");
            assert_eq!(v.channels, 1, "grad seeds a scalar output");
            CartesianTensor::scalar(1.0)
        };
        adj[output] = Some(self.constant(seed_shape));
        for i in (0..watermark).rev() {
            let g = match adj[i] {
                Some(g) => g,
                None => continue,
            };
            let op = self.nodes[i].op.clone();
            let inputs = self.nodes[i].inputs.clone();
            match op {
                Op::Leaf | Op::Param => {}
                Op::AddN => {
                    for &inp in &inputs {
                        accumulate(self, &mut adj, inp, g);
                    }
                }
                Op::Scale(k) => {
                    let d = self.scale(g, k);
                    accumulate(self, &mut adj, inputs[0], d);
                }
                Op::Bilinear(table) => {
                    let (a, b) = (inputs[0], inputs[1]);
                    let ca = self.nodes[a].value.channels;
                    let cb = self.nodes[b].value.channels;
                    let ta = table.vjp_a();
                    let mut da = self.bilinear(g, b, ta);
                    if ca == 1 && self.nodes[da].value.channels > 1 {
                        da = self.sum_channels(da);
                    }
                    accumulate(self, &mut adj, a, da);
                    let tb = table.vjp_b();
                    let mut db = self.bilinear(g, a, tb);
                    if cb == 1 && self.nodes[db].value.channels > 1 {
                        db = self.sum_channels(db);
                    }
                    accumulate(self, &mut adj, b, db);
                }
                Op::LinearMix { rows, cols, transpose } => {
                    let (x, w) = (inputs[0], inputs[1]);
                    let dx = self.linear_mix(g, w, rows, cols, !transpose);
                    accumulate(self, &mut adj, x, dx);
                    let dw = if transpose {
                        self.channel_dot(g, x)
                    } else {
                        self.channel_dot(x, g)
                    };
                    accumulate(self, &mut adj, w, dw);
                }
                Op::ChannelDot { ca, cb } => {
                    let (a, b) = (inputs[0], inputs[1]);
                    let da = self.linear_mix(b, g, ca, cb, true);
                    accumulate(self, &mut adj, a, da);
                    let db = self.linear_mix(a, g, ca, cb, false);
                    accumulate(self, &mut adj, b, db);
                }
                Op::ChannelMul => {
                    let (x, s) = (inputs[0], inputs[1]);
                    let xv_ch = self.nodes[x].value.channels;
                    let sv_ch = self.nodes[s].value.channels;
                    let mut dx = self.channel_mul(g, s);
                    if xv_ch == 1 && self.nodes[dx].value.channels > 1 {
                        dx = self.sum_channels(dx);
                    }
                    accumulate(self, &mut adj, x, dx);
                    let mut ds = self.diag_dot_broadcast(x, g);
                    if sv_ch == 1 && self.nodes[ds].value.channels > 1 {
                        ds = self.sum_channels(ds);
                    }
                    accumulate(self, &mut adj, s, ds);
                }
                Op::DiagDot => {
                    let (x, y) = (inputs[0], inputs[1]);
                    let dx = self.channel_mul(y, g);
                    accumulate(self, &mut adj, x, dx);
                    let dy = self.channel_mul(x, g);
                    accumulate(self, &mut adj, y, dy);
                }
                Op::Project { p, transpose } => {
                    let d = self.project(g, p, !transpose);
                    accumulate(self, &mut adj, inputs[0], d);
                }
                Op::Concat => {
                    let mut at = 0;
                    for &inp in &inputs {
                        let c = self.nodes[inp].value.channels;
                        let d = self.slice(g, at, c);
                        accumulate(self, &mut adj, inp, d);
                        at += c;
                    }
                }
                Op::Slice { start, len } => {
                    let x = inputs[0];
                    let xv = &self.nodes[x].value;
                    let (rank, total) = (xv.rank, xv.channels);
                    let mut parts = Vec::new();
                    if start > 0 {
                        parts.push(self.constant(CartesianTensor::zeros(rank, start)));
                    }
                    parts.push(g);
                    if start + len < total {
                        parts.push(self.constant(CartesianTensor::zeros(rank, total - start - len)));
                    }
                    let d = self.concat(&parts);
                    accumulate(self, &mut adj, x, d);
                }
                Op::SumChannels => {
                    let x = inputs[0];
                    let c = self.nodes[x].value.channels;
                    let d = self.broadcast(g, c);
                    accumulate(self, &mut adj, x, d);
                }
                Op::Broadcast => {
                    let d = self.sum_channels(g);
                    accumulate(self, &mut adj, inputs[0], d);
                }
                Op::Pointwise(f) => {
                    let x = inputs[0];
                    let d = self.pointwise_vjp(f, x, i, g);
                    accumulate(self, &mut adj, x, d);
                }
            }
        }
        wrt.iter().map(|&w| adj.get(w).copied().flatten()).collect()
    }

    /// `diag_dot` that tolerates a channel-broadcast pair (used by the
    /// ChannelMul adjoint when one side had a single channel).
    fn diag_dot_broadcast(&mut self, x: NodeId, g: NodeId) -> NodeId {
        let cx = self.nodes[x].value.channels;
        let cg = self.nodes[g].value.channels;
        if cx == cg {
            self.diag_dot(x, g)
        } else if cx == 1 {
            let xb = self.broadcast(x, cg);
            self.diag_dot(xb, g)
        } else {
            let gb = self.broadcast(g, cx);
            self.diag_dot(x, gb)
        }
    }

    fn pointwise_vjp(&mut self, f: Func, x: NodeId, y: NodeId, g: NodeId) -> NodeId {
        match f {
            Func::SiluD(k) => {
                assert!(k < 3, "silu derivative order exhausted");
                let d = self.pointwise(x, Func::SiluD(k + 1));
                self.mul(g, d)
            }
            Func::SoftplusD(k) => {
                assert!(k < 3, "softplus derivative order exhausted");
                let d = self.pointwise(x, Func::SoftplusD(k + 1));
                self.mul(g, d)
            }
            Func::Sin => {
                let d = self.pointwise(x, Func::Cos);
                self.mul(g, d)
            }
            Func::Cos => {
                let s = self.pointwise(x, Func::Sin);
                let d = self.scale(s, -1.0);
                self.mul(g, d)
            }
            Func::Exp => self.mul(g, y),
            Func::Sqrt => {
                // 0.5 / sqrt(x), expressed through the output node
                let inv = self.pointwise(y, Func::PowInt(-1));
                let half = self.scale(inv, 0.5);
                self.mul(g, half)
            }
            Func::PowInt(n) => {
                let p = self.pointwise(x, Func::PowInt(n - 1));
                let d = self.scale(p, n as f64);
                self.mul(g, d)
            }
            Func::Erf => {
                // d/dx erf = 2/sqrt(pi) * exp(-x^2)
                let x2 = self.mul(x, x);
                let nx2 = self.scale(x2, -1.0);
                let e = self.pointwise(nx2, Func::Exp);
                let d = self.scale(e, 2.0 / std::f64::consts::PI.sqrt());
                self.mul(g, d)
            }
        }
    }

    /// Gradient of a scalar node with respect to every registered parameter,
    /// scattered into a flat vector matching the store layout.
    pub fn param_gradient(&mut self, output: NodeId, store: &ParamStore) -> Result<Vec<f64>> {
        let ids: Vec<NodeId> = self.params.iter().map(|&(id, _, _)| id).collect();
        let grads = self.grad(output, &ids);
        let mut flat = vec![0.0; store.data.len()];
        for (&(_, offset, len), g) in self.params.iter().zip(&grads) {
            if let Some(g) = g {
                let v = &self.nodes[*g].value;
                if v.data.len() != len {
                    return Err(Error::Shape("parameter gradient length mismatch".into()));
                }
                for (dst, src) in flat[offset..offset + len].iter_mut().zip(&v.data) {
                    *dst += src;
                }
            }
        }
        Ok(flat)
    }
}

fn accumulate(g: &mut Graph, adj: &mut [Option<NodeId>], target: NodeId, contribution: NodeId) {
    if target >= adj.len() {
        // adjoint node created during this backward pass; not differentiated here
        return;
    }
    adj[target] = Some(match adj[target] {
        Some(existing) => g.add(&[existing, contribution]),
        None => contribution,
    });
}
