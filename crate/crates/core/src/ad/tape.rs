//! Define-then-run tape.
//!
//! Operations are recorded symbolically through the builder methods, which
//! only hand out [`Var`] handles to already-recorded nodes; the record is
//! therefore topologically ordered by construction. [`Tape::forward`]
//! evaluates every node for a set of named input bindings and may be replayed
//! any number of times. Stochastic ops draw from a generator derived from the
//! tape's [`RngStream`] and their own op index, so replays are bit-identical.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::ad::kernels;
use crate::ad::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Variance floor added inside the square root of layer normalization.
pub const LAYERNORM_EPS: f64 = 1e-5;

/// Handle to a recorded value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Input(String),
    Const(Tensor),
    Randn(Vec<usize>),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var, f64),
    Transpose(Var),
    Reshape(Var, Vec<usize>),
    SumAll(Var),
    MeanAll(Var),
    MeanLast(Var),
    Abs(Var),
    Log(Var),
    Relu(Var),
    Sigmoid(Var),
    Softplus(Var),
    LayerNorm(Var),
    Dropout(Var, f64),
    Concat(Vec<Var>),
    Slice(Var, usize, usize),
    PairwiseDiff(Var),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input(_) => "input",
            Op::Const(_) => "const",
            Op::Randn(_) => "randn",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Transpose(_) => "transpose",
            Op::Reshape(..) => "reshape",
            Op::SumAll(_) => "sum",
            Op::MeanAll(_) => "mean",
            Op::MeanLast(_) => "mean_last",
            Op::Abs(_) => "abs",
            Op::Log(_) => "log",
            Op::Relu(_) => "relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::Softplus(_) => "softplus",
            Op::LayerNorm(_) => "layernorm",
            Op::Dropout(..) => "dropout",
            Op::Concat(_) => "concat",
            Op::Slice(..) => "slice",
            Op::PairwiseDiff(_) => "pairwise_diff",
        }
    }

    fn operands(&self) -> Vec<Var> {
        match self {
            Op::Input(_) | Op::Const(_) | Op::Randn(_) => vec![],
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::Scale(a, _)
            | Op::AddScalar(a, _)
            | Op::Transpose(a)
            | Op::Reshape(a, _)
            | Op::SumAll(a)
            | Op::MeanAll(a)
            | Op::MeanLast(a)
            | Op::Abs(a)
            | Op::Log(a)
            | Op::Relu(a)
            | Op::Sigmoid(a)
            | Op::Softplus(a)
            | Op::LayerNorm(a)
            | Op::Dropout(a, _)
            | Op::Slice(a, _, _)
            | Op::PairwiseDiff(a) => vec![*a],
            Op::Concat(vs) => vs.clone(),
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    needs_grad: bool,
    value: Option<Tensor>,
    // op-specific forward residue: dropout mask, layernorm (x_hat, inv_std)
    aux: Vec<f64>,
    aux2: Vec<f64>,
}

/// Named tensors a forward pass can read its inputs from.
pub trait Bindings {
    fn lookup(&self, name: &str) -> Option<&Tensor>;
}

impl Bindings for HashMap<String, Tensor> {
    fn lookup(&self, name: &str) -> Option<&Tensor> {
        self.get(name)
    }
}

impl Bindings for BTreeMap<String, Tensor> {
    fn lookup(&self, name: &str) -> Option<&Tensor> {
        self.get(name)
    }
}

impl<B: Bindings + ?Sized> Bindings for &B {
    fn lookup(&self, name: &str) -> Option<&Tensor> {
        (**self).lookup(name)
    }
}

/// Two binding sets searched in order.
impl<A: Bindings, B: Bindings> Bindings for (A, B) {
    fn lookup(&self, name: &str) -> Option<&Tensor> {
        self.0.lookup(name).or_else(|| self.1.lookup(name))
    }
}

impl Bindings for [(&str, Tensor)] {
    fn lookup(&self, name: &str) -> Option<&Tensor> {
        self.iter().find(|(n, _)| *n == name).map(|(_, t)| t)
    }
}

impl<const N: usize> Bindings for [(&str, Tensor); N] {
    fn lookup(&self, name: &str) -> Option<&Tensor> {
        self.as_slice().lookup(name)
    }
}

/// Gradients produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    inputs: BTreeMap<String, Var>,
}

impl Gradients {
    /// Gradient with respect to a named input; zeros when the output does not
    /// depend on it.
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.inputs.get(name).and_then(|v| self.grads[v.0].as_ref())
    }

    /// Gradient with respect to any recorded value.
    pub fn wrt(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    pub fn into_named(self) -> BTreeMap<String, Tensor> {
        let mut grads = self.grads;
        self.inputs
            .into_iter()
            .filter_map(|(name, v)| grads[v.0].take().map(|g| (name, g)))
            .collect()
    }
}

/// Recorded computation plus the values of its most recent forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
    inputs: BTreeMap<String, Var>,
    outputs: BTreeMap<String, Var>,
    rng: RngStream,
    evaluated: bool,
}

fn shape_err(op: &'static str, detail: String) -> Error {
    Error::Shape { op, detail }
}

fn suffix_compatible(lhs: &[usize], rhs: &[usize]) -> bool {
    if lhs == rhs || rhs == [1] {
        return true;
    }
    rhs.len() <= lhs.len() && lhs[lhs.len() - rhs.len()..] == *rhs
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl Tape {
    pub fn new(rng: RngStream) -> Self {
        Self {
            nodes: Vec::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            rng,
            evaluated: false,
        }
    }

    pub fn rng(&self) -> RngStream {
        self.rng
    }

    /// Switch the random stream; the next forward pass redraws stochastic ops.
    pub fn set_rng(&mut self, rng: RngStream) {
        self.rng = rng;
        self.evaluated = false;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op) -> Var {
        let needs_grad = match &op {
            Op::Input(_) => true,
            Op::Const(_) | Op::Randn(_) => false,
            other => other.operands().iter().any(|v| self.nodes[v.0].needs_grad),
        };
        for v in op.operands() {
            assert!(v.0 < self.nodes.len(), "var from another tape");
        }
        self.evaluated = false;
        self.nodes.push(Node {
            op,
            needs_grad,
            value: None,
            aux: Vec::new(),
            aux2: Vec::new(),
        });
        Var(self.nodes.len() - 1)
    }

    /// Named input; recording the same name twice returns the same handle.
    pub fn input(&mut self, name: &str) -> Var {
        if let Some(&v) = self.inputs.get(name) {
            return v;
        }
        let v = self.push(Op::Input(name.to_string()));
        self.inputs.insert(name.to_string(), v);
        v
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(Op::Const(t))
    }

    /// Standard normal noise of the given shape, drawn from this op's stream.
    pub fn randn(&mut self, shape: &[usize]) -> Var {
        self.push(Op::Randn(shape.to_vec()))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        self.push(Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.push(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.push(Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.push(Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.push(Op::AddScalar(a, c))
    }

    /// Swaps the last two axes.
    pub fn transpose(&mut self, a: Var) -> Var {
        self.push(Op::Transpose(a))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        self.push(Op::Reshape(a, shape.to_vec()))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        self.push(Op::SumAll(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        self.push(Op::MeanAll(a))
    }

    /// Mean over the last axis, which is removed.
    pub fn mean_last(&mut self, a: Var) -> Var {
        self.push(Op::MeanLast(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.push(Op::Abs(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.push(Op::Log(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.push(Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.push(Op::Sigmoid(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.push(Op::Softplus(a))
    }

    /// Normalizes over the last axis without affine parameters.
    pub fn layernorm(&mut self, a: Var) -> Var {
        self.push(Op::LayerNorm(a))
    }

    /// Inverted dropout. `p == 0` records nothing and returns `a`.
    pub fn dropout(&mut self, a: Var, p: f64) -> Var {
        assert!((0.0..1.0).contains(&p), "dropout probability must be in [0, 1)");
        if p == 0.0 {
            return a;
        }
        self.push(Op::Dropout(a, p))
    }

    /// Concatenation along the last axis.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        self.push(Op::Concat(parts.to_vec()))
    }

    /// Range `start..end` of the last axis.
    pub fn slice(&mut self, a: Var, start: usize, end: usize) -> Var {
        self.push(Op::Slice(a, start, end))
    }

    /// `v[i] - v[j]` for every unordered pair `i < j`, in lexicographic order.
    pub fn pairwise_diff(&mut self, a: Var) -> Var {
        self.push(Op::PairwiseDiff(a))
    }

    /// Registers `var` under `name` in the map returned by [`Tape::forward`].
    pub fn mark_output(&mut self, name: &str, var: Var) {
        self.outputs.insert(name.to_string(), var);
    }

    pub fn input_names(&self) -> impl Iterator<Item = &str> {
        self.inputs.keys().map(String::as_str)
    }

    /// Value from the last forward pass.
    pub fn value(&self, var: Var) -> Option<&Tensor> {
        self.nodes.get(var.0).and_then(|n| n.value.as_ref())
    }

    fn val(&self, var: Var) -> &Tensor {
        self.nodes[var.0]
            .value
            .as_ref()
            .expect("operands are evaluated before their consumers")
    }

    /// Evaluates every recorded op. Returns the marked outputs.
    pub fn forward(&mut self, inputs: &dyn Bindings) -> Result<BTreeMap<String, Tensor>> {
        self.evaluated = false;
        for i in 0..self.nodes.len() {
            let (value, aux, aux2) = self.eval_node(i, inputs)?;
            if !value.is_finite() {
                return Err(Error::NonFinite {
                    op: self.nodes[i].op.name(),
                    index: i,
                });
            }
            let node = &mut self.nodes[i];
            node.value = Some(value);
            node.aux = aux;
            node.aux2 = aux2;
        }
        self.evaluated = true;
        Ok(self
            .outputs
            .iter()
            .map(|(k, v)| (k.clone(), self.val(*v).clone()))
            .collect())
    }

    fn eval_node(&self, i: usize, inputs: &dyn Bindings) -> Result<(Tensor, Vec<f64>, Vec<f64>)> {
        let op = &self.nodes[i].op;
        let name = op.name();
        let plain = |t: Tensor| Ok((t, Vec::new(), Vec::new()));
        match op {
            Op::Input(n) => match inputs.lookup(n) {
                Some(t) => plain(t.clone()),
                None => Err(Error::State(format!("input `{n}` is not bound"))),
            },
            Op::Const(t) => plain(t.clone()),
            Op::Randn(shape) => {
                let mut g = self.rng.generator(i as u64);
                let n: usize = shape.iter().product();
                let data = (0..n).map(|_| g.sample::<f64, _>(StandardNormal)).collect();
                plain(Tensor::new(shape.clone(), data)?)
            }
            Op::MatMul(a, b) => plain(kernels::matmul(self.val(*a), self.val(*b))?),
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
                let (x, y) = (self.val(*a), self.val(*b));
                if !suffix_compatible(x.shape(), y.shape()) {
                    return Err(shape_err(name, format!("{:?} with {:?}", x.shape(), y.shape())));
                }
                let yd = y.data();
                let m = yd.len();
                let f: fn(f64, f64) -> f64 = match op {
                    Op::Add(..) => |p, q| p + q,
                    Op::Sub(..) => |p, q| p - q,
                    _ => |p, q| p * q,
                };
                let data = x
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(k, &p)| f(p, yd[k % m]))
                    .collect();
                plain(Tensor::new(x.shape().to_vec(), data)?)
            }
            Op::Scale(a, c) => plain(self.val(*a).map(|v| v * c)),
            Op::AddScalar(a, c) => plain(self.val(*a).map(|v| v + c)),
            Op::Transpose(a) => plain(kernels::transpose_last(self.val(*a))?),
            Op::Reshape(a, shape) => plain(self.val(*a).reshaped(shape.clone())?),
            Op::SumAll(a) => plain(Tensor::scalar(self.val(*a).data().iter().sum())),
            Op::MeanAll(a) => {
                let x = self.val(*a);
                plain(Tensor::scalar(x.data().iter().sum::<f64>() / x.len() as f64))
            }
            Op::MeanLast(a) => {
                let x = self.val(*a);
                let d = x.last_dim();
                let data = x
                    .data()
                    .chunks(d)
                    .map(|row| row.iter().sum::<f64>() / d as f64)
                    .collect();
                let mut shape = x.shape()[..x.rank() - 1].to_vec();
                if shape.is_empty() {
                    shape.push(1);
                }
                plain(Tensor::new(shape, data)?)
            }
            Op::Abs(a) => plain(self.val(*a).map(f64::abs)),
            Op::Log(a) => plain(self.val(*a).map(f64::ln)),
            Op::Relu(a) => plain(self.val(*a).map(|v| v.max(0.0))),
            Op::Sigmoid(a) => plain(self.val(*a).map(sigmoid)),
            Op::Softplus(a) => plain(self.val(*a).map(softplus)),
            Op::LayerNorm(a) => {
                let x = self.val(*a);
                let d = x.last_dim();
                let mut out = Vec::with_capacity(x.len());
                let mut inv_std = Vec::with_capacity(x.len() / d);
                for row in x.data().chunks(d) {
                    let mean = row.iter().sum::<f64>() / d as f64;
                    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
                    let inv = 1.0 / (var + LAYERNORM_EPS).sqrt();
                    out.extend(row.iter().map(|v| (v - mean) * inv));
                    inv_std.push(inv);
                }
                let t = Tensor::new(x.shape().to_vec(), out)?;
                Ok((t, inv_std, Vec::new()))
            }
            Op::Dropout(a, p) => {
                let x = self.val(*a);
                let mut g = self.rng.generator(i as u64);
                let keep = 1.0 / (1.0 - p);
                let mask: Vec<f64> = (0..x.len())
                    .map(|_| if g.random::<f64>() < *p { 0.0 } else { keep })
                    .collect();
                let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
                Ok((Tensor::new(x.shape().to_vec(), data)?, mask, Vec::new()))
            }
            Op::Concat(parts) => {
                let first = self.val(parts[0]);
                let lead = &first.shape()[..first.rank() - 1];
                let rows: usize = lead.iter().product();
                let mut width = 0;
                for &p in parts {
                    let t = self.val(p);
                    if &t.shape()[..t.rank() - 1] != lead {
                        return Err(shape_err(
                            name,
                            format!("{:?} with {:?}", first.shape(), t.shape()),
                        ));
                    }
                    width += t.last_dim();
                }
                let mut data = Vec::with_capacity(rows * width);
                for r in 0..rows {
                    for &p in parts {
                        let t = self.val(p);
                        let w = t.last_dim();
                        data.extend_from_slice(&t.data()[r * w..(r + 1) * w]);
                    }
                }
                let mut shape = lead.to_vec();
                shape.push(width);
                plain(Tensor::new(shape, data)?)
            }
            Op::Slice(a, start, end) => {
                let x = self.val(*a);
                let d = x.last_dim();
                if start >= end || *end > d {
                    return Err(shape_err(
                        name,
                        format!("range {start}..{end} out of last axis {d} of {:?}", x.shape()),
                    ));
                }
                let data = x
                    .data()
                    .chunks(d)
                    .flat_map(|row| row[*start..*end].iter().copied())
                    .collect();
                let mut shape = x.shape().to_vec();
                *shape.last_mut().unwrap() = end - start;
                plain(Tensor::new(shape, data)?)
            }
            Op::PairwiseDiff(a) => {
                let x = self.val(*a);
                let v = x.data();
                if v.len() < 2 {
                    return Err(shape_err(name, format!("needs >= 2 values, got {:?}", x.shape())));
                }
                let mut data = Vec::with_capacity(v.len() * (v.len() - 1) / 2);
                for i in 0..v.len() {
                    for j in i + 1..v.len() {
                        data.push(v[i] - v[j]);
                    }
                }
                plain(Tensor::from_vec(data))
            }
        }
    }

    /// Reverse-mode sweep from `output` seeded with `seed`.
    pub fn backward(&self, output: Var, seed: &Tensor) -> Result<Gradients> {
        if !self.evaluated {
            return Err(Error::State("backward called before forward".into()));
        }
        let out_val = self
            .value(output)
            .ok_or_else(|| Error::State("output var not on this tape".into()))?;
        if out_val.shape() != seed.shape() {
            return Err(shape_err(
                "backward",
                format!("seed {:?} vs output {:?}", seed.shape(), out_val.shape()),
            ));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(seed.data().to_vec());

        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.needs_grad {
                self.propagate(i, &g, &mut grads);
            }
            grads[i] = Some(g);
        }

        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| match (g, &self.nodes[i].value) {
                (Some(g), Some(v)) => Some(Tensor::new(v.shape().to_vec(), g).expect("same layout")),
                (None, Some(v)) if matches!(self.nodes[i].op, Op::Input(_)) => {
                    Some(Tensor::zeros(v.shape().to_vec()))
                }
                _ => None,
            })
            .collect();
        Ok(Gradients {
            grads,
            inputs: self.inputs.clone(),
        })
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let wants = |v: &Var| self.nodes[v.0].needs_grad;
        fn slot(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
            grads[v.0].get_or_insert_with(|| vec![0.0; len])
        }

        match &node.op {
            Op::Input(_) | Op::Const(_) | Op::Randn(_) => {}
            Op::MatMul(a, b) => {
                let (x, y) = (self.val(*a), self.val(*b));
                if wants(a) {
                    let da = slot(grads, *a, x.len());
                    kernels::matmul_grad_lhs(g, x, y, da);
                }
                if wants(b) {
                    let db = slot(grads, *b, y.len());
                    kernels::matmul_grad_rhs(g, x, y, db);
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
                let (x, y) = (self.val(*a), self.val(*b));
                let m = y.len();
                let is_mul = matches!(node.op, Op::Mul(..));
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if wants(a) {
                    let da = slot(grads, *a, x.len());
                    if is_mul {
                        let yd = y.data();
                        for (k, d) in da.iter_mut().enumerate() {
                            *d += g[k] * yd[k % m];
                        }
                    } else {
                        for (d, gk) in da.iter_mut().zip(g) {
                            *d += gk;
                        }
                    }
                }
                if wants(b) {
                    let db = slot(grads, *b, m);
                    if is_mul {
                        let xd = x.data();
                        for k in 0..g.len() {
                            db[k % m] += g[k] * xd[k];
                        }
                    } else {
                        for k in 0..g.len() {
                            db[k % m] += sign * g[k];
                        }
                    }
                }
            }
            Op::Scale(a, c) => {
                let da = slot(grads, *a, g.len());
                for (d, gk) in da.iter_mut().zip(g) {
                    *d += c * gk;
                }
            }
            Op::AddScalar(a, _) | Op::Reshape(a, _) => {
                let da = slot(grads, *a, g.len());
                for (d, gk) in da.iter_mut().zip(g) {
                    *d += gk;
                }
            }
            Op::Transpose(a) => {
                let out_shape = node.value.as_ref().unwrap().shape();
                let gt = kernels::transpose_last_raw(g, out_shape);
                let da = slot(grads, *a, g.len());
                for (d, gk) in da.iter_mut().zip(&gt) {
                    *d += gk;
                }
            }
            Op::SumAll(a) | Op::MeanAll(a) => {
                let n = self.val(*a).len();
                let c = if matches!(node.op, Op::MeanAll(_)) {
                    g[0] / n as f64
                } else {
                    g[0]
                };
                let da = slot(grads, *a, n);
                for d in da.iter_mut() {
                    *d += c;
                }
            }
            Op::MeanLast(a) => {
                let x = self.val(*a);
                let d = x.last_dim();
                let da = slot(grads, *a, x.len());
                for (r, row) in da.chunks_mut(d).enumerate() {
                    let c = g[r] / d as f64;
                    for v in row {
                        *v += c;
                    }
                }
            }
            Op::Abs(a) | Op::Log(a) | Op::Relu(a) | Op::Sigmoid(a) | Op::Softplus(a) => {
                let x = self.val(*a).data();
                let y = node.value.as_ref().unwrap().data();
                let deriv: Box<dyn Fn(usize) -> f64> = match node.op {
                    Op::Abs(_) => Box::new(|k| {
                        if x[k] > 0.0 {
                            1.0
                        } else if x[k] < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    }),
                    Op::Log(_) => Box::new(|k| 1.0 / x[k]),
                    Op::Relu(_) => Box::new(|k| if x[k] > 0.0 { 1.0 } else { 0.0 }),
                    Op::Sigmoid(_) => Box::new(|k| y[k] * (1.0 - y[k])),
                    _ => Box::new(|k| sigmoid(x[k])),
                };
                let da = slot(grads, *a, x.len());
                for (k, d) in da.iter_mut().enumerate() {
                    *d += g[k] * deriv(k);
                }
            }
            Op::LayerNorm(a) => {
                let xhat = node.value.as_ref().unwrap();
                let d = xhat.last_dim();
                let inv_std = &node.aux;
                let da = slot(grads, *a, xhat.len());
                for (r, ((dx, gy), xh)) in da
                    .chunks_mut(d)
                    .zip(g.chunks(d))
                    .zip(xhat.data().chunks(d))
                    .enumerate()
                {
                    let mean_g = gy.iter().sum::<f64>() / d as f64;
                    let mean_gx = gy.iter().zip(xh).map(|(p, q)| p * q).sum::<f64>() / d as f64;
                    for k in 0..d {
                        dx[k] += inv_std[r] * (gy[k] - mean_g - xh[k] * mean_gx);
                    }
                }
            }
            Op::Dropout(a, _) => {
                let mask = &node.aux;
                let da = slot(grads, *a, g.len());
                for k in 0..g.len() {
                    da[k] += g[k] * mask[k];
                }
            }
            Op::Concat(parts) => {
                let out = node.value.as_ref().unwrap();
                let width = out.last_dim();
                let rows = out.len() / width;
                let mut offset = 0;
                for p in parts {
                    let t = self.val(*p);
                    let w = t.last_dim();
                    if wants(p) {
                        let dp = slot(grads, *p, t.len());
                        for r in 0..rows {
                            for c in 0..w {
                                dp[r * w + c] += g[r * width + offset + c];
                            }
                        }
                    }
                    offset += w;
                }
            }
            Op::Slice(a, start, end) => {
                let x = self.val(*a);
                let d = x.last_dim();
                let w = end - start;
                let da = slot(grads, *a, x.len());
                for (r, row) in da.chunks_mut(d).enumerate() {
                    for c in 0..w {
                        row[start + c] += g[r * w + c];
                    }
                }
            }
            Op::PairwiseDiff(a) => {
                let n = self.val(*a).len();
                let da = slot(grads, *a, n);
                let mut k = 0;
                for i in 0..n {
                    for j in i + 1..n {
                        da[i] += g[k];
                        da[j] -= g[k];
                        k += 1;
                    }
                }
            }
        }
    }
}
