//! Tape of tensor operations and its reverse sweep.
//!
//! Nodes are appended in evaluation order, so the tape is already a
//! topological order and [`Graph::backward`] walks it in reverse.
//! Parameters live outside the graph in a [`ParamStore`]; binding a
//! parameter copies its value onto the tape and [`ParamStore::accumulate_grads`]
//! pulls the gradient back once the sweep is done.

use std::collections::HashSet;
use std::sync::atomic::{AtomicU64, Ordering};

use super::tensor::{matmul, matmul_a_bt, matmul_at_b, Tensor};
use crate::error::{shape_err, Error, Result};

/// Probability clamp used by [`Graph::bce`].
pub const BCE_EPS: f64 = 1e-7;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Param { store: u64, index: usize },
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    SliceCols { src: Var, start: usize },
    ConcatLast(Var, Var),
    StackSteps(Vec<Var>),
    SelectStep { src: Var, step: usize },
    Reshape(Var),
    Sum(Var),
    Mean(Var),
    Bce { p: Var, y: Var },
}

struct Node {
    value: Tensor,
    grad: Option<Vec<f64>>,
    op: Op,
    requires_grad: bool,
}

/// Single-use computation graph. Build with the op methods, call
/// [`backward`](Graph::backward) once, then [`reset`](Graph::reset) before reuse.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    frozen: HashSet<u64>,
    backward_done: bool,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Clears the tape; frozen stores stay frozen.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.backward_done = false;
    }

    /// Parameters of `store` bound after this call are treated as constants.
    pub fn freeze(&mut self, store: &ParamStore) {
        self.frozen.insert(store.id);
    }

    pub fn unfreeze(&mut self, store: &ParamStore) {
        self.frozen.remove(&store.id);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient of the last backward pass; `None` if no gradient reached `v`.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Constant input.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Leaf that receives a gradient.
    pub fn variable(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Binds parameter `index` of `store`.
    pub fn param(&mut self, store: &ParamStore, index: usize) -> Var {
        let rg = !self.frozen.contains(&store.id);
        self.push(
            store.params[index].value.clone(),
            Op::Param {
                store: store.id,
                index,
            },
            rg,
        )
    }

    /// `[m × k] · [k × n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return shape_err(format!("matmul of {sa:?} and {sb:?}"));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), rg))
    }

    /// Adds a `[n]` bias to every row of `[m × n]`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x), self.shape(b));
        if sx.len() != 2 || sb.len() != 1 || sx[1] != sb[0] {
            return shape_err(format!("add_bias of {sx:?} and {sb:?}"));
        }
        let n = sb[0];
        let mut out = self.value(x).clone();
        let bias = self.value(b).data().to_vec();
        for row in out.data_mut().chunks_mut(n) {
            for (o, bi) in row.iter_mut().zip(&bias) {
                *o += bi;
            }
        }
        let rg = self.rg(x) || self.rg(b);
        Ok(self.push(out, Op::AddBias(x, b), rg))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return shape_err(format!(
                "{what} of {:?} and {:?}",
                self.shape(a),
                self.shape(b)
            ));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let data = zip_map(self.value(a).data(), self.value(b).data(), |x, y| x + y);
        let t = Tensor::new(self.shape(a).to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Add(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let data = zip_map(self.value(a).data(), self.value(b).data(), |x, y| x * y);
        let t = Tensor::new(self.shape(a).to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Mul(a, b), rg))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let t = map(self.value(x), sigmoid);
        let rg = self.rg(x);
        self.push(t, Op::Sigmoid(x), rg)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let t = map(self.value(x), f64::tanh);
        let rg = self.rg(x);
        self.push(t, Op::Tanh(x), rg)
    }

    /// Columns `start..start + len` of a `[m × n]` matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let sx = self.shape(x);
        if sx.len() != 2 || start + len > sx[1] {
            return shape_err(format!("slice_cols {start}..{} of {sx:?}", start + len));
        }
        let (m, n) = (sx[0], sx[1]);
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(m * len);
        for i in 0..m {
            out.extend_from_slice(&src[i * n + start..i * n + start + len]);
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(vec![m, len], out)?, Op::SliceCols { src: x, start }, rg))
    }

    /// Concatenates along the last axis; leading dimensions must agree.
    pub fn concat_last(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.is_empty() || sa.len() != sb.len() || sa[..sa.len() - 1] != sb[..sb.len() - 1] {
            return shape_err(format!("concat of {sa:?} and {sb:?}"));
        }
        let (fa, fb) = (sa[sa.len() - 1], sb[sb.len() - 1]);
        let rows = self.value(a).len() / fa.max(1);
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(da.len() + db.len());
        for r in 0..rows {
            out.extend_from_slice(&da[r * fa..(r + 1) * fa]);
            out.extend_from_slice(&db[r * fb..(r + 1) * fb]);
        }
        let mut shape = sa;
        *shape.last_mut().unwrap() = fa + fb;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(shape, out)?, Op::ConcatLast(a, b), rg))
    }

    /// Stacks `T` matrices `[B × F]` into `[B × T × F]`.
    pub fn stack_steps(&mut self, steps: &[Var]) -> Result<Var> {
        let Some(&first) = steps.first() else {
            return shape_err("stack_steps needs at least one step");
        };
        let s0 = self.shape(first).to_vec();
        if s0.len() != 2 || steps.iter().any(|&v| self.shape(v) != s0.as_slice()) {
            return shape_err("stack_steps needs equally shaped [B x F] steps");
        }
        let (b, f, t_len) = (s0[0], s0[1], steps.len());
        let mut out = vec![0.0; b * t_len * f];
        for (t, &v) in steps.iter().enumerate() {
            let d = self.value(v).data();
            for bi in 0..b {
                out[(bi * t_len + t) * f..(bi * t_len + t + 1) * f]
                    .copy_from_slice(&d[bi * f..(bi + 1) * f]);
            }
        }
        let rg = steps.iter().any(|&v| self.rg(v));
        Ok(self.push(
            Tensor::new(vec![b, t_len, f], out)?,
            Op::StackSteps(steps.to_vec()),
            rg,
        ))
    }

    /// Timestep `step` of `[B × T × F]`, as `[B × F]`.
    pub fn select_step(&mut self, x: Var, step: usize) -> Result<Var> {
        let sx = self.shape(x);
        if sx.len() != 3 || step >= sx[1] {
            return shape_err(format!("select_step {step} of {sx:?}"));
        }
        let (b, t_len, f) = (sx[0], sx[1], sx[2]);
        let d = self.value(x).data();
        let mut out = Vec::with_capacity(b * f);
        for bi in 0..b {
            out.extend_from_slice(&d[(bi * t_len + step) * f..(bi * t_len + step + 1) * f]);
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(vec![b, f], out)?, Op::SelectStep { src: x, step }, rg))
    }

    /// Same data, new shape.
    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).reshaped(shape.to_vec())?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::Reshape(x), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let s = v.data().iter().sum::<f64>() / v.len() as f64;
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Mean(x), rg)
    }

    /// Mean binary cross-entropy of probabilities `p` against targets `y`,
    /// with `p` clamped to `[BCE_EPS, 1 - BCE_EPS]`.
    pub fn bce(&mut self, p: Var, y: Var) -> Result<Var> {
        self.same_shape(p, y, "bce")?;
        let (pd, yd) = (self.value(p).data(), self.value(y).data());
        let n = pd.len() as f64;
        let loss = pd
            .iter()
            .zip(yd)
            .map(|(&pi, &yi)| {
                let pc = pi.clamp(BCE_EPS, 1.0 - BCE_EPS);
                -(yi * pc.ln() + (1.0 - yi) * (1.0 - pc).ln())
            })
            .sum::<f64>()
            / n;
        let rg = self.rg(p) || self.rg(y);
        Ok(self.push(Tensor::scalar(loss), Op::Bce { p, y }, rg))
    }

    /// Reverse sweep from the scalar `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::State("backward already ran on this graph; reset it first".into()));
        }
        if self.value(loss).len() != 1 {
            return shape_err(format!("backward needs a scalar loss, got {:?}", self.shape(loss)));
        }
        self.backward_done = true;
        if !self.rg(loss) {
            return Ok(());
        }
        self.nodes[loss.0].grad = Some(vec![1.0]);
        for id in (0..=loss.0).rev() {
            if !self.nodes[id].requires_grad {
                continue;
            }
            let Some(g) = self.nodes[id].grad.take() else {
                continue;
            };
            self.propagate(id, &g)?;
            self.nodes[id].grad = Some(g);
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, delta: Vec<f64>) {
        let node = &mut self.nodes[v.0];
        if !node.requires_grad {
            return;
        }
        match &mut node.grad {
            Some(g) => g.iter_mut().zip(delta).for_each(|(a, d)| *a += d),
            None => node.grad = Some(delta),
        }
    }

    fn propagate(&mut self, id: usize, g: &[f64]) -> Result<()> {
        let op = self.nodes[id].op.clone();
        match op {
            Op::Leaf | Op::Param { .. } => {}
            Op::MatMul(a, b) => {
                let (m, k) = (self.shape(a)[0], self.shape(a)[1]);
                let n = self.shape(b)[1];
                if self.rg(a) {
                    let da = matmul_a_bt(g, self.value(b).data(), m, n, k);
                    self.accumulate(a, da);
                }
                if self.rg(b) {
                    let db = matmul_at_b(self.value(a).data(), g, m, k, n);
                    self.accumulate(b, db);
                }
            }
            Op::AddBias(x, b) => {
                if self.rg(b) {
                    let n = self.shape(b)[0];
                    let mut db = vec![0.0; n];
                    for row in g.chunks(n) {
                        db.iter_mut().zip(row).for_each(|(d, r)| *d += r);
                    }
                    self.accumulate(b, db);
                }
                self.accumulate(x, g.to_vec());
            }
            Op::Add(a, b) => {
                self.accumulate(a, g.to_vec());
                self.accumulate(b, g.to_vec());
            }
            Op::Mul(a, b) => {
                if self.rg(a) {
                    let da = zip_map(g, self.value(b).data(), |gi, bi| gi * bi);
                    self.accumulate(a, da);
                }
                if self.rg(b) {
                    let db = zip_map(g, self.value(a).data(), |gi, ai| gi * ai);
                    self.accumulate(b, db);
                }
            }
            Op::Sigmoid(x) => {
                let y = self.nodes[id].value.data();
                let dx = zip_map(g, y, |gi, yi| gi * yi * (1.0 - yi));
                self.accumulate(x, dx);
            }
            Op::Tanh(x) => {
                let y = self.nodes[id].value.data();
                let dx = zip_map(g, y, |gi, yi| gi * (1.0 - yi * yi));
                self.accumulate(x, dx);
            }
            Op::SliceCols { src, start } => {
                let (m, n) = (self.shape(src)[0], self.shape(src)[1]);
                let len = self.nodes[id].value.shape()[1];
                let mut dx = vec![0.0; m * n];
                for i in 0..m {
                    dx[i * n + start..i * n + start + len].copy_from_slice(&g[i * len..(i + 1) * len]);
                }
                self.accumulate(src, dx);
            }
            Op::ConcatLast(a, b) => {
                let fa = *self.shape(a).last().unwrap();
                let fb = *self.shape(b).last().unwrap();
                let rows = g.len() / (fa + fb).max(1);
                let (mut da, mut db) = (Vec::with_capacity(rows * fa), Vec::with_capacity(rows * fb));
                for row in g.chunks(fa + fb) {
                    da.extend_from_slice(&row[..fa]);
                    db.extend_from_slice(&row[fa..]);
                }
                self.accumulate(a, da);
                self.accumulate(b, db);
            }
            Op::StackSteps(steps) => {
                let s = self.nodes[id].value.shape().to_vec();
                let (b, t_len, f) = (s[0], s[1], s[2]);
                for (t, &v) in steps.iter().enumerate() {
                    if !self.rg(v) {
                        continue;
                    }
                    let mut dv = Vec::with_capacity(b * f);
                    for bi in 0..b {
                        dv.extend_from_slice(&g[(bi * t_len + t) * f..(bi * t_len + t + 1) * f]);
                    }
                    self.accumulate(v, dv);
                }
            }
            Op::SelectStep { src, step } => {
                let s = self.shape(src).to_vec();
                let (b, t_len, f) = (s[0], s[1], s[2]);
                let mut dx = vec![0.0; b * t_len * f];
                for bi in 0..b {
                    dx[(bi * t_len + step) * f..(bi * t_len + step + 1) * f]
                        .copy_from_slice(&g[bi * f..(bi + 1) * f]);
                }
                self.accumulate(src, dx);
            }
            Op::Reshape(x) => self.accumulate(x, g.to_vec()),
            Op::Sum(x) => {
                let n = self.value(x).len();
                self.accumulate(x, vec![g[0]; n]);
            }
            Op::Mean(x) => {
                let n = self.value(x).len();
                self.accumulate(x, vec![g[0] / n as f64; n]);
            }
            Op::Bce { p, y } => {
                if self.rg(p) {
                    let (pd, yd) = (self.value(p).data(), self.value(y).data());
                    let n = pd.len() as f64;
                    let dp = pd
                        .iter()
                        .zip(yd)
                        .map(|(&pi, &yi)| {
                            if !(BCE_EPS..=1.0 - BCE_EPS).contains(&pi) {
                                0.0
                            } else {
                                g[0] * (-yi / pi + (1.0 - yi) / (1.0 - pi)) / n
                            }
                        })
                        .collect();
                    self.accumulate(p, dp);
                }
                if self.rg(y) {
                    let pd = self.value(p).data();
                    let n = pd.len() as f64;
                    let dy = pd
                        .iter()
                        .map(|&pi| {
                            let pc = pi.clamp(BCE_EPS, 1.0 - BCE_EPS);
                            g[0] * -(pc.ln() - (1.0 - pc).ln()) / n
                        })
                        .collect();
                    self.accumulate(y, dy);
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn map(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::from_fn(t.shape(), |i| f(t.data()[i]))
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

static NEXT_STORE_ID: AtomicU64 = AtomicU64::new(1);

/// A named trainable tensor with its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Vec<f64>,
}

/// Ordered parameter set of one network.
#[derive(Debug)]
pub struct ParamStore {
    id: u64,
    params: Vec<Param>,
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl Clone for ParamStore {
    fn clone(&self) -> Self {
        Self {
            id: NEXT_STORE_ID.fetch_add(1, Ordering::Relaxed),
            params: self.params.clone(),
        }
    }
}

impl PartialEq for ParamStore {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self {
            id: NEXT_STORE_ID.fetch_add(1, Ordering::Relaxed),
            params: Vec::new(),
        }
    }

    /// Registers a parameter; names must be unique within the store.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<usize> {
        let name = name.into();
        if self.params.iter().any(|p| p.name == name) {
            return Err(Error::State(format!("parameter '{name}' registered twice")));
        }
        let grad = vec![0.0; value.len()];
        self.params.push(Param { name, value, grad });
        Ok(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn get(&self, index: usize) -> &Param {
        &self.params[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Adds the gradients that `graph` holds for this store's parameters.
    pub fn accumulate_grads(&mut self, graph: &Graph) {
        for node in &graph.nodes {
            if let (Op::Param { store, index }, Some(g)) = (&node.op, &node.grad) {
                if *store == self.id {
                    self.params[*index]
                        .grad
                        .iter_mut()
                        .zip(g)
                        .for_each(|(a, b)| *a += b);
                }
            }
        }
    }

    /// Replaces all values from `other`, which must have the same layout.
    pub fn load_values(&mut self, other: &[Param]) -> Result<()> {
        if other.len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, found {}",
                self.params.len(),
                other.len()
            )));
        }
        for (mine, theirs) in self.params.iter_mut().zip(other) {
            if mine.name != theirs.name || mine.value.shape() != theirs.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter '{}' {:?} does not match '{}' {:?}",
                    mine.name,
                    mine.value.shape(),
                    theirs.name,
                    theirs.value.shape()
                )));
            }
            mine.value = theirs.value.clone();
        }
        Ok(())
    }
}
