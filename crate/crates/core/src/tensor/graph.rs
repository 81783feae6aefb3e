//! Append-only operation tape over tensors.
//!
//! Nodes are only ever created from existing nodes, so the tape order is a
//! topological order and backward is a single reverse sweep.

use super::{log_sigmoid, sigmoid, softmax_unchecked, ParamId, ParameterStore, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Input,
    Param(ParamId),
    ParamRow(ParamId, usize),
    ParamMatVec(ParamId, Var),
    MatVec(Var, Var),
    MatTVec(Var, Var),
    Stack(Vec<Var>),
    Concat(Vec<Var>),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    ScaleBy(Var, Var),
    OneMinus(Var),
    Sigmoid(Var),
    LogSigmoid(Var),
    Tanh(Var),
    Softmax(Var),
    Normalize(Var),
    LnFloor(Var, f64),
    Clamp(Var, f64, f64),
    Dot(Var, Var),
    Sum(Var),
    Pick(Var, usize),
    Mean(Vec<Var>),
    AddN(Vec<Var>),
    RowScale(Var, Var),
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// A recording of tensor operations over a borrowed [`ParameterStore`].
pub struct Graph<'s> {
    store: &'s ParameterStore,
    nodes: Vec<Node>,
}

/// Parameter gradients produced by [`Graph::backward`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn empty(n: usize) -> Self {
        Gradients { grads: vec![None; n] }
    }

    /// `None` when the parameter did not take part in the loss (zero gradient).
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn global_norm(&self) -> f64 {
        self.grads.iter().flatten().map(Tensor::sq_norm).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, k: f64) {
        for t in self.grads.iter_mut().flatten() {
            t.data_mut().iter_mut().for_each(|v| *v *= k);
        }
    }

    /// Adds `other` into `self`.
    pub fn accumulate(&mut self, other: &Gradients) {
        if self.grads.len() < other.grads.len() {
            self.grads.resize(other.grads.len(), None);
        }
        for (mine, theirs) in self.grads.iter_mut().zip(&other.grads) {
            if let Some(t) = theirs {
                match mine {
                    Some(m) => m.data_mut().iter_mut().zip(t.data()).for_each(|(a, b)| *a += b),
                    None => *mine = Some(t.clone()),
                }
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().flatten().all(Tensor::is_finite)
    }
}

fn same_len(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Internal(format!("{what}: length {} vs {}", a.len(), b.len())));
    }
    Ok(())
}

impl<'s> Graph<'s> {
    pub fn new(store: &'s ParameterStore) -> Self {
        Graph { store, nodes: Vec::new() }
    }

    pub fn store(&self) -> &'s ParameterStore {
        self.store
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

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.item()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn vals(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Input)
    }

    pub fn constant_vector(&mut self, v: Vec<f64>) -> Var {
        self.input(Tensor::vector(v))
    }

    pub fn constant_scalar(&mut self, v: f64) -> Var {
        self.input(Tensor::scalar(v))
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let t = self.store.get(id).clone();
        self.push(t, Op::Param(id))
    }

    /// Row `r` of a parameter matrix, as a column vector.
    pub fn param_row(&mut self, id: ParamId, r: usize) -> Result<Var> {
        let p = self.store.get(id);
        if r >= p.rows() {
            return Err(Error::Lookup(format!("row {r} out of range for `{}`", self.store.name(id))));
        }
        let t = Tensor::vector(p.row(r).to_vec());
        Ok(self.push(t, Op::ParamRow(id, r)))
    }

    /// `W x` for a parameter matrix `W`.
    pub fn param_matvec(&mut self, id: ParamId, x: Var) -> Result<Var> {
        let w = self.store.get(id);
        let xv = self.vals(x);
        if w.cols() != xv.len() {
            return Err(Error::Internal(format!(
                "`{}` is {}x{}, input has length {}",
                self.store.name(id),
                w.rows(),
                w.cols(),
                xv.len()
            )));
        }
        let out: Vec<f64> = (0..w.rows()).map(|r| dot(w.row(r), xv)).collect();
        Ok(self.push(Tensor::vector(out), Op::ParamMatVec(id, x)))
    }

    pub fn matvec(&mut self, m: Var, x: Var) -> Result<Var> {
        let mv = self.value(m);
        let xv = self.vals(x);
        if mv.cols() != xv.len() {
            return Err(Error::Internal(format!("matvec {}x{} by {}", mv.rows(), mv.cols(), xv.len())));
        }
        let out: Vec<f64> = (0..mv.rows()).map(|r| dot(mv.row(r), xv)).collect();
        Ok(self.push(Tensor::vector(out), Op::MatVec(m, x)))
    }

    /// `Mᵀ x`.
    pub fn mat_t_vec(&mut self, m: Var, x: Var) -> Result<Var> {
        let mv = self.value(m);
        let xv = self.vals(x);
        if mv.rows() != xv.len() {
            return Err(Error::Internal(format!("mat_t_vec {}x{} by {}", mv.rows(), mv.cols(), xv.len())));
        }
        let mut out = vec![0.0; mv.cols()];
        for (r, &w) in xv.iter().enumerate() {
            for (o, m) in out.iter_mut().zip(mv.row(r)) {
                *o += w * m;
            }
        }
        Ok(self.push(Tensor::vector(out), Op::MatTVec(m, x)))
    }

    /// Stacks equal-length vectors as matrix rows.
    pub fn stack(&mut self, rows: &[Var]) -> Result<Var> {
        let cols = rows.first().map(|&r| self.vals(r).len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for &r in rows {
            let v = self.vals(r);
            if v.len() != cols {
                return Err(Error::Internal("stack of unequal rows".into()));
            }
            data.extend_from_slice(v);
        }
        let t = Tensor::new(rows.len(), cols, data)?;
        Ok(self.push(t, Op::Stack(rows.to_vec())))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let data: Vec<f64> = parts.iter().flat_map(|&p| self.vals(p).iter().copied()).collect();
        self.push(Tensor::vector(data), Op::Concat(parts.to_vec()))
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op, what: &str) -> Result<Var> {
        same_len(self.value(a), self.value(b), what)?;
        let (r, c) = self.value(a).shape();
        let data = self.vals(a).iter().zip(self.vals(b)).map(|(x, y)| f(*x, *y)).collect();
        Ok(self.push(Tensor::new(r, c, data)?, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, |x, y| x + y, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, |x, y| x - y, Op::Sub(a, b), "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, |x, y| x * y, Op::Mul(a, b), "mul")
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let (r, c) = self.value(a).shape();
        let data = self.vals(a).iter().map(|&x| f(x)).collect();
        self.push(Tensor { rows: r, cols: c, data }, op)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        self.map(a, |x| x * k, Op::Scale(a, k))
    }

    /// Vector `v` times scalar node `s`.
    pub fn scale_by(&mut self, v: Var, s: Var) -> Result<Var> {
        if self.value(s).len() != 1 {
            return Err(Error::Internal("scale_by expects a scalar".into()));
        }
        let k = self.scalar(s);
        let (r, c) = self.value(v).shape();
        let data = self.vals(v).iter().map(|x| x * k).collect();
        Ok(self.push(Tensor { rows: r, cols: c, data }, Op::ScaleBy(v, s)))
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        self.map(a, |x| 1.0 - x, Op::OneMinus(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn log_sigmoid(&mut self, a: Var) -> Var {
        self.map(a, log_sigmoid, Op::LogSigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        if self.vals(a).iter().any(|x| x.is_nan()) {
            return Err(Error::Numeric("softmax input contains NaN".into()));
        }
        let out = softmax_unchecked(self.vals(a));
        Ok(self.push(Tensor::vector(out), Op::Softmax(a)))
    }

    /// `a / Σa`. The caller guarantees a positive sum.
    pub fn normalize(&mut self, a: Var) -> Result<Var> {
        let s: f64 = self.vals(a).iter().sum();
        if !(s > 0.0) {
            return Err(Error::Numeric(format!("cannot normalize vector with sum {s}")));
        }
        let data = self.vals(a).iter().map(|x| x / s).collect();
        Ok(self.push(Tensor::vector(data), Op::Normalize(a)))
    }

    /// `ln(max(a, floor))` elementwise.
    pub fn ln_floor(&mut self, a: Var, floor: f64) -> Var {
        self.map(a, |x| x.max(floor).ln(), Op::LnFloor(a, floor))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.map(a, |x| x.clamp(lo, hi), Op::Clamp(a, lo, hi))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        same_len(self.value(a), self.value(b), "dot")?;
        let d = dot(self.vals(a), self.vals(b));
        Ok(self.push(Tensor::scalar(d), Op::Dot(a, b)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.vals(a).iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    /// Element `i` as a scalar.
    pub fn pick(&mut self, a: Var, i: usize) -> Result<Var> {
        let v = *self
            .vals(a)
            .get(i)
            .ok_or_else(|| Error::Internal(format!("pick index {i} out of range")))?;
        Ok(self.push(Tensor::scalar(v), Op::Pick(a, i)))
    }

    /// Elementwise mean of equal-length vectors.
    pub fn mean(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| Error::Internal("mean of nothing".into()))?;
        let mut acc = self.vals(first).to_vec();
        for &p in &parts[1..] {
            same_len(self.value(first), self.value(p), "mean")?;
            acc.iter_mut().zip(self.vals(p)).for_each(|(a, b)| *a += b);
        }
        let n = parts.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Ok(self.push(Tensor::vector(acc), Op::Mean(parts.to_vec())))
    }

    /// Sum of same-shape nodes.
    pub fn add_n(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| Error::Internal("add_n of nothing".into()))?;
        let (r, c) = self.value(first).shape();
        let mut acc = self.vals(first).to_vec();
        for &p in &parts[1..] {
            same_len(self.value(first), self.value(p), "add_n")?;
            acc.iter_mut().zip(self.vals(p)).for_each(|(a, b)| *a += b);
        }
        Ok(self.push(Tensor::new(r, c, acc)?, Op::AddN(parts.to_vec())))
    }

    /// Scales row `i` of matrix `m` by `w[i]`.
    pub fn row_scale(&mut self, m: Var, w: Var) -> Result<Var> {
        let mv = self.value(m);
        let wv = self.vals(w);
        if mv.rows() != wv.len() {
            return Err(Error::Internal("row_scale weight count mismatch".into()));
        }
        let mut out = mv.clone();
        for (r, &k) in wv.iter().enumerate() {
            out.row_mut(r).iter_mut().for_each(|x| *x *= k);
        }
        Ok(self.push(out, Op::RowScale(m, w)))
    }

    /// Reverse sweep from a scalar `loss`, returning gradients for every parameter.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::Internal("backward needs a scalar loss".into()));
        }
        let mut node_grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        node_grads[loss.0] = Some(vec![1.0]);
        let mut params = Gradients::empty(self.store.len());

        for i in (0..=loss.0).rev() {
            let Some(g) = node_grads[i].take() else { continue };
            let node = &self.nodes[i];
            let y = node.value.data();
            let mut send = |target: Var, contrib: &dyn Fn(usize) -> f64, n: usize| -> Result<()> {
                if target.0 >= i {
                    return Err(Error::Internal("operation tape contains a cycle".into()));
                }
                let slot = node_grads[target.0].get_or_insert_with(|| vec![0.0; n]);
                for (k, s) in slot.iter_mut().enumerate() {
                    *s += contrib(k);
                }
                Ok(())
            };
            match &node.op {
                Op::Input => {}
                Op::Param(id) => {
                    let t = param_slot(&mut params, self.store, *id);
                    t.data_mut().iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                }
                Op::ParamRow(id, r) => {
                    let t = param_slot(&mut params, self.store, *id);
                    t.row_mut(*r).iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                }
                Op::ParamMatVec(id, x) => {
                    let w = self.store.get(*id);
                    let xv = self.vals(*x);
                    let t = param_slot(&mut params, self.store, *id);
                    for (r, gr) in g.iter().enumerate() {
                        if *gr != 0.0 {
                            t.row_mut(r).iter_mut().zip(xv).for_each(|(a, xj)| *a += gr * xj);
                        }
                    }
                    send(*x, &|j| (0..w.rows()).map(|r| w.get(r, j) * g[r]).sum(), xv.len())?;
                }
                Op::MatVec(m, x) => {
                    let mv = self.value(*m);
                    let xv = self.vals(*x);
                    let cols = mv.cols();
                    send(*m, &|k| g[k / cols] * xv[k % cols], mv.len())?;
                    send(*x, &|j| (0..mv.rows()).map(|r| mv.get(r, j) * g[r]).sum(), xv.len())?;
                }
                Op::MatTVec(m, x) => {
                    let mv = self.value(*m);
                    let xv = self.vals(*x);
                    let cols = mv.cols();
                    send(*m, &|k| xv[k / cols] * g[k % cols], mv.len())?;
                    send(*x, &|r| dot(mv.row(r), &g), xv.len())?;
                }
                Op::Stack(rows) => {
                    let cols = node.value.cols();
                    for (r, &v) in rows.iter().enumerate() {
                        send(v, &|k| g[r * cols + k], cols)?;
                    }
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let n = self.vals(p).len();
                        send(p, &|k| g[off + k], n)?;
                        off += n;
                    }
                }
                Op::Add(a, b) => {
                    send(*a, &|k| g[k], g.len())?;
                    send(*b, &|k| g[k], g.len())?;
                }
                Op::Sub(a, b) => {
                    send(*a, &|k| g[k], g.len())?;
                    send(*b, &|k| -g[k], g.len())?;
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.vals(*a), self.vals(*b));
                    send(*a, &|k| g[k] * bv[k], g.len())?;
                    send(*b, &|k| g[k] * av[k], g.len())?;
                }
                Op::Scale(a, s) => send(*a, &|k| g[k] * s, g.len())?,
                Op::ScaleBy(v, s) => {
                    let k = self.scalar(*s);
                    let vv = self.vals(*v);
                    send(*v, &|j| g[j] * k, g.len())?;
                    let ds = dot(&g, vv);
                    send(*s, &|_| ds, 1)?;
                }
                Op::OneMinus(a) => send(*a, &|k| -g[k], g.len())?,
                Op::Sigmoid(a) => send(*a, &|k| g[k] * y[k] * (1.0 - y[k]), g.len())?,
                Op::LogSigmoid(a) => {
                    let av = self.vals(*a);
                    send(*a, &|k| g[k] * sigmoid(-av[k]), g.len())?;
                }
                Op::Tanh(a) => send(*a, &|k| g[k] * (1.0 - y[k] * y[k]), g.len())?,
                Op::Softmax(a) => {
                    let gy = dot(&g, y);
                    send(*a, &|k| y[k] * (g[k] - gy), g.len())?;
                }
                Op::Normalize(a) => {
                    let s: f64 = self.vals(*a).iter().sum();
                    let gy = dot(&g, y);
                    send(*a, &|k| (g[k] - gy) / s, g.len())?;
                }
                Op::LnFloor(a, floor) => {
                    let av = self.vals(*a);
                    send(*a, &|k| if av[k] > *floor { g[k] / av[k] } else { 0.0 }, g.len())?;
                }
                Op::Clamp(a, lo, hi) => {
                    let av = self.vals(*a);
                    send(*a, &|k| if av[k] >= *lo && av[k] <= *hi { g[k] } else { 0.0 }, g.len())?;
                }
                Op::Dot(a, b) => {
                    let (av, bv) = (self.vals(*a), self.vals(*b));
                    send(*a, &|k| g[0] * bv[k], av.len())?;
                    send(*b, &|k| g[0] * av[k], bv.len())?;
                }
                Op::Sum(a) => {
                    let n = self.vals(*a).len();
                    send(*a, &|_| g[0], n)?;
                }
                Op::Pick(a, idx) => {
                    let n = self.vals(*a).len();
                    send(*a, &|k| if k == *idx { g[0] } else { 0.0 }, n)?;
                }
                Op::Mean(parts) => {
                    let n = parts.len() as f64;
                    for &p in parts {
                        send(p, &|k| g[k] / n, g.len())?;
                    }
                }
                Op::AddN(parts) => {
                    for &p in parts {
                        send(p, &|k| g[k], g.len())?;
                    }
                }
                Op::RowScale(m, w) => {
                    let mv = self.value(*m);
                    let wv = self.vals(*w);
                    let cols = mv.cols();
                    send(*m, &|k| g[k] * wv[k / cols], mv.len())?;
                    send(*w, &|r| dot(mv.row(r), &g[r * cols..(r + 1) * cols]), wv.len())?;
                }
            }
        }
        Ok(params)
    }
}

fn param_slot<'a>(params: &'a mut Gradients, store: &ParameterStore, id: ParamId) -> &'a mut Tensor {
    params.grads[id.0].get_or_insert_with(|| {
        let (r, c) = store.get(id).shape();
        Tensor::zeros(r, c)
    })
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
