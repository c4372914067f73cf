//! Reverse-mode differentiation over a linear record of primitive ops.
//!
//! A [`Tape`] is built fresh for every forward pass. Parameters enter as
//! leaves created with [`Tape::param`]; everything else is either a constant
//! or the output of a recorded op. Because nodes are only ever appended, the
//! record is topologically ordered by construction and [`Tape::backward`]
//! is a single reverse sweep.

use super::tensor::{gemm_acc, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    AddBias(Var, Var),
    Tanh(Var),
    Exp(Var),
    Clamp(Var, f64, f64),
    Sum(Var),
    Mean(Var),
    Mse(Var, Var),
    RowCosine {
        a: Var,
        b: Var,
        // per row: (dot, clamped |a|, clamped |b|, |a| > eps, |b| > eps)
        saved: Vec<(f64, f64, f64, bool, bool)>,
    },
    MixTokens {
        h: Var,
        m: Var,
        tokens: usize,
    },
    Reshape(Var),
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    /// Accumulated gradient; only populated for parameter leaves.
    grad: Option<Vec<f64>>,
}

/// Ordered record of primitive operations.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Differentiable leaf with a zeroed gradient slot.
    pub fn param(&mut self, value: Tensor) -> Var {
        let n = value.numel();
        let v = self.push(value, Op::Leaf, true);
        self.nodes[v.0].grad = Some(vec![0.0; n]);
        v
    }

    /// Leaf that gradients never flow into.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.item()
    }

    /// Accumulated gradient of a parameter leaf, `None` for other nodes.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            if let Some(g) = n.grad.as_mut() {
                g.iter_mut().for_each(|x| *x = 0.0);
            }
        }
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::dim(op, sa, sb));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm_acc(
            self.value(a).data(),
            self.value(b).data(),
            &mut out,
            m,
            k,
            n,
        );
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b), rg))
    }

    fn zip_with(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(shape, data)?, op, rg))
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = self.value(a);
        let data = t.data().iter().map(|&x| f(x)).collect();
        let value = Tensor::new(t.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(a);
        self.push(value, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.map(a, |x| s * x, Op::Scale(a, s))
    }

    /// `a + c` for a scalar constant `c`.
    pub fn offset(&mut self, a: Var, c: f64) -> Var {
        self.map(a, |x| x + c, Op::Offset(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.map(a, f64::exp, Op::Exp(a))
    }

    /// Elementwise clamp; the gradient is zero where the input is clipped.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.map(a, |x| x.clamp(lo, hi), Op::Clamp(a, lo, hi))
    }

    /// Adds a `1 × n` row to every row of an `m × n` matrix.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(bias));
        if sa.len() != 2 || sb != [1, sa[1]] {
            return Err(Error::dim("add_bias", sa, sb));
        }
        let n = sa[1];
        let b = self.value(bias).data();
        let data = self
            .value(a)
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x + b[i % n])
            .collect();
        let shape = sa.to_vec();
        let rg = self.rg(a) || self.rg(bias);
        Ok(self.push(Tensor::new(shape, data)?, Op::AddBias(a, bias), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let s = t.data().iter().sum::<f64>() / t.numel() as f64;
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Mean(a), rg)
    }

    /// Mean of squared differences over all elements.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        self.same_shape("mse", pred, target)?;
        let (p, q) = (self.value(pred).data(), self.value(target).data());
        let s = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p.len() as f64;
        let rg = self.rg(pred) || self.rg(target);
        Ok(self.push(Tensor::scalar(s), Op::Mse(pred, target), rg))
    }

    /// Row-wise cosine similarity `⟨a,b⟩ / (max(|a|,eps)·max(|b|,eps))`,
    /// returned as an `m × 1` column.
    pub fn row_cosine(&mut self, a: Var, b: Var, eps: f64) -> Result<Var> {
        self.same_shape("row_cosine", a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let rows = ta.rows();
        let mut saved = Vec::with_capacity(rows);
        let mut out = Vec::with_capacity(rows);
        for r in 0..rows {
            let (x, y) = (ta.row_slice(r), tb.row_slice(r));
            let dot: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
            let na = x.iter().map(|p| p * p).sum::<f64>().sqrt();
            let nb = y.iter().map(|p| p * p).sum::<f64>().sqrt();
            let (ca, cb) = (na.max(eps), nb.max(eps));
            out.push(dot / (ca * cb));
            saved.push((dot, ca, cb, na > eps, nb > eps));
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(
            Tensor::matrix(rows, 1, out)?,
            Op::RowCosine { a, b, saved },
            rg,
        ))
    }

    /// Cosine similarity of two equal-length tensors treated as flat vectors.
    pub fn cosine_similarity(&mut self, a: Var, b: Var, eps: f64) -> Result<Var> {
        self.same_shape("cosine_similarity", a, b)?;
        let n = self.value(a).numel();
        let a = self.reshape(a, &[1, n])?;
        let b = self.reshape(b, &[1, n])?;
        self.row_cosine(a, b, eps)
    }

    /// Mixes rows within consecutive groups of `tokens` rows:
    /// `out[g·S + s] = Σ_s' m[s, s'] · h[g·S + s']`.
    pub fn mix_tokens(&mut self, h: Var, m: Var, tokens: usize) -> Result<Var> {
        let (sh, sm) = (self.shape(h), self.shape(m));
        if sh.len() != 2 || sm != [tokens, tokens] || sh[0] % tokens != 0 {
            return Err(Error::dim("mix_tokens", sh, sm));
        }
        let (rows, d) = (sh[0], sh[1]);
        let (hv, mv) = (self.value(h).data(), self.value(m).data());
        let mut out = vec![0.0; rows * d];
        for g in 0..rows / tokens {
            let base = g * tokens;
            gemm_acc(
                mv,
                &hv[base * d..(base + tokens) * d],
                &mut out[base * d..(base + tokens) * d],
                tokens,
                tokens,
                d,
            );
        }
        let rg = self.rg(h) || self.rg(m);
        Ok(self.push(
            Tensor::matrix(rows, d, out)?,
            Op::MixTokens { h, m, tokens },
            rg,
        ))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a).clone().reshaped(shape)?;
        let rg = self.rg(a);
        Ok(self.push(t, Op::Reshape(a), rg))
    }

    /// Propagates `∂loss/∂node` backwards and accumulates into the gradient
    /// slots of parameter leaves. Intermediate gradients are not retained, so
    /// repeated calls accumulate exactly once per call.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            let op = self.nodes[i].op.clone();
            match op {
                Op::Leaf => {
                    if let Some(acc) = self.nodes[i].grad.as_mut() {
                        acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                    }
                }
                Op::MatMul(a, b) => {
                    let (sa, sb) = (self.shape(a), self.shape(b));
                    let (m, k, n) = (sa[0], sa[1], sb[1]);
                    if self.rg(a) {
                        let bv = self.value(b).data();
                        let ga = accum(&mut grads, a, m * k);
                        for r in 0..m {
                            for p in 0..k {
                                let mut s = 0.0;
                                for j in 0..n {
                                    s += g[r * n + j] * bv[p * n + j];
                                }
                                ga[r * k + p] += s;
                            }
                        }
                    }
                    if self.rg(b) {
                        let av = self.value(a).data();
                        let gb = accum(&mut grads, b, k * n);
                        for r in 0..m {
                            for p in 0..k {
                                let arp = av[r * k + p];
                                let gb_row = &mut gb[p * n..(p + 1) * n];
                                for (o, &gv) in gb_row.iter_mut().zip(&g[r * n..(r + 1) * n]) {
                                    *o += arp * gv;
                                }
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    self.pass(&mut grads, a, &g, 1.0);
                    self.pass(&mut grads, b, &g, 1.0);
                }
                Op::Sub(a, b) => {
                    self.pass(&mut grads, a, &g, 1.0);
                    self.pass(&mut grads, b, &g, -1.0);
                }
                Op::Mul(a, b) => {
                    if self.rg(a) {
                        let bv = self.value(b).data();
                        let ga = accum(&mut grads, a, g.len());
                        for ((o, &gv), &y) in ga.iter_mut().zip(&g).zip(bv) {
                            *o += gv * y;
                        }
                    }
                    if self.rg(b) {
                        let av = self.value(a).data();
                        let gb = accum(&mut grads, b, g.len());
                        for ((o, &gv), &x) in gb.iter_mut().zip(&g).zip(av) {
                            *o += gv * x;
                        }
                    }
                }
                Op::Scale(a, s) => self.pass(&mut grads, a, &g, s),
                Op::Offset(a) | Op::Reshape(a) => self.pass(&mut grads, a, &g, 1.0),
                Op::AddBias(a, b) => {
                    self.pass(&mut grads, a, &g, 1.0);
                    if self.rg(b) {
                        let n = self.value(b).numel();
                        let gb = accum(&mut grads, b, n);
                        for (idx, &gv) in g.iter().enumerate() {
                            gb[idx % n] += gv;
                        }
                    }
                }
                Op::Tanh(a) => {
                    if self.rg(a) {
                        let y = self.nodes[i].value.data();
                        let ga = accum(&mut grads, a, g.len());
                        for ((o, &gv), &yv) in ga.iter_mut().zip(&g).zip(y) {
                            *o += gv * (1.0 - yv * yv);
                        }
                    }
                }
                Op::Exp(a) => {
                    if self.rg(a) {
                        let y = self.nodes[i].value.data();
                        let ga = accum(&mut grads, a, g.len());
                        for ((o, &gv), &yv) in ga.iter_mut().zip(&g).zip(y) {
                            *o += gv * yv;
                        }
                    }
                }
                Op::Clamp(a, lo, hi) => {
                    if self.rg(a) {
                        let x = self.value(a).data();
                        let ga = accum(&mut grads, a, g.len());
                        for ((o, &gv), &xv) in ga.iter_mut().zip(&g).zip(x) {
                            if xv >= lo && xv <= hi {
                                *o += gv;
                            }
                        }
                    }
                }
                Op::Sum(a) => {
                    if self.rg(a) {
                        let n = self.value(a).numel();
                        accum(&mut grads, a, n).iter_mut().for_each(|o| *o += g[0]);
                    }
                }
                Op::Mean(a) => {
                    if self.rg(a) {
                        let n = self.value(a).numel();
                        let s = g[0] / n as f64;
                        accum(&mut grads, a, n).iter_mut().for_each(|o| *o += s);
                    }
                }
                Op::Mse(p, q) => {
                    let n = self.value(p).numel();
                    let diff: Vec<f64> = self
                        .value(p)
                        .data()
                        .iter()
                        .zip(self.value(q).data())
                        .map(|(a, b)| 2.0 * (a - b) / n as f64 * g[0])
                        .collect();
                    self.pass(&mut grads, p, &diff, 1.0);
                    self.pass(&mut grads, q, &diff, -1.0);
                }
                Op::RowCosine { a, b, saved } => {
                    let d = self.value(a).cols();
                    let (av, bv) = (self.value(a).data(), self.value(b).data());
                    let mut ga = vec![0.0; av.len()];
                    let mut gb = vec![0.0; bv.len()];
                    for (r, &(dot, ca, cb, a_live, b_live)) in saved.iter().enumerate() {
                        let gr = g[r];
                        let inv = 1.0 / (ca * cb);
                        for j in 0..d {
                            let (x, y) = (av[r * d + j], bv[r * d + j]);
                            let mut da = y * inv;
                            let mut db = x * inv;
                            if a_live {
                                da -= dot * x * inv / (ca * ca);
                            }
                            if b_live {
                                db -= dot * y * inv / (cb * cb);
                            }
                            ga[r * d + j] = gr * da;
                            gb[r * d + j] = gr * db;
                        }
                    }
                    self.pass(&mut grads, a, &ga, 1.0);
                    self.pass(&mut grads, b, &gb, 1.0);
                }
                Op::MixTokens { h, m, tokens } => {
                    let d = self.value(h).cols();
                    let rows = self.value(h).rows();
                    if self.rg(h) {
                        let mv = self.value(m).data();
                        let gh = accum(&mut grads, h, rows * d);
                        for grp in 0..rows / tokens {
                            let base = grp * tokens;
                            for s in 0..tokens {
                                for s2 in 0..tokens {
                                    let w = mv[s * tokens + s2];
                                    for j in 0..d {
                                        gh[(base + s2) * d + j] += w * g[(base + s) * d + j];
                                    }
                                }
                            }
                        }
                    }
                    if self.rg(m) {
                        let hv = self.value(h).data();
                        let gm = accum(&mut grads, m, tokens * tokens);
                        for grp in 0..rows / tokens {
                            let base = grp * tokens;
                            for s in 0..tokens {
                                for s2 in 0..tokens {
                                    let mut acc = 0.0;
                                    for j in 0..d {
                                        acc += g[(base + s) * d + j] * hv[(base + s2) * d + j];
                                    }
                                    gm[s * tokens + s2] += acc;
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn pass(&self, grads: &mut [Option<Vec<f64>>], to: Var, g: &[f64], s: f64) {
        if !self.rg(to) {
            return;
        }
        let acc = accum(grads, to, g.len());
        for (o, &gv) in acc.iter_mut().zip(g) {
            *o += s * gv;
        }
    }
}

fn accum(grads: &mut [Option<Vec<f64>>], v: Var, n: usize) -> &mut Vec<f64> {
    grads[v.0].get_or_insert_with(|| vec![0.0; n])
}
