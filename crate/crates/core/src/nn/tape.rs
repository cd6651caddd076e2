//! Reverse-mode differentiation over a fixed vocabulary of matrix ops.
//!
//! Every value is a 2-D `f64` array (scalars are 1×1). A [`Tape`] records
//! ops in evaluation order; [`Tape::backward`] walks it in reverse and
//! accumulates exact gradients for every node that depends on a leaf
//! created with [`Tape::leaf`].

use std::sync::Arc;

use ndarray::{Array2, Axis, Zip};

use crate::error::{Error, Result};
use crate::features::NodeFeatures;
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Leaf,
    FeatureMatMul { x: Arc<NodeFeatures>, w: Var },
    SpMM { a: Arc<CsrMatrix>, x: Var },
    MatMul { a: Var, b: Var },
    AddRow { x: Var, bias: Var },
    Relu(Var),
    MulConst { x: Var, mask: Array2<f64> },
    RowNormalize { x: Var, norms: Vec<f64> },
    InfoNce {
        q: Var,
        positive: Array2<f64>,
        bank: Arc<Array2<f64>>,
        tau: f64,
        probs: Array2<f64>,
    },
    SoftmaxCe {
        logits: Var,
        targets: Vec<(usize, usize)>,
        probs: Array2<f64>,
    },
    Combine(Vec<(f64, Var)>),
    Sum(Var),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::FeatureMatMul { .. } => "feature_matmul",
            Op::SpMM { .. } => "spmm",
            Op::MatMul { .. } => "matmul",
            Op::AddRow { .. } => "add_row",
            Op::Relu(_) => "relu",
            Op::MulConst { .. } => "mul_const",
            Op::RowNormalize { .. } => "row_normalize",
            Op::InfoNce { .. } => "info_nce",
            Op::SoftmaxCe { .. } => "softmax_cross_entropy",
            Op::Combine(_) => "combine",
            Op::Sum(_) => "sum",
        }
    }
}

struct Node {
    value: Array2<f64>,
    op: Op,
    requires_grad: bool,
}

/// Norms below this are treated as this value when normalizing rows.
pub const NORM_EPS: f64 = 1e-12;

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads[v.0].as_ref()
    }

    /// Gradient of `v`, or zeros when the loss does not depend on it.
    pub fn take(&mut self, v: Var) -> Array2<f64> {
        self.grads[v.0]
            .take()
            .unwrap_or_else(|| Array2::zeros(self.shapes[v.0]))
    }
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

    fn push(&mut self, value: Array2<f64>, op: Op) -> Result<Var> {
        if !value.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { op: op.name() });
        }
        let requires_grad = match &op {
            Op::Leaf => false,
            Op::FeatureMatMul { w, .. } => self.needs(*w),
            Op::SpMM { x, .. }
            | Op::Relu(x)
            | Op::MulConst { x, .. }
            | Op::RowNormalize { x, .. }
            | Op::Sum(x) => self.needs(*x),
            Op::InfoNce { q, .. } => self.needs(*q),
            Op::SoftmaxCe { logits, .. } => self.needs(*logits),
            Op::MatMul { a, b } => self.needs(*a) || self.needs(*b),
            Op::AddRow { x, bias } => self.needs(*x) || self.needs(*bias),
            Op::Combine(terms) => terms.iter().any(|(_, v)| self.needs(*v)),
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A differentiable input (parameter).
    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// A non-differentiable input.
    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    /// `x · w` with `x` a constant feature matrix.
    pub fn feature_matmul(&mut self, x: Arc<NodeFeatures>, w: Var) -> Result<Var> {
        let value = x.matmul(self.value(w).view())?;
        self.push(value, Op::FeatureMatMul { x, w })
    }

    /// `a · x` with `a` a constant sparse matrix.
    pub fn spmm(&mut self, a: Arc<CsrMatrix>, x: Var) -> Result<Var> {
        let value = a.matmul(self.value(x).view())?;
        self.push(value, Op::SpMM { a, x })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.ncols() != vb.nrows() {
            return Err(Error::shape("matmul", format!("{:?} times {:?}", va.dim(), vb.dim())));
        }
        let value = va.dot(vb);
        self.push(value, Op::MatMul { a, b })
    }

    /// Adds a 1×d row vector to every row of `x`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (vx, vb) = (self.value(x), self.value(bias));
        if vb.nrows() != 1 || vb.ncols() != vx.ncols() {
            return Err(Error::shape("add_row", format!("{:?} plus row {:?}", vx.dim(), vb.dim())));
        }
        let value = vx + &vb.row(0);
        self.push(value, Op::AddRow { x, bias })
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).mapv(|v| v.max(0.0));
        self.push(value, Op::Relu(x))
    }

    /// Elementwise product with a constant (dropout masks).
    pub fn mul_const(&mut self, x: Var, mask: Array2<f64>) -> Result<Var> {
        let vx = self.value(x);
        if vx.dim() != mask.dim() {
            return Err(Error::shape("mul_const", format!("{:?} vs {:?}", vx.dim(), mask.dim())));
        }
        let value = vx * &mask;
        self.push(value, Op::MulConst { x, mask })
    }

    /// Scales every row to unit L2 norm.
    pub fn row_normalize(&mut self, x: Var) -> Result<Var> {
        let vx = self.value(x);
        let norms: Vec<f64> = vx
            .rows()
            .into_iter()
            .map(|r| r.dot(&r).sqrt().max(NORM_EPS))
            .collect();
        let mut value = vx.clone();
        for (mut row, n) in value.rows_mut().into_iter().zip(&norms) {
            row.mapv_inplace(|v| v / n);
        }
        self.push(value, Op::RowNormalize { x, norms })
    }

    /// Mean InfoNCE over the rows of `q`: row `i` is scored against its
    /// positive `positive[i]` and every row of `bank`; the positive is the
    /// target class among the `1 + K` logits `q·k / tau`.
    pub fn info_nce(
        &mut self,
        q: Var,
        positive: Array2<f64>,
        bank: Arc<Array2<f64>>,
        tau: f64,
    ) -> Result<Var> {
        let (loss, probs) = info_nce_forward(self.value(q), &positive, &bank, tau)?;
        self.push(
            Array2::from_elem((1, 1), loss),
            Op::InfoNce {
                q,
                positive,
                bank,
                tau,
                probs,
            },
        )
    }

    /// Mean softmax cross-entropy over `(row, class)` targets.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: Vec<(usize, usize)>) -> Result<Var> {
        let vl = self.value(logits);
        if targets.is_empty() {
            return Err(Error::EmptyInput("cross-entropy over an empty target set".into()));
        }
        for &(r, c) in &targets {
            if r >= vl.nrows() || c >= vl.ncols() {
                return Err(Error::shape(
                    "softmax_cross_entropy",
                    format!("target ({r}, {c}) outside logits {:?}", vl.dim()),
                ));
            }
        }
        let probs = softmax_rows(vl);
        let loss = mean_cross_entropy(vl, &targets);
        self.push(
            Array2::from_elem((1, 1), loss),
            Op::SoftmaxCe {
                logits,
                targets,
                probs,
            },
        )
    }

    /// `Σ cᵢ·xᵢ` over same-shaped inputs.
    pub fn combine(&mut self, terms: Vec<(f64, Var)>) -> Result<Var> {
        let first = terms
            .first()
            .ok_or_else(|| Error::shape("combine", "no terms"))?;
        let dim = self.value(first.1).dim();
        let mut value = Array2::zeros(dim);
        for &(c, v) in &terms {
            let vv = self.value(v);
            if vv.dim() != dim {
                return Err(Error::shape("combine", format!("{:?} vs {:?}", vv.dim(), dim)));
            }
            value.scaled_add(c, vv);
        }
        self.push(value, Op::Combine(terms))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).sum();
        self.push(Array2::from_elem((1, 1), s), Op::Sum(x))
    }

    /// Gradients of the 1×1 node `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let root = &self.nodes[loss.0];
        if root.value.dim() != (1, 1) {
            return Err(Error::shape("backward", format!("loss has shape {:?}", root.value.dim())));
        }
        let mut grads: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Array2::ones((1, 1)));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::FeatureMatMul { x, w } => {
                    let gw = x.transpose_matmul(g.view())?;
                    self.accumulate(&mut grads, *w, gw);
                }
                Op::SpMM { a, x } => {
                    if self.needs(*x) {
                        let gx = a.transpose_matmul(g.view())?;
                        self.accumulate(&mut grads, *x, gx);
                    }
                }
                Op::MatMul { a, b } => {
                    if self.needs(*a) {
                        let ga = g.dot(&self.value(*b).t());
                        self.accumulate(&mut grads, *a, ga);
                    }
                    if self.needs(*b) {
                        let gb = self.value(*a).t().dot(&g);
                        self.accumulate(&mut grads, *b, gb);
                    }
                }
                Op::AddRow { x, bias } => {
                    if self.needs(*bias) {
                        let gb = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                        self.accumulate(&mut grads, *bias, gb);
                    }
                    if self.needs(*x) {
                        self.accumulate(&mut grads, *x, g);
                    }
                }
                Op::Relu(x) => {
                    let mut gx = g;
                    Zip::from(&mut gx)
                        .and(&node.value)
                        .for_each(|gv, &y| {
                            if y <= 0.0 {
                                *gv = 0.0
                            }
                        });
                    self.accumulate(&mut grads, *x, gx);
                }
                Op::MulConst { x, mask } => {
                    let gx = g * mask;
                    self.accumulate(&mut grads, *x, gx);
                }
                Op::RowNormalize { x, norms } => {
                    let y = &node.value;
                    let mut gx = g;
                    for ((mut grow, yrow), n) in gx.rows_mut().into_iter().zip(y.rows()).zip(norms) {
                        let proj = grow.dot(&yrow);
                        Zip::from(&mut grow)
                            .and(&yrow)
                            .for_each(|gv, &yv| *gv = (*gv - yv * proj) / n);
                    }
                    self.accumulate(&mut grads, *x, gx);
                }
                Op::InfoNce {
                    q,
                    positive,
                    bank,
                    tau,
                    probs,
                } => {
                    let n = positive.nrows() as f64;
                    let scale = g[[0, 0]] / (n * tau);
                    let neg = probs.slice(ndarray::s![.., 1..]);
                    let mut gq = if bank.nrows() > 0 {
                        neg.dot(bank.as_ref())
                    } else {
                        Array2::zeros(positive.dim())
                    };
                    for ((mut grow, prow), p0) in gq
                        .rows_mut()
                        .into_iter()
                        .zip(positive.rows())
                        .zip(probs.column(0))
                    {
                        grow.scaled_add(p0 - 1.0, &prow);
                    }
                    gq.mapv_inplace(|v| v * scale);
                    self.accumulate(&mut grads, *q, gq);
                }
                Op::SoftmaxCe {
                    logits,
                    targets,
                    probs,
                } => {
                    let scale = g[[0, 0]] / targets.len() as f64;
                    let mut gl = Array2::zeros(probs.dim());
                    for &(r, c) in targets {
                        let mut row = gl.row_mut(r);
                        row.scaled_add(scale, &probs.row(r));
                        row[c] -= scale;
                    }
                    self.accumulate(&mut grads, *logits, gl);
                }
                Op::Combine(terms) => {
                    for &(c, v) in terms {
                        if self.needs(v) {
                            self.accumulate(&mut grads, v, g.mapv(|x| x * c));
                        }
                    }
                }
                Op::Sum(x) => {
                    let dim = self.value(*x).dim();
                    self.accumulate(&mut grads, *x, Array2::from_elem(dim, g[[0, 0]]));
                }
            }
        }
        let shapes = self.nodes.iter().map(|n| n.value.dim()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn accumulate(&self, grads: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
        if !self.needs(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => *acc += &g,
            slot @ None => *slot = Some(g),
        }
    }
}

fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    out
}

fn log_sum_exp(row: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = row.clone().fold(f64::NEG_INFINITY, f64::max);
    m + row.map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn mean_cross_entropy(logits: &Array2<f64>, targets: &[(usize, usize)]) -> f64 {
    let total: f64 = targets
        .iter()
        .map(|&(r, c)| {
            let row = logits.row(r);
            log_sum_exp(row.iter().copied()) - row[c]
        })
        .sum();
    total / targets.len() as f64
}

/// Forward pass of InfoNCE. Returns the mean loss and the per-row softmax
/// over `[positive, bank…]` logits.
pub(crate) fn info_nce_forward(
    q: &Array2<f64>,
    positive: &Array2<f64>,
    bank: &Array2<f64>,
    tau: f64,
) -> Result<(f64, Array2<f64>)> {
    if !(tau > 0.0) {
        return Err(Error::InvalidConfig(format!("temperature must be positive, got {tau}")));
    }
    if q.dim() != positive.dim() {
        return Err(Error::shape("info_nce", format!("queries {:?} vs positives {:?}", q.dim(), positive.dim())));
    }
    if bank.nrows() > 0 && bank.ncols() != q.ncols() {
        return Err(Error::shape("info_nce", format!("queries {:?} vs bank {:?}", q.dim(), bank.dim())));
    }
    let n = q.nrows();
    if n == 0 {
        return Err(Error::EmptyInput("InfoNCE over an empty batch".into()));
    }
    let k = bank.nrows();
    let mut logits = Array2::zeros((n, k + 1));
    if k > 0 {
        logits.slice_mut(ndarray::s![.., 1..]).assign(&q.dot(&bank.t()));
    }
    for i in 0..n {
        logits[[i, 0]] = q.row(i).dot(&positive.row(i));
    }
    logits.mapv_inplace(|v| v / tau);
    let mut total = 0.0;
    for row in logits.rows() {
        total += log_sum_exp(row.iter().copied()) - row[0];
    }
    let probs = softmax_rows(&logits);
    Ok((total / n as f64, probs))
}
