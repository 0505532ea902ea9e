//! Minimal reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every value produced during a forward pass together
//! with the operation that produced it. [`Tape::backward`] walks the record in
//! reverse and accumulates adjoints; only nodes that depend on a parameter
//! carry gradients.

use crate::error::{Error, Result};
use crate::numeric::ops::{self, leaky_relu_deriv};
use crate::numeric::{Matrix, ParamId, ParameterSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Const,
    Param(ParamId),
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    MulConst(Var, Matrix),
    RowScale(Var, Vec<f64>),
    ColScale(Var, Vec<f64>),
    LeakyRelu(Var, f64),
    Tanh(Var),
    MaskedSoftmax(Var),
    /// `out[i][k] = a[i] + b[k]` for column vectors `a` (n×1), `b` (m×1).
    OuterSum(Var, Var),
    /// `out[j][k] = a[k]` for a column vector `a`, repeated over `rows` rows.
    BroadcastRows(Var),
    ConcatCols(Vec<Var>),
    RowBlock(Var, usize),
    GatherRows(Var, Vec<usize>),
    ScatterRows(Vec<(Var, Vec<usize>)>),
    AddRowVector(Var, Var),
    SqDist(Var, Var),
    Dce {
        dist: Var,
        labels: Vec<usize>,
        per_class: usize,
        probs: Matrix,
    },
    SoftmaxCe {
        logits: Var,
        labels: Vec<usize>,
        probs: Matrix,
    },
    MeanSquare(Var),
    SumSquare(Var),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    tracked: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints for every tracked node of a tape.
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads[v.0].as_ref()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.get(0, 0)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    pub fn constant(&mut self, m: Matrix) -> Var {
        self.push(m, Op::Const, false)
    }

    pub fn param(&mut self, params: &ParameterSet, id: ParamId) -> Var {
        self.push(params.value(id).clone(), Op::Param(id), true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let t = self.tracked(a) || self.tracked(b);
        Ok(self.push(value, Op::MatMul(a, b), t))
    }

    /// Same value and gradient as [`Tape::matmul`], computed with
    /// [`ops::weighted_rows`] so the product does not depend on the order of
    /// the summed index.
    pub fn attend(&mut self, weights: Var, values: Var) -> Result<Var> {
        let value = ops::weighted_rows(self.value(weights), self.value(values))?;
        let t = self.tracked(weights) || self.tracked(values);
        Ok(self.push(value, Op::MatMul(weights, values), t))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        let t = self.tracked(a);
        self.push(value, Op::Transpose(a), t)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        let t = self.tracked(a) || self.tracked(b);
        Ok(self.push(value, Op::Add(a, b), t))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        let t = self.tracked(a) || self.tracked(b);
        Ok(self.push(value, Op::Sub(a, b), t))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).scale(s);
        let t = self.tracked(a);
        self.push(value, Op::Scale(a, s), t)
    }

    /// Elementwise product with a constant matrix.
    pub fn mul_const(&mut self, a: Var, c: Matrix) -> Result<Var> {
        let value = self.value(a).hadamard(&c)?;
        let t = self.tracked(a);
        Ok(self.push(value, Op::MulConst(a, c), t))
    }

    /// Multiplies row `i` by `s[i]`.
    pub fn row_scale(&mut self, a: Var, s: Vec<f64>) -> Result<Var> {
        let x = self.value(a);
        if s.len() != x.rows() {
            return Err(Error::Dimension {
                op: "row_scale",
                lhs: x.shape(),
                rhs: (s.len(), 1),
            });
        }
        let value = Matrix::from_fn(x.rows(), x.cols(), |i, j| x.get(i, j) * s[i]);
        let t = self.tracked(a);
        Ok(self.push(value, Op::RowScale(a, s), t))
    }

    /// Multiplies column `j` by `s[j]`.
    pub fn col_scale(&mut self, a: Var, s: Vec<f64>) -> Result<Var> {
        let x = self.value(a);
        if s.len() != x.cols() {
            return Err(Error::Dimension {
                op: "col_scale",
                lhs: x.shape(),
                rhs: (1, s.len()),
            });
        }
        let value = Matrix::from_fn(x.rows(), x.cols(), |i, j| x.get(i, j) * s[j]);
        let t = self.tracked(a);
        Ok(self.push(value, Op::ColScale(a, s), t))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let value = ops::leaky_relu(self.value(a), slope);
        let t = self.tracked(a);
        self.push(value, Op::LeakyRelu(a, slope), t)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        let t = self.tracked(a);
        self.push(value, Op::Tanh(a), t)
    }

    pub fn masked_softmax(&mut self, logits: Var, mask: &Matrix, allow_empty: bool) -> Result<Var> {
        let value = if allow_empty {
            ops::masked_row_softmax_allow_empty(self.value(logits), mask)?
        } else {
            ops::masked_row_softmax(self.value(logits), mask)?
        };
        let t = self.tracked(logits);
        Ok(self.push(value, Op::MaskedSoftmax(logits), t))
    }

    pub fn outer_sum(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != 1 || bv.cols() != 1 {
            return Err(Error::Dimension {
                op: "outer_sum",
                lhs: av.shape(),
                rhs: bv.shape(),
            });
        }
        let value = Matrix::from_fn(av.rows(), bv.rows(), |i, k| av.get(i, 0) + bv.get(k, 0));
        let t = self.tracked(a) || self.tracked(b);
        Ok(self.push(value, Op::OuterSum(a, b), t))
    }

    /// `rows × len(a)` matrix whose every row is `aᵀ`.
    pub fn broadcast_rows(&mut self, a: Var, rows: usize) -> Result<Var> {
        let av = self.value(a);
        if av.cols() != 1 {
            return Err(Error::Dimension {
                op: "broadcast_rows",
                lhs: av.shape(),
                rhs: (rows, 1),
            });
        }
        let value = Matrix::from_fn(rows, av.rows(), |_, k| av.get(k, 0));
        let t = self.tracked(a);
        Ok(self.push(value, Op::BroadcastRows(a), t))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let mats: Vec<&Matrix> = parts.iter().map(|&v| self.value(v)).collect();
        let value = Matrix::hconcat(&mats)?;
        let t = parts.iter().any(|&v| self.tracked(v));
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), t))
    }

    /// Rows `start..start+len`.
    pub fn row_block(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let x = self.value(a);
        if start + len > x.rows() {
            return Err(Error::IndexOutOfRange {
                index: start + len,
                len: x.rows(),
            });
        }
        let idx: Vec<usize> = (start..start + len).collect();
        let value = x.select_rows(&idx)?;
        let t = self.tracked(a);
        Ok(self.push(value, Op::RowBlock(a, start), t))
    }

    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let value = self.value(a).select_rows(indices)?;
        let t = self.tracked(a);
        Ok(self.push(value, Op::GatherRows(a, indices.to_vec()), t))
    }

    /// Builds an `n_rows × cols` matrix where row `idx[r]` of the output is
    /// row `r` of the matching part. Rows not covered stay zero.
    pub fn scatter_rows(&mut self, parts: Vec<(Var, Vec<usize>)>, n_rows: usize) -> Result<Var> {
        let cols = parts.first().map_or(0, |(v, _)| self.value(*v).cols());
        let mut value = Matrix::zeros(n_rows, cols);
        for (v, idx) in &parts {
            let src = self.value(*v);
            if src.cols() != cols || src.rows() != idx.len() {
                return Err(Error::Dimension {
                    op: "scatter_rows",
                    lhs: (idx.len(), cols),
                    rhs: src.shape(),
                });
            }
            for (r, &dst) in idx.iter().enumerate() {
                if dst >= n_rows {
                    return Err(Error::IndexOutOfRange {
                        index: dst,
                        len: n_rows,
                    });
                }
                value.row_mut(dst).copy_from_slice(src.row(r));
            }
        }
        let t = parts.iter().any(|(v, _)| self.tracked(*v));
        Ok(self.push(value, Op::ScatterRows(parts), t))
    }

    /// Adds the `1×c` row vector `b` to every row of `a`.
    pub fn add_row_vector(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if bv.rows() != 1 || bv.cols() != av.cols() {
            return Err(Error::Dimension {
                op: "add_row_vector",
                lhs: av.shape(),
                rhs: bv.shape(),
            });
        }
        let value = Matrix::from_fn(av.rows(), av.cols(), |i, j| av.get(i, j) + bv.get(0, j));
        let t = self.tracked(a) || self.tracked(b);
        Ok(self.push(value, Op::AddRowVector(a, b), t))
    }

    pub fn sq_dist(&mut self, z: Var, m: Var) -> Result<Var> {
        let value = ops::pairwise_sq_dist(self.value(z), self.value(m))?;
        let t = self.tracked(z) || self.tracked(m);
        Ok(self.push(value, Op::SqDist(z, m), t))
    }

    /// Distance-based cross-entropy. `dist` holds squared distances from each
    /// sample to all `c·k` prototypes (prototype `(i, j)` in column `i·k + j`).
    /// Logits are negative distances; a class's probability is the softmax
    /// mass of its `k` prototypes. Returns the mean negative log-likelihood.
    pub fn dce_loss(&mut self, dist: Var, labels: &[usize], per_class: usize) -> Result<Var> {
        let d = self.value(dist);
        check_labels(d, labels, per_class)?;
        let probs = prototype_softmax(d);
        let n = labels.len() as f64;
        let mut total = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            let row = d.row(i);
            let own = &row[y * per_class..(y + 1) * per_class];
            total += neg_log_sum_exp(row) - neg_log_sum_exp(own);
        }
        let value = Matrix::filled(1, 1, total / n);
        let t = self.tracked(dist);
        Ok(self.push(
            value,
            Op::Dce {
                dist,
                labels: labels.to_vec(),
                per_class,
                probs,
            },
            t,
        ))
    }

    /// Mean softmax cross-entropy over rows of `logits`.
    pub fn softmax_ce_loss(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let l = self.value(logits);
        check_labels(l, labels, 1)?;
        let probs = ops::masked_row_softmax(l, &Matrix::ones(l.rows(), l.cols()))?;
        let n = labels.len() as f64;
        let total: f64 = labels
            .iter()
            .enumerate()
            .map(|(i, &y)| log_sum_exp(l.row(i)) - l.get(i, y))
            .sum();
        let value = Matrix::filled(1, 1, total / n);
        let t = self.tracked(logits);
        Ok(self.push(
            value,
            Op::SoftmaxCe {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            t,
        ))
    }

    pub fn mean_square(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let value = Matrix::filled(1, 1, x.frobenius_sq() / x.len() as f64);
        let t = self.tracked(a);
        self.push(value, Op::MeanSquare(a), t)
    }

    pub fn sum_square(&mut self, a: Var) -> Var {
        let value = Matrix::filled(1, 1, self.value(a).frobenius_sq());
        let t = self.tracked(a);
        self.push(value, Op::SumSquare(a), t)
    }

    /// Reverse sweep from the scalar `root`.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let rv = self.value(root);
        if rv.shape() != (1, 1) {
            return Err(Error::Dimension {
                op: "backward",
                lhs: rv.shape(),
                rhs: (1, 1),
            });
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Matrix::ones(1, 1));

        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.tracked {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Matrix, grads: &mut [Option<Matrix>]) -> Result<()> {
        let mut send = |v: Var, contrib: Matrix| -> Result<()> {
            if !self.tracked(v) {
                return Ok(());
            }
            match &mut grads[v.0] {
                Some(acc) => acc.add_assign(&contrib),
                slot @ None => {
                    *slot = Some(contrib);
                    Ok(())
                }
            }
        };
        match &node.op {
            Op::Const | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.tracked(*a) {
                    send(*a, g.matmul(&bv.transpose())?)?;
                }
                if self.tracked(*b) {
                    send(*b, av.transpose().matmul(g)?)?;
                }
            }
            Op::Transpose(a) => send(*a, g.transpose())?,
            Op::Add(a, b) => {
                send(*a, g.clone())?;
                send(*b, g.clone())?;
            }
            Op::Sub(a, b) => {
                send(*a, g.clone())?;
                send(*b, g.scale(-1.0))?;
            }
            Op::Scale(a, s) => send(*a, g.scale(*s))?,
            Op::MulConst(a, c) => send(*a, g.hadamard(c)?)?,
            Op::RowScale(a, s) => {
                send(*a, Matrix::from_fn(g.rows(), g.cols(), |i, j| g.get(i, j) * s[i]))?
            }
            Op::ColScale(a, s) => {
                send(*a, Matrix::from_fn(g.rows(), g.cols(), |i, j| g.get(i, j) * s[j]))?
            }
            Op::LeakyRelu(a, slope) => {
                let x = self.value(*a);
                send(*a, g.zip_map(x, "leaky_relu", |gv, xv| gv * leaky_relu_deriv(xv, *slope))?)?
            }
            Op::Tanh(a) => {
                let y = &node.value;
                send(*a, g.zip_map(y, "tanh", |gv, yv| gv * (1.0 - yv * yv))?)?
            }
            Op::MaskedSoftmax(a) => send(*a, ops::softmax_backward(&node.value, g))?,
            Op::OuterSum(a, b) => {
                send(*a, Matrix::column(&g.row_sums()))?;
                send(*b, Matrix::column(&g.col_sums()))?;
            }
            Op::BroadcastRows(a) => send(*a, Matrix::column(&g.col_sums()))?,
            Op::ConcatCols(parts) => {
                let mut start = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    send(p, g.col_block(start, w))?;
                    start += w;
                }
            }
            Op::RowBlock(a, start) => {
                let x = self.value(*a);
                let mut full = Matrix::zeros(x.rows(), x.cols());
                for r in 0..g.rows() {
                    full.row_mut(start + r).copy_from_slice(g.row(r));
                }
                send(*a, full)?;
            }
            Op::GatherRows(a, idx) => {
                let x = self.value(*a);
                let mut full = Matrix::zeros(x.rows(), x.cols());
                for (r, &src) in idx.iter().enumerate() {
                    for (f, gv) in full.row_mut(src).iter_mut().zip(g.row(r)) {
                        *f += gv;
                    }
                }
                send(*a, full)?;
            }
            Op::ScatterRows(parts) => {
                for (v, idx) in parts {
                    send(*v, g.select_rows(idx)?)?;
                }
            }
            Op::AddRowVector(a, b) => {
                send(*a, g.clone())?;
                send(*b, Matrix::from_vec(1, g.cols(), g.col_sums())?)?;
            }
            Op::SqDist(z, m) => {
                // d(i,j) = ‖z_i − m_j‖²: ∂/∂z_i = Σ_j 2 g_ij (z_i − m_j), ∂/∂m_j = −Σ_i 2 g_ij (z_i − m_j)
                let (zv, mv) = (self.value(*z), self.value(*m));
                let row_g = g.row_sums();
                let col_g = g.col_sums();
                let gm = g.matmul(mv)?;
                let gtz = g.transpose().matmul(zv)?;
                if self.tracked(*z) {
                    send(
                        *z,
                        Matrix::from_fn(zv.rows(), zv.cols(), |i, t| {
                            2.0 * (row_g[i] * zv.get(i, t) - gm.get(i, t))
                        }),
                    )?;
                }
                if self.tracked(*m) {
                    send(
                        *m,
                        Matrix::from_fn(mv.rows(), mv.cols(), |j, t| {
                            2.0 * (col_g[j] * mv.get(j, t) - gtz.get(j, t))
                        }),
                    )?;
                }
            }
            Op::Dce {
                dist,
                labels,
                per_class,
                probs,
            } => {
                // ∂L/∂logit_j = (q_j − [j∈y] q_j / p_y) / N and logit = −dist.
                let scale = g.get(0, 0) / labels.len() as f64;
                let mut gd = Matrix::zeros(probs.rows(), probs.cols());
                for (i, &y) in labels.iter().enumerate() {
                    let q = probs.row(i);
                    let block = y * per_class..(y + 1) * per_class;
                    let py: f64 = q[block.clone()].iter().sum();
                    for (j, out) in gd.row_mut(i).iter_mut().enumerate() {
                        let mut dl = q[j];
                        if block.contains(&j) {
                            dl -= q[j] / py;
                        }
                        *out = -dl * scale;
                    }
                }
                send(*dist, gd)?;
            }
            Op::SoftmaxCe {
                logits,
                labels,
                probs,
            } => {
                let scale = g.get(0, 0) / labels.len() as f64;
                let mut gl = probs.scale(scale);
                for (i, &y) in labels.iter().enumerate() {
                    let v = gl.get(i, y) - scale;
                    gl.set(i, y, v);
                }
                send(*logits, gl)?;
            }
            Op::MeanSquare(a) => {
                let x = self.value(*a);
                let s = 2.0 * g.get(0, 0) / x.len() as f64;
                send(*a, x.scale(s))?;
            }
            Op::SumSquare(a) => {
                let x = self.value(*a);
                send(*a, x.scale(2.0 * g.get(0, 0)))?;
            }
        }
        Ok(())
    }

    /// Adds the adjoints of every parameter leaf into `params[..].grad`.
    pub fn accumulate_param_grads(&self, grads: &Gradients, params: &mut ParameterSet) -> Result<()> {
        for (idx, node) in self.nodes.iter().enumerate() {
            if let Op::Param(id) = node.op {
                if let Some(g) = &grads.grads[idx] {
                    params.get_mut(id).grad.add_assign(g)?;
                }
            }
        }
        Ok(())
    }
}

fn check_labels(m: &Matrix, labels: &[usize], per_class: usize) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::EmptySplit("loss labels"));
    }
    if m.rows() != labels.len() {
        return Err(Error::Dimension {
            op: "loss",
            lhs: m.shape(),
            rhs: (labels.len(), 1),
        });
    }
    if per_class == 0 || !m.cols().is_multiple_of(per_class) {
        return Err(Error::Config(format!(
            "{} columns not divisible into groups of {per_class}",
            m.cols()
        )));
    }
    let classes = m.cols() / per_class;
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::IndexOutOfRange {
            index: bad,
            len: classes,
        });
    }
    Ok(())
}

/// Softmax of `−dist` over every prototype column.
pub(crate) fn prototype_softmax(dist: &Matrix) -> Matrix {
    let neg = dist.scale(-1.0);
    ops::masked_row_softmax(&neg, &Matrix::ones(dist.rows(), dist.cols()))
        .expect("full mask never has an empty row")
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `log Σ exp(−d)`.
fn neg_log_sum_exp(ds: &[f64]) -> f64 {
    let min = ds.iter().copied().fold(f64::INFINITY, f64::min);
    -min + ds.iter().map(|d| (min - d).exp()).sum::<f64>().ln()
}
