//! Elementwise activations, masked softmax and squared distances.

use crate::error::{Error, Result};
use crate::numeric::Matrix;
use crate::parallel;

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

#[inline]
pub fn leaky_relu_scalar(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

/// Derivative of LeakyReLU; the subgradient at exactly 0 is `slope`.
#[inline]
pub fn leaky_relu_deriv(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        slope
    }
}

pub fn leaky_relu(x: &Matrix, slope: f64) -> Matrix {
    x.map(|v| leaky_relu_scalar(v, slope))
}

/// Row-wise softmax restricted to entries where `mask` is nonzero. Masked-out
/// entries are exactly 0. Fails on a row with no masked-in entry.
pub fn masked_row_softmax(logits: &Matrix, mask: &Matrix) -> Result<Matrix> {
    softmax_impl(logits, mask, false)
}

/// Like [`masked_row_softmax`] but an all-zero mask row yields an all-zero
/// output row instead of an error.
pub fn masked_row_softmax_allow_empty(logits: &Matrix, mask: &Matrix) -> Result<Matrix> {
    softmax_impl(logits, mask, true)
}

/// Sum of `terms` in ascending order. The result depends only on the
/// multiset of values, not on the order they were listed in.
pub fn canonical_sum(terms: &mut [f64]) -> f64 {
    terms.sort_unstable_by(f64::total_cmp);
    terms.iter().sum()
}

/// `weights · values`, where each output entry sums its nonzero terms with
/// [`canonical_sum`]. Relabeling the columns of `weights` together with the
/// rows of `values` leaves the result bitwise unchanged.
pub fn weighted_rows(weights: &Matrix, values: &Matrix) -> Result<Matrix> {
    if weights.cols() != values.rows() {
        return Err(Error::Dimension {
            op: "weighted_rows",
            lhs: weights.shape(),
            rhs: values.shape(),
        });
    }
    let cols = values.cols();
    let mut out = Matrix::zeros(weights.rows(), cols);
    parallel::for_each_row_mut(out.as_mut_slice(), cols, |j, out_row| {
        let active: Vec<(usize, f64)> = weights
            .row(j)
            .iter()
            .copied()
            .enumerate()
            .filter(|&(_, w)| w != 0.0)
            .collect();
        let mut terms = Vec::with_capacity(active.len());
        for (t, o) in out_row.iter_mut().enumerate() {
            terms.clear();
            terms.extend(active.iter().map(|&(k, w)| w * values.get(k, t)));
            *o = canonical_sum(&mut terms);
        }
    });
    Ok(out)
}

fn softmax_impl(logits: &Matrix, mask: &Matrix, allow_empty: bool) -> Result<Matrix> {
    if logits.shape() != mask.shape() {
        return Err(Error::Dimension {
            op: "masked_row_softmax",
            lhs: logits.shape(),
            rhs: mask.shape(),
        });
    }
    if !allow_empty {
        if let Some(row) = (0..mask.rows()).find(|&i| mask.row(i).iter().all(|&m| m == 0.0)) {
            return Err(Error::DegenerateRow { row });
        }
    }
    let mut out = Matrix::zeros(logits.rows(), logits.cols());
    let cols = logits.cols();
    parallel::for_each_row_mut(out.as_mut_slice(), cols, |i, out_row| {
        softmax_row(logits.row(i), mask.row(i), out_row)
    });
    Ok(out)
}

fn softmax_row(logits: &[f64], mask: &[f64], out: &mut [f64]) {
    let mut max = f64::NEG_INFINITY;
    for (&l, &m) in logits.iter().zip(mask) {
        if m != 0.0 && l > max {
            max = l;
        }
    }
    if max == f64::NEG_INFINITY {
        return;
    }
    let mut terms = Vec::new();
    for ((o, &l), &m) in out.iter_mut().zip(logits).zip(mask) {
        if m != 0.0 {
            *o = (l - max).exp();
            terms.push(*o);
        }
    }
    let total = canonical_sum(&mut terms);
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// Backward pass of a (masked) row softmax: given the output `p` and the
/// upstream gradient `g`, returns `p ⊙ (g − Σ_j p_j g_j)` row by row.
pub fn softmax_backward(p: &Matrix, g: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(p.rows(), p.cols());
    let cols = p.cols();
    parallel::for_each_row_mut(out.as_mut_slice(), cols, |i, row| {
        let pr = p.row(i);
        let gr = g.row(i);
        let dot: f64 = pr.iter().zip(gr).map(|(a, b)| a * b).sum();
        for ((o, &pv), &gv) in row.iter_mut().zip(pr).zip(gr) {
            *o = pv * (gv - dot);
        }
    });
    out
}

/// `out[i][j] = ‖z_i − m_j‖²`.
pub fn pairwise_sq_dist(z: &Matrix, m: &Matrix) -> Result<Matrix> {
    if z.cols() != m.cols() {
        return Err(Error::Dimension {
            op: "pairwise_sq_dist",
            lhs: z.shape(),
            rhs: m.shape(),
        });
    }
    let mut out = Matrix::zeros(z.rows(), m.rows());
    let cols = m.rows();
    parallel::for_each_row_mut(out.as_mut_slice(), cols, |i, row| {
        let zi = z.row(i);
        for (j, o) in row.iter_mut().enumerate() {
            *o = zi
                .iter()
                .zip(m.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
        }
    });
    Ok(out)
}
