//! Learnable-prototype classifier.
//!
//! Node representations are mapped by a linear layer `z = θ f (+ b)` and
//! compared against `c·k` prototypes. Prototype `j` of class `i` lives in row
//! `i·k + j` of the bank. Prediction picks the class of the nearest prototype;
//! training minimizes the distance-based cross-entropy, where class posteriors
//! are the softmax mass of `−‖z − m‖²` over a class's prototypes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{log_sum_exp, pairwise_sq_dist, Matrix, ParamId, ParameterSet, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrototypeBank {
    pub prototypes: ParamId,
    pub n_classes: usize,
    pub per_class: usize,
}

impl PrototypeBank {
    pub fn row(&self, class: usize, j: usize) -> usize {
        class * self.per_class + j
    }

    pub fn class_of_row(&self, row: usize) -> usize {
        row / self.per_class
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    /// `p × d`.
    pub theta: ParamId,
    /// Optional `1 × p` bias.
    pub bias: Option<ParamId>,
    pub bank: PrototypeBank,
}

/// `Z = F θᵀ (+ b)` on the tape.
pub fn integrate(tape: &mut Tape, params: &ParameterSet, f: Var, head: &HeadParams) -> Result<Var> {
    let theta = tape.param(params, head.theta);
    let theta_t = tape.transpose(theta);
    let z = tape.matmul(f, theta_t)?;
    match head.bias {
        Some(b) => {
            let bv = tape.param(params, b);
            tape.add_row_vector(z, bv)
        }
        None => Ok(z),
    }
}

/// `Z = F θᵀ (+ b)` without recording.
pub fn integrate_matrix(f: &Matrix, params: &ParameterSet, head: &HeadParams) -> Result<Matrix> {
    let mut tape = Tape::new();
    let fv = tape.constant(f.clone());
    let z = integrate(&mut tape, params, fv, head)?;
    Ok(tape.value(z).clone())
}

/// Index of the nearest prototype row per sample; ties go to the lowest row.
pub fn nearest_prototypes(z: &Matrix, prototypes: &Matrix) -> Result<Vec<(usize, f64)>> {
    let d = pairwise_sq_dist(z, prototypes)?;
    Ok((0..d.rows())
        .map(|i| {
            d.row(i)
                .iter()
                .copied()
                .enumerate()
                .fold((0, f64::INFINITY), |best, (j, v)| if v < best.1 { (j, v) } else { best })
        })
        .collect())
}

/// Class of the nearest prototype for every row of `z`.
pub fn predict(z: &Matrix, prototypes: &Matrix, per_class: usize) -> Result<Vec<usize>> {
    if per_class == 0 || !prototypes.rows().is_multiple_of(per_class) {
        return Err(Error::Config(format!(
            "{} prototypes do not split into groups of {per_class}",
            prototypes.rows()
        )));
    }
    Ok(nearest_prototypes(z, prototypes)?
        .into_iter()
        .map(|(row, _)| row / per_class)
        .collect())
}

/// Distance-based cross-entropy on the tape: mean of `−log p(y | z)`.
pub fn dce_loss(tape: &mut Tape, z: Var, prototypes: Var, labels: &[usize], per_class: usize) -> Result<Var> {
    let dist = tape.sq_dist(z, prototypes)?;
    tape.dce_loss(dist, labels, per_class)
}

/// Distance-based cross-entropy value.
pub fn dce_loss_value(z: &Matrix, prototypes: &Matrix, labels: &[usize], per_class: usize) -> Result<f64> {
    let mut tape = Tape::new();
    let zv = tape.constant(z.clone());
    let mv = tape.constant(prototypes.clone());
    let loss = dce_loss(&mut tape, zv, mv, labels, per_class)?;
    Ok(tape.scalar(loss))
}

/// `p(class | z)` for every row of `z` (`n × c`).
pub fn class_posteriors(z: &Matrix, prototypes: &Matrix, per_class: usize) -> Result<Matrix> {
    let d = pairwise_sq_dist(z, prototypes)?;
    let c = prototypes.rows() / per_class;
    let mut out = Matrix::zeros(z.rows(), c);
    for i in 0..z.rows() {
        let neg: Vec<f64> = d.row(i).iter().map(|x| -x).collect();
        let all = log_sum_exp(&neg);
        for class in 0..c {
            let own = log_sum_exp(&neg[class * per_class..(class + 1) * per_class]);
            out.set(i, class, (own - all).exp());
        }
    }
    Ok(out)
}
