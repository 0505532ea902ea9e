//! Hyperedge-prototype regularizer.
//!
//! With `H = Iᵀ F`, the residual `R = I − F Hᵀ D_e⁻¹ = I − F Fᵀ I D_e⁻¹` measures how
//! well node embeddings reconstruct hyperedge membership, each hyperedge acting
//! as a prototype of its members. The scalar penalty is the mean (or sum) of
//! squared residual entries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypergraph::IncidenceMatrix;
use crate::numeric::{Matrix, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegReduction {
    #[default]
    Mean,
    Sum,
}

impl std::str::FromStr for RegReduction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mean" => Ok(RegReduction::Mean),
            "sum" | "frobenius" => Ok(RegReduction::Sum),
            other => Err(format!("unknown reduction {other:?} (mean|sum)")),
        }
    }
}

fn inverse_degrees(inc: &IncidenceMatrix) -> Result<Vec<f64>> {
    inc.degree()
        .iter()
        .enumerate()
        .map(|(e, &d)| {
            if d == 0 {
                Err(Error::Structure(format!("hyperedge {e} has degree 0")))
            } else {
                Ok(1.0 / d as f64)
            }
        })
        .collect()
}

/// Records the residual `I − F (IᵀF)ᵀ D_e⁻¹` on the tape.
pub fn residual(tape: &mut Tape, f: Var, inc: &IncidenceMatrix) -> Result<Var> {
    let f_rows = tape.value(f).rows();
    if f_rows != inc.n_nodes() {
        return Err(Error::Dimension {
            op: "hyperedge_prototype_reg",
            lhs: tape.value(f).shape(),
            rhs: inc.matrix().shape(),
        });
    }
    let inv_deg = inverse_degrees(inc)?;
    let i = tape.constant(inc.matrix().clone());
    let i_t = tape.transpose(i);
    let h = tape.matmul(i_t, f)?;
    let h_t = tape.transpose(h);
    let f_h = tape.matmul(f, h_t)?;
    let scaled = tape.col_scale(f_h, inv_deg)?;
    tape.sub(i, scaled)
}

/// Scalar penalty on the tape.
pub fn hyperedge_prototype_reg_var(
    tape: &mut Tape,
    f: Var,
    inc: &IncidenceMatrix,
    reduction: RegReduction,
) -> Result<Var> {
    let r = residual(tape, f, inc)?;
    Ok(match reduction {
        RegReduction::Mean => tape.mean_square(r),
        RegReduction::Sum => tape.sum_square(r),
    })
}

/// Mean squared residual for a fixed `F`.
pub fn hyperedge_prototype_reg(f: &Matrix, inc: &IncidenceMatrix) -> Result<f64> {
    let mut tape = Tape::new();
    let fv = tape.constant(f.clone());
    let l = hyperedge_prototype_reg_var(&mut tape, fv, inc, RegReduction::Mean)?;
    Ok(tape.scalar(l))
}
