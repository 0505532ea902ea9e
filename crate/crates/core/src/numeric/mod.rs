//! Dense 64-bit linear algebra, activations, a reverse-mode tape and a
//! finite-difference gradient checker.

mod gradcheck;
mod matrix;
pub mod ops;
mod param;
mod tape;

pub use gradcheck::{grad_check, relative_error, GradCheckReport, MIN_COORDS_PER_PARAM};
pub use matrix::Matrix;
pub use ops::{leaky_relu, masked_row_softmax, pairwise_sq_dist};
pub use param::{ParamId, Parameter, ParameterSet};
pub use tape::{Gradients, Tape, Var};
pub(crate) use tape::log_sum_exp;
