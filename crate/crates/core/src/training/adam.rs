//! Adam with bias correction.

use crate::error::{Error, Result};
use crate::numeric::{Matrix, ParameterSet};

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Adam {
    pub fn new(params: &ParameterSet, lr: f64) -> Self {
        let zeros = || params.iter().map(|p| Matrix::zeros(p.value.rows(), p.value.cols())).collect();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Applies one update from the gradients stored in `params`. A non-finite
    /// gradient aborts before anything is modified.
    pub fn step(&mut self, params: &mut ParameterSet) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(Error::Structure(format!(
                "optimizer state has {} slots for {} parameters",
                self.m.len(),
                params.len()
            )));
        }
        for (p, m) in params.iter().zip(&self.m) {
            if p.grad.shape() != m.shape() {
                return Err(Error::Dimension {
                    op: "adam_step",
                    lhs: p.grad.shape(),
                    rhs: m.shape(),
                });
            }
            if !p.grad.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("gradient of {}", p.name),
                });
            }
        }
        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let values = p.value.as_mut_slice();
            let grads = p.grad.as_slice();
            for (((x, &g), mi), vi) in values
                .iter_mut()
                .zip(grads)
                .zip(m.as_mut_slice())
                .zip(v.as_mut_slice())
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *x -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
