//! Adaptive fourth-order Runge–Kutta flows of vector fields, with the
//! variational equation for the flow Jacobian.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::forms::{CoordinateDomain, VectorField};
use crate::symexpr::{EvalError, SymError, Tape};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("flow left the chart window at {point} (time {time})")]
    Escape { point: String, time: f64 },
    #[error("step size underflow at time {time}")]
    StepUnderflow { time: f64 },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Sym(#[from] SymError),
}

/// Compiled vector field with its Jacobian.
#[derive(Debug, Clone)]
pub struct Flow {
    tape: Tape,
    dim: usize,
    domain: CoordinateDomain,
    /// Relative/absolute local error target per step.
    pub tol: f64,
}

/// Endpoint of a flow line and the derivative of the time-`t` map there.
#[derive(Debug, Clone)]
pub struct FlowResult {
    pub point: Vec<f64>,
    pub jacobian: DMatrix<f64>,
    pub steps: usize,
}

impl Flow {
    pub fn new(field: &VectorField, tol: f64) -> Result<Self, SymError> {
        let mut exprs = field.components().to_vec();
        for row in field.jacobian() {
            exprs.extend(row);
        }
        let domain = (**field.domain()).clone();
        Ok(Flow {
            tape: Tape::compile_in(&exprs, &domain)?,
            dim: domain.dim(),
            domain,
            tol,
        })
    }

    /// Right-hand side of the augmented system `(y, J)' = (X(y), DX(y) J)`.
    fn rhs(&self, state: &[f64]) -> Result<Vec<f64>, EvalError> {
        let n = self.dim;
        let vals = self.tape.eval(&state[..n])?;
        let mut out = vec![0.0; state.len()];
        out[..n].copy_from_slice(&vals[..n]);
        if state.len() > n {
            let dx = &vals[n..];
            for i in 0..n {
                for j in 0..n {
                    let mut acc = 0.0;
                    for k in 0..n {
                        acc += dx[i * n + k] * state[n + k * n + j];
                    }
                    out[n + i * n + j] = acc;
                }
            }
        }
        Ok(out)
    }

    fn rk4(&self, y: &[f64], h: f64) -> Result<Vec<f64>, EvalError> {
        let axpy = |a: &[f64], b: &[f64], s: f64| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + s * y).collect() };
        let k1 = self.rhs(y)?;
        let k2 = self.rhs(&axpy(y, &k1, h / 2.0))?;
        let k3 = self.rhs(&axpy(y, &k2, h / 2.0))?;
        let k4 = self.rhs(&axpy(y, &k3, h))?;
        Ok((0..y.len())
            .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect())
    }

    /// Flows `x` for time `t`; `inside` is checked after every accepted step.
    pub fn run<P: Fn(&[f64]) -> bool>(&self, x: &[f64], t: f64, inside: P) -> Result<FlowResult, FlowError> {
        let n = self.dim;
        let mut y = x.to_vec();
        for i in 0..n {
            for j in 0..n {
                y.push(if i == j { 1.0 } else { 0.0 });
            }
        }
        let mut time = 0.0;
        let mut steps = 0;
        if t == 0.0 {
            return Ok(self.finish(y, 0));
        }
        let dir = t.signum();
        let mut h = dir * t.abs().min(0.1);
        while (t - time) * dir > 0.0 {
            if (time + h - t) * dir > 0.0 {
                h = t - time;
            }
            let full = self.rk4(&y, h)?;
            let half = self.rk4(&self.rk4(&y, h / 2.0)?, h / 2.0)?;
            let err = full
                .iter()
                .zip(&half)
                .map(|(a, b)| (a - b).abs() / (1.0 + b.abs()))
                .fold(0.0f64, f64::max)
                / 15.0;
            if err <= self.tol {
                // Richardson extrapolation of the two estimates.
                y = half.iter().zip(&full).map(|(b, a)| b + (b - a) / 15.0).collect();
                time += h;
                steps += 1;
                if !inside(&y[..n]) {
                    return Err(FlowError::Escape {
                        point: self.domain.format_point(&y[..n]),
                        time,
                    });
                }
                let grow = if err == 0.0 { 2.0 } else { (0.9 * (self.tol / err).powf(0.2)).min(2.0) };
                h *= grow.max(1.0);
            } else {
                h *= (0.9 * (self.tol / err).powf(0.2)).max(0.2);
            }
            if h.abs() < 1e-12 {
                return Err(FlowError::StepUnderflow { time });
            }
        }
        Ok(self.finish(y, steps))
    }

    fn finish(&self, y: Vec<f64>, steps: usize) -> FlowResult {
        let n = self.dim;
        FlowResult {
            point: y[..n].to_vec(),
            jacobian: DMatrix::from_row_slice(n, n, &y[n..]),
            steps,
        }
    }
}
