//! Seeded sample evaluation shared by the certifiers.

use crate::exec;
use crate::forms::CoordinateDomain;
use crate::symexpr::{SymError, Tape};

/// Evaluates `tape` at every point, in parallel, preserving order.
pub fn eval_all(
    tape: &Tape,
    domain: &CoordinateDomain,
    points: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>, SymError> {
    exec::try_map(points, |p| {
        tape.eval(p).map_err(|source| SymError::Eval {
            source,
            point: domain.format_point(p),
        })
    })
}

/// Largest absolute output over all points, with the first point attaining it.
pub fn max_abs_over(
    tape: &Tape,
    domain: &CoordinateDomain,
    points: &[Vec<f64>],
) -> Result<(f64, Vec<f64>), SymError> {
    let values = eval_all(tape, domain, points)?;
    let mut best = (0.0f64, points.first().cloned().unwrap_or_default());
    for (vals, p) in values.iter().zip(points) {
        let m = vals.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if m > best.0 {
            best = (m, p.clone());
        }
    }
    Ok(best)
}

/// Sample budget, tolerance and seed for a certification.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CheckOptions {
    pub samples: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            samples: 200,
            tol: 1e-9,
            seed: 0,
        }
    }
}

impl CheckOptions {
    pub fn with_tol(self, tol: f64) -> Self {
        CheckOptions { tol, ..self }
    }

    pub fn with_samples(self, samples: usize) -> Self {
        CheckOptions { samples, ..self }
    }
}
