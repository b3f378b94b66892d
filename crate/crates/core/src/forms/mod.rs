//! Differential forms, vector fields and smooth maps over coordinate charts.
//!
//! Sign conventions: `♭_Φ(v) = i_v Φ`, and `i_X` contracts the first slot.

mod domain;
mod field;
mod form;
mod map;
pub mod numeric;

use std::sync::Arc;

use thiserror::Error;

use crate::symexpr::SymError;

pub use domain::{BallConstraint, Coordinate, CoordinateDomain, CoordinateKind};
pub use field::VectorField;
pub use form::{DifferentialForm, FormTape, MultiIndex};
pub use map::{MapTape, SmoothMap};
pub use numeric::{flat, nondegeneracy_rank, sharp};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormError {
    #[error("duplicate coordinate `{0}`")]
    DuplicateCoordinate(String),
    #[error("coordinate `{0}` has an empty range")]
    BadRange(String),
    #[error("unknown coordinate {0}")]
    UnknownCoordinate(String),
    #[error("domain mismatch: `{0}` vs `{1}`")]
    DomainMismatch(String, String),
    #[error("degree mismatch: {0} vs {1}")]
    DegreeMismatch(usize, usize),
    #[error("degree {degree} exceeds dimension {dim}")]
    DegreeTooLarge { degree: usize, dim: usize },
    #[error("bad multi-index {0:?}")]
    BadIndex(Vec<usize>),
    #[error("expected {expected} components, got {got}")]
    ComponentCount { expected: usize, got: usize },
    #[error("2-form is singular at {point}: rank {rank} < {dim}")]
    Singular { point: String, rank: usize, dim: usize },
    #[error(transparent)]
    Sym(#[from] SymError),
}

pub(crate) fn same_domain(a: &Arc<CoordinateDomain>, b: &Arc<CoordinateDomain>) -> Result<(), FormError> {
    if Arc::ptr_eq(a, b) || a == b {
        Ok(())
    } else {
        Err(FormError::DomainMismatch(a.name.clone(), b.name.clone()))
    }
}

#[cfg(test)]
mod tests;
