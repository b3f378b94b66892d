//! Certified computations for locally conformal symplectic structures.
//!
//! The crate represents differential forms symbolically over coordinate
//! charts and certifies identities between them by seeded multi-point
//! evaluation. On top of that calculus it builds the sphere-bundle models,
//! the universal contact embedding, the four-stage universal reduction, and a
//! discrete twisted cohomology of flat tori.

pub mod check;
pub mod cli;
pub mod cohomology;
pub mod embed;
pub mod exec;
pub mod forms;
pub mod sampling;
pub mod symexpr;
pub mod lattice;
pub mod models;
pub mod ode;
pub mod quadrature;
pub mod reduce;
pub mod twisted;
