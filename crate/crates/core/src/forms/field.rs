use std::sync::Arc;

use super::{same_domain, CoordinateDomain, FormError};
use crate::symexpr::{Expr, SymError, Tape};

/// Vector field with one symbolic component per coordinate.
#[derive(Clone, Debug)]
pub struct VectorField {
    domain: Arc<CoordinateDomain>,
    components: Vec<Expr>,
}

impl VectorField {
    pub fn new(domain: &Arc<CoordinateDomain>, components: Vec<Expr>) -> Result<Self, FormError> {
        if components.len() != domain.dim() {
            return Err(FormError::ComponentCount {
                expected: domain.dim(),
                got: components.len(),
            });
        }
        Ok(VectorField {
            domain: domain.clone(),
            components,
        })
    }

    pub fn zero(domain: &Arc<CoordinateDomain>) -> Self {
        VectorField {
            domain: domain.clone(),
            components: vec![Expr::zero(); domain.dim()],
        }
    }

    /// Coordinate field `d/d(name)`.
    pub fn coordinate(domain: &Arc<CoordinateDomain>, name: &str) -> Result<Self, FormError> {
        let i = domain
            .index_of(name)
            .ok_or_else(|| FormError::UnknownCoordinate(name.to_string()))?;
        let mut v = Self::zero(domain);
        v.components[i] = Expr::one();
        Ok(v)
    }

    /// Sparse constructor by coordinate names; unnamed components are zero.
    pub fn from_named(domain: &Arc<CoordinateDomain>, parts: &[(&str, Expr)]) -> Result<Self, FormError> {
        let mut v = Self::zero(domain);
        for (name, e) in parts {
            let i = domain
                .index_of(name)
                .ok_or_else(|| FormError::UnknownCoordinate(name.to_string()))?;
            v.components[i] = v.components[i].add(e);
        }
        Ok(v)
    }

    pub fn domain(&self) -> &Arc<CoordinateDomain> {
        &self.domain
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn component_named(&self, name: &str) -> Option<&Expr> {
        self.domain.index_of(name).map(|i| &self.components[i])
    }

    /// Directional derivative `X(f)`.
    pub fn apply(&self, f: &Expr) -> Expr {
        let names = self.domain.names();
        let mut acc = Expr::zero();
        for (c, name) in self.components.iter().zip(names) {
            if c.is_const_zero() {
                continue;
            }
            acc = acc.add(&c.mul(&f.derivative(name)));
        }
        acc
    }

    /// Lie bracket `[X, Y]`.
    pub fn bracket(&self, other: &Self) -> Result<Self, FormError> {
        same_domain(&self.domain, &other.domain)?;
        let components = (0..self.components.len())
            .map(|i| self.apply(&other.components[i]).sub(&other.apply(&self.components[i])))
            .collect();
        Self::new(&self.domain, components)
    }

    pub fn add(&self, other: &Self) -> Result<Self, FormError> {
        same_domain(&self.domain, &other.domain)?;
        let components = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.add(b))
            .collect();
        Self::new(&self.domain, components)
    }

    pub fn scale_by(&self, f: &Expr) -> Self {
        VectorField {
            domain: self.domain.clone(),
            components: self.components.iter().map(|c| f.mul(c)).collect(),
        }
    }

    pub fn neg(&self) -> Self {
        self.scale_by(&Expr::constant(-1.0))
    }

    /// Rebinds components onto a larger domain that contains every coordinate
    /// name of this one; new coordinates get zero components.
    pub fn extend_to(&self, domain: &Arc<CoordinateDomain>) -> Result<Self, FormError> {
        let mut v = Self::zero(domain);
        for (c, coord) in self.components.iter().zip(self.domain.coordinates()) {
            let i = domain
                .index_of(&coord.name)
                .ok_or_else(|| FormError::UnknownCoordinate(coord.name.clone()))?;
            v.components[i] = c.clone();
        }
        Ok(v)
    }

    pub fn compile(&self) -> Result<Tape, SymError> {
        Tape::compile_in(&self.components, &self.domain)
    }

    /// Symbolic Jacobian `dX^i/dx^j`.
    pub fn jacobian(&self) -> Vec<Vec<Expr>> {
        let names = self.domain.names();
        self.components
            .iter()
            .map(|c| names.iter().map(|n| c.derivative(n)).collect())
            .collect()
    }
}
