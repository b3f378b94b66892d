use std::collections::HashMap;
use std::sync::Arc;

use super::{same_domain, CoordinateDomain, DifferentialForm, FormError};
use crate::symexpr::{EvalError, Expr, SymError, Tape};

/// Expression-valued map between coordinate domains. Components landing in
/// angular target coordinates are read modulo 1 when evaluated.
#[derive(Clone, Debug)]
pub struct SmoothMap {
    source: Arc<CoordinateDomain>,
    target: Arc<CoordinateDomain>,
    components: Vec<Expr>,
}

impl SmoothMap {
    pub fn new(
        source: &Arc<CoordinateDomain>,
        target: &Arc<CoordinateDomain>,
        components: Vec<Expr>,
    ) -> Result<Self, FormError> {
        if components.len() != target.dim() {
            return Err(FormError::ComponentCount {
                expected: target.dim(),
                got: components.len(),
            });
        }
        let names = source.names();
        for c in &components {
            for v in c.variables() {
                if !names.contains(&v.as_str()) {
                    return Err(FormError::UnknownCoordinate(v));
                }
            }
        }
        Ok(SmoothMap {
            source: source.clone(),
            target: target.clone(),
            components,
        })
    }

    /// Builds a map from `(target name, expression)` pairs; every target
    /// coordinate must be given exactly once.
    pub fn from_named(
        source: &Arc<CoordinateDomain>,
        target: &Arc<CoordinateDomain>,
        parts: &[(&str, Expr)],
    ) -> Result<Self, FormError> {
        let mut comps: Vec<Option<Expr>> = vec![None; target.dim()];
        for (name, e) in parts {
            let i = target
                .index_of(name)
                .ok_or_else(|| FormError::UnknownCoordinate(name.to_string()))?;
            comps[i] = Some(e.clone());
        }
        let comps = comps
            .into_iter()
            .zip(target.names())
            .map(|(c, n)| c.ok_or_else(|| FormError::UnknownCoordinate(format!("missing component `{n}`"))))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(source, target, comps)
    }

    pub fn identity(domain: &Arc<CoordinateDomain>) -> Self {
        SmoothMap {
            source: domain.clone(),
            target: domain.clone(),
            components: domain.names().iter().map(|n| Expr::var(n)).collect(),
        }
    }

    pub fn source(&self) -> &Arc<CoordinateDomain> {
        &self.source
    }

    pub fn target(&self) -> &Arc<CoordinateDomain> {
        &self.target
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    fn substitution(&self) -> HashMap<String, Expr> {
        self.target
            .names()
            .iter()
            .zip(&self.components)
            .map(|(n, e)| (n.to_string(), e.clone()))
            .collect()
    }

    /// `other ∘ self`.
    pub fn then(&self, other: &SmoothMap) -> Result<SmoothMap, FormError> {
        same_domain(&self.target, &other.source)?;
        let map = self.substitution();
        let mut memo = HashMap::new();
        let components = other
            .components
            .iter()
            .map(|c| c.substitute_memo(&map, &mut memo))
            .collect();
        Ok(SmoothMap {
            source: self.source.clone(),
            target: other.target.clone(),
            components,
        })
    }

    /// Substitutes the map into a target-side expression.
    pub fn compose_expr(&self, e: &Expr) -> Expr {
        e.substitute(&self.substitution())
    }

    /// Symbolic Jacobian, rows = target coordinates.
    pub fn jacobian(&self) -> Vec<Vec<Expr>> {
        let names = self.source.names();
        self.components
            .iter()
            .map(|c| names.iter().map(|n| c.derivative(n)).collect())
            .collect()
    }

    /// Symbolic pullback of a form on the target.
    pub fn pullback(&self, a: &DifferentialForm) -> Result<DifferentialForm, FormError> {
        same_domain(&self.target, a.domain())?;
        let map = self.substitution();
        let mut memo = HashMap::new();
        let mut differentials: HashMap<usize, DifferentialForm> = HashMap::new();
        let mut out = DifferentialForm::zero(&self.source, a.degree());
        if a.degree() > self.source.dim() {
            return Ok(out);
        }
        for (idx, coeff) in a.terms() {
            let mut term = DifferentialForm::scalar(&self.source, coeff.substitute_memo(&map, &mut memo));
            for &i in idx {
                let di = differentials
                    .entry(i)
                    .or_insert_with(|| DifferentialForm::scalar(&self.source, self.components[i].clone()).ext_d());
                term = term.wedge(di)?;
                if term.is_structurally_zero() {
                    break;
                }
            }
            if term.degree() == out.degree() {
                out = out.add(&term)?;
            }
        }
        Ok(out)
    }

    /// Compiles values and Jacobian entries.
    pub fn compile(&self) -> Result<MapTape, SymError> {
        let mut exprs = self.components.clone();
        for row in self.jacobian() {
            exprs.extend(row);
        }
        Ok(MapTape {
            tape: Tape::compile_in(&exprs, &self.source)?,
            angular: self.target.coordinates().iter().map(|c| c.is_angular()).collect(),
            source_dim: self.source.dim(),
            target_dim: self.target.dim(),
        })
    }
}

/// Compiled map: value and Jacobian at a point.
#[derive(Debug, Clone)]
pub struct MapTape {
    tape: Tape,
    angular: Vec<bool>,
    pub source_dim: usize,
    pub target_dim: usize,
}

impl MapTape {
    /// Value with angular components reduced to `[0, 1)`, and the Jacobian.
    pub fn eval(&self, point: &[f64]) -> Result<(Vec<f64>, nalgebra::DMatrix<f64>), EvalError> {
        let (raw, jac) = self.eval_raw(point)?;
        let value = raw
            .into_iter()
            .zip(&self.angular)
            .map(|(v, &ang)| if ang { v.rem_euclid(1.0) } else { v })
            .collect();
        Ok((value, jac))
    }

    /// Value without angular reduction (useful for lifts of loops).
    pub fn eval_raw(&self, point: &[f64]) -> Result<(Vec<f64>, nalgebra::DMatrix<f64>), EvalError> {
        let vals = self.tape.eval(point)?;
        let value = vals[..self.target_dim].to_vec();
        let jac = nalgebra::DMatrix::from_row_slice(self.target_dim, self.source_dim, &vals[self.target_dim..]);
        Ok((value, jac))
    }
}
