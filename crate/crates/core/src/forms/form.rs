use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use super::{same_domain, CoordinateDomain, FormError, VectorField};
use crate::symexpr::{Expr, SymError, Tape, ZeroCertificate};

/// Strictly increasing multi-index.
pub type MultiIndex = Vec<usize>;

/// Sorts `idx` in place and returns the permutation sign, or `None` when an
/// index repeats.
pub(crate) fn sort_with_sign(idx: &mut [usize]) -> Option<f64> {
    let mut sign = 1.0;
    for i in 0..idx.len() {
        for j in 0..idx.len() - 1 - i {
            if idx[j] > idx[j + 1] {
                idx.swap(j, j + 1);
                sign = -sign;
            } else if idx[j] == idx[j + 1] {
                return None;
            }
        }
    }
    if idx.windows(2).any(|w| w[0] == w[1]) {
        return None;
    }
    Some(sign)
}

/// Differential form with symbolic coefficients on a coordinate domain.
///
/// Only strictly increasing multi-indices are stored, and only nonzero
/// (after light rewriting) coefficients.
#[derive(Clone)]
pub struct DifferentialForm {
    domain: Arc<CoordinateDomain>,
    degree: usize,
    terms: BTreeMap<MultiIndex, Expr>,
}

impl DifferentialForm {
    /// The zero form; degrees above the dimension are allowed here since such
    /// forms vanish identically.
    pub fn zero(domain: &Arc<CoordinateDomain>, degree: usize) -> Self {
        DifferentialForm {
            domain: domain.clone(),
            degree,
            terms: BTreeMap::new(),
        }
    }

    pub fn scalar(domain: &Arc<CoordinateDomain>, f: Expr) -> Self {
        Self::from_terms(domain, 0, [(vec![], f)]).expect("degree 0 always fits")
    }

    /// Builds a form from (possibly unsorted) index tuples; repeated indices
    /// vanish and like terms accumulate.
    pub fn from_terms<I>(domain: &Arc<CoordinateDomain>, degree: usize, terms: I) -> Result<Self, FormError>
    where
        I: IntoIterator<Item = (Vec<usize>, Expr)>,
    {
        if degree > domain.dim() {
            return Err(FormError::DegreeTooLarge {
                degree,
                dim: domain.dim(),
            });
        }
        let mut form = Self::zero(domain, degree);
        for (mut idx, coeff) in terms {
            if idx.len() != degree || idx.iter().any(|&i| i >= domain.dim()) {
                return Err(FormError::BadIndex(idx));
            }
            if let Some(sign) = sort_with_sign(&mut idx) {
                form.accumulate(idx, if sign < 0.0 { coeff.neg() } else { coeff });
            }
        }
        Ok(form)
    }

    /// `d(name)` as a 1-form.
    pub fn dx(domain: &Arc<CoordinateDomain>, name: &str) -> Result<Self, FormError> {
        let i = domain
            .index_of(name)
            .ok_or_else(|| FormError::UnknownCoordinate(name.to_string()))?;
        Self::from_terms(domain, 1, [(vec![i], Expr::one())])
    }

    /// Named-coordinate constructor: `terms` pairs coordinate names with
    /// coefficients, e.g. `[(&["x", "y"], f)]` for `f dx∧dy`.
    pub fn from_named(
        domain: &Arc<CoordinateDomain>,
        degree: usize,
        terms: &[(&[&str], Expr)],
    ) -> Result<Self, FormError> {
        let mut resolved = Vec::with_capacity(terms.len());
        for (names, coeff) in terms {
            let idx = names
                .iter()
                .map(|n| {
                    domain
                        .index_of(n)
                        .ok_or_else(|| FormError::UnknownCoordinate(n.to_string()))
                })
                .collect::<Result<Vec<_>, _>>()?;
            resolved.push((idx, coeff.clone()));
        }
        Self::from_terms(domain, degree, resolved)
    }

    /// 1-form from one coefficient per coordinate.
    pub fn one_form(domain: &Arc<CoordinateDomain>, coeffs: Vec<Expr>) -> Result<Self, FormError> {
        if coeffs.len() != domain.dim() {
            return Err(FormError::ComponentCount {
                expected: domain.dim(),
                got: coeffs.len(),
            });
        }
        Self::from_terms(domain, 1, coeffs.into_iter().enumerate().map(|(i, c)| (vec![i], c)))
    }

    fn accumulate(&mut self, idx: MultiIndex, coeff: Expr) {
        if coeff.is_const_zero() {
            return;
        }
        let merged = match self.terms.remove(&idx) {
            Some(old) => old.add(&coeff),
            None => coeff,
        };
        if !merged.is_const_zero() {
            self.terms.insert(idx, merged);
        }
    }

    pub fn domain(&self) -> &Arc<CoordinateDomain> {
        &self.domain
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn terms(&self) -> &BTreeMap<MultiIndex, Expr> {
        &self.terms
    }

    pub fn is_structurally_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Coefficient on an arbitrary-order index tuple (antisymmetry applied).
    pub fn coefficient(&self, idx: &[usize]) -> Expr {
        let mut sorted = idx.to_vec();
        match sort_with_sign(&mut sorted) {
            None => Expr::zero(),
            Some(sign) => {
                let c = self.terms.get(&sorted).cloned().unwrap_or_else(Expr::zero);
                if sign < 0.0 {
                    c.neg()
                } else {
                    c
                }
            }
        }
    }

    /// Coefficient by coordinate names.
    pub fn coefficient_named(&self, names: &[&str]) -> Result<Expr, FormError> {
        let idx = names
            .iter()
            .map(|n| {
                self.domain
                    .index_of(n)
                    .ok_or_else(|| FormError::UnknownCoordinate(n.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.coefficient(&idx))
    }

    /// The function of a 0-form.
    pub fn as_function(&self) -> Expr {
        self.coefficient(&[])
    }

    fn check_same(&self, other: &Self) -> Result<(), FormError> {
        same_domain(&self.domain, &other.domain)?;
        if self.degree != other.degree {
            return Err(FormError::DegreeMismatch(self.degree, other.degree));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self, FormError> {
        self.check_same(other)?;
        let mut out = self.clone();
        for (idx, c) in &other.terms {
            out.accumulate(idx.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, FormError> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        self.map_coefficients(|c| c.neg())
    }

    /// Multiplication by a function.
    pub fn scale_by(&self, f: &Expr) -> Self {
        self.map_coefficients(|c| f.mul(c))
    }

    pub fn scale(&self, c: f64) -> Self {
        self.scale_by(&Expr::constant(c))
    }

    pub fn map_coefficients<F: Fn(&Expr) -> Expr>(&self, f: F) -> Self {
        let mut out = Self::zero(&self.domain, self.degree);
        for (idx, c) in &self.terms {
            out.accumulate(idx.clone(), f(c));
        }
        out
    }

    pub fn wedge(&self, other: &Self) -> Result<Self, FormError> {
        same_domain(&self.domain, &other.domain)?;
        let degree = self.degree + other.degree;
        if degree > self.domain.dim() {
            return Ok(Self::zero(&self.domain, degree));
        }
        let mut out = Self::zero(&self.domain, degree);
        for (i, a) in &self.terms {
            for (j, b) in &other.terms {
                let mut idx: Vec<usize> = i.iter().chain(j.iter()).copied().collect();
                if let Some(sign) = sort_with_sign(&mut idx) {
                    let prod = a.mul(b);
                    out.accumulate(idx, if sign < 0.0 { prod.neg() } else { prod });
                }
            }
        }
        Ok(out)
    }

    /// Exterior derivative.
    pub fn ext_d(&self) -> Self {
        let dim = self.domain.dim();
        if self.degree >= dim {
            return Self::zero(&self.domain, self.degree + 1);
        }
        let names = self.domain.names();
        let mut out = Self::zero(&self.domain, self.degree + 1);
        for (idx, c) in &self.terms {
            for (j, name) in names.iter().enumerate() {
                if idx.contains(&j) {
                    continue;
                }
                let dc = c.derivative(name);
                if dc.is_const_zero() {
                    continue;
                }
                let mut full = Vec::with_capacity(idx.len() + 1);
                full.push(j);
                full.extend_from_slice(idx);
                let sign = sort_with_sign(&mut full).expect("j not in idx");
                out.accumulate(full, if sign < 0.0 { dc.neg() } else { dc });
            }
        }
        out
    }

    /// Interior product `i_X`.
    pub fn interior(&self, x: &VectorField) -> Result<Self, FormError> {
        same_domain(&self.domain, x.domain())?;
        if self.degree == 0 {
            return Err(FormError::DegreeMismatch(0, 1));
        }
        let mut out = Self::zero(&self.domain, self.degree - 1);
        for (idx, c) in &self.terms {
            for (p, &i) in idx.iter().enumerate() {
                let comp = &x.components()[i];
                if comp.is_const_zero() {
                    continue;
                }
                let mut rest = idx.clone();
                rest.remove(p);
                let term = comp.mul(c);
                out.accumulate(rest, if p % 2 == 1 { term.neg() } else { term });
            }
        }
        Ok(out)
    }

    /// Lie derivative via Cartan's formula `i_X d + d i_X`.
    pub fn lie_derivative(&self, x: &VectorField) -> Result<Self, FormError> {
        let first = self.ext_d().interior(x)?;
        if self.degree == 0 {
            return Ok(first);
        }
        first.add(&self.interior(x)?.ext_d())
    }

    /// Evaluation of a 1-form on a vector field.
    pub fn pair(&self, x: &VectorField) -> Result<Expr, FormError> {
        if self.degree != 1 {
            return Err(FormError::DegreeMismatch(self.degree, 1));
        }
        Ok(self.interior(x)?.as_function())
    }

    /// `k`-th wedge power.
    pub fn wedge_power(&self, k: usize) -> Result<Self, FormError> {
        let mut out = Self::scalar(&self.domain, Expr::one());
        for _ in 0..k {
            out = out.wedge(self)?;
        }
        Ok(out)
    }

    /// Rebinds the coefficients onto another domain with the same coordinate
    /// names (e.g. after extending a chart by extra factors).
    pub fn extend_to(&self, domain: &Arc<CoordinateDomain>) -> Result<Self, FormError> {
        let mut terms = Vec::with_capacity(self.terms.len());
        for (idx, c) in &self.terms {
            let mapped = idx
                .iter()
                .map(|&i| {
                    let name = &self.domain.coordinates()[i].name;
                    domain
                        .index_of(name)
                        .ok_or_else(|| FormError::UnknownCoordinate(name.clone()))
                })
                .collect::<Result<Vec<_>, _>>()?;
            terms.push((mapped, c.clone()));
        }
        Self::from_terms(domain, self.degree, terms)
    }

    /// Compiles all stored coefficients.
    pub fn compile(&self) -> Result<FormTape, SymError> {
        let indices: Vec<MultiIndex> = self.terms.keys().cloned().collect();
        let exprs: Vec<Expr> = self.terms.values().cloned().collect();
        Ok(FormTape {
            degree: self.degree,
            dim: self.domain.dim(),
            indices,
            tape: Tape::compile_in(&exprs, &self.domain)?,
        })
    }

    /// Seeded zero certification of every coefficient.
    pub fn certify_zero(&self, samples: usize, tol: f64, seed: u64) -> Result<ZeroCertificate, SymError> {
        if self.terms.is_empty() {
            return Ok(ZeroCertificate {
                passed: true,
                max_residual: 0.0,
                worst_point: vec![],
                samples,
            });
        }
        let exprs: Vec<Expr> = self.terms.values().cloned().collect();
        let tape = Tape::compile_in(&exprs, &self.domain)?;
        let points = self.domain.sample_points(samples, seed);
        let (max_residual, worst_point) = crate::sampling::max_abs_over(&tape, &self.domain, &points)?;
        Ok(ZeroCertificate {
            passed: max_residual < tol,
            max_residual,
            worst_point,
            samples,
        })
    }

    /// Convenience: certify `self - other` is zero.
    pub fn certify_equal(&self, other: &Self, samples: usize, tol: f64, seed: u64) -> Result<ZeroCertificate, FormError> {
        Ok(self.sub(other)?.certify_zero(samples, tol, seed)?)
    }
}

impl fmt::Debug for DifferentialForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = self.domain.names();
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(idx, c)| {
                let basis: Vec<String> = idx.iter().map(|&i| format!("d{}", names[i])).collect();
                if basis.is_empty() {
                    format!("{c}")
                } else {
                    format!("{c} {}", basis.join("^"))
                }
            })
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

/// Compiled form: coefficients at a point, keyed by stored multi-indices.
#[derive(Debug, Clone)]
pub struct FormTape {
    pub degree: usize,
    pub dim: usize,
    pub indices: Vec<MultiIndex>,
    tape: Tape,
}

impl FormTape {
    pub fn eval(&self, point: &[f64]) -> Result<Vec<f64>, crate::symexpr::EvalError> {
        self.tape.eval(point)
    }

    /// Sparse (index, value) list at a point.
    pub fn eval_terms(&self, point: &[f64]) -> Result<Vec<(MultiIndex, f64)>, crate::symexpr::EvalError> {
        let vals = self.tape.eval(point)?;
        Ok(self.indices.iter().cloned().zip(vals).collect())
    }

    /// Dense vector for a 1-form.
    pub fn eval_covector(&self, point: &[f64]) -> Result<Vec<f64>, crate::symexpr::EvalError> {
        debug_assert_eq!(self.degree, 1);
        let vals = self.tape.eval(point)?;
        let mut out = vec![0.0; self.dim];
        for (idx, v) in self.indices.iter().zip(vals) {
            out[idx[0]] = v;
        }
        Ok(out)
    }

    /// Skew matrix `Phi(d_i, d_j)` for a 2-form.
    pub fn eval_skew(&self, point: &[f64]) -> Result<nalgebra::DMatrix<f64>, crate::symexpr::EvalError> {
        debug_assert_eq!(self.degree, 2);
        let vals = self.tape.eval(point)?;
        Ok(super::numeric::skew_from_terms(self.dim, self.indices.iter().zip(vals)))
    }
}
