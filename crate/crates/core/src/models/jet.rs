//! Jet-space structures `ℝ × J¹(Q) = ℝ_s × ℝ_u × T*Q` with
//! `α = du − Σ p dq` and `ω = ds + ω_Q`.

use std::sync::Arc;

use nalgebra::DMatrix;

use super::{ChartData, LcsStructure, ModelError, StructureKind};
use crate::forms::{Coordinate, CoordinateDomain, DifferentialForm, SmoothMap, VectorField};
use crate::symexpr::Expr;

/// Momentum coordinate paired with `name`.
pub fn momentum(name: &str) -> String {
    format!("p_{name}")
}

/// `ℝ × J¹(Q)` over a chart `Q` carrying a closed 1-form `ω_Q`:
/// `Φ = dα − ω∧α`, `B = ∂s`, `E = −∂u`. Momenta and `s, u` range over
/// `[-bound, bound]`.
pub fn jet_structure(
    name: &str,
    base: &Arc<CoordinateDomain>,
    omega_base: &DifferentialForm,
    bound: f64,
) -> Result<LcsStructure, ModelError> {
    let su = CoordinateDomain::new(
        "su",
        vec![Coordinate::linear("s", -bound, bound), Coordinate::linear("u", -bound, bound)],
    )?;
    let moms = CoordinateDomain::new(
        "momenta",
        base.names().iter().map(|q| Coordinate::linear(&momentum(q), -bound, bound)).collect(),
    )?;
    let dom = Arc::new(su.product(base, "tmp")?.product(&moms, name)?);
    let mut coeffs = vec![Expr::zero(); dom.dim()];
    coeffs[1] = Expr::one();
    for q in base.names() {
        coeffs[dom.index_of(q).expect("base coordinate")] = Expr::var(&momentum(q)).neg();
    }
    let alpha = DifferentialForm::one_form(&dom, coeffs)?;
    let omega = DifferentialForm::dx(&dom, "s")?.add(&omega_base.extend_to(&dom)?)?;
    let phi = alpha.ext_d().sub(&omega.wedge(&alpha)?)?;
    let chart = ChartData {
        b: Some(VectorField::coordinate(&dom, "s")?),
        e: Some(VectorField::coordinate(&dom, "u")?.neg()),
        domain: dom,
        phi,
        omega,
        alpha: Some(alpha),
    };
    Ok(LcsStructure::single(name, StructureKind::FirstKind, chart))
}

fn torus_base(k: usize, n: usize, name: &str) -> Result<Arc<CoordinateDomain>, ModelError> {
    let mut coords: Vec<Coordinate> = (1..=k).map(|j| Coordinate::angular(&format!("th{j}"))).collect();
    coords.extend((1..=n).map(|j| Coordinate::linear(&format!("t{j}"), -1.0, 1.0)));
    Ok(Arc::new(CoordinateDomain::new(name, coords)?))
}

fn torus_lee(base: &Arc<CoordinateDomain>, mu: &[f64]) -> Result<DifferentialForm, ModelError> {
    let mut coeffs = vec![Expr::zero(); base.dim()];
    for (j, m) in mu.iter().enumerate() {
        coeffs[j] = Expr::constant(*m);
    }
    Ok(DifferentialForm::one_form(base, coeffs)?)
}

fn fmt_mu(mu: &[f64]) -> String {
    mu.iter().map(|m| format!("{m}")).collect::<Vec<_>>().join(",")
}

/// `M_{k,N} = ℝ × J¹(T^k × ℝ^N)` with `ω_μ = ds + Σ μ_j dθ_j` and
/// `α = du − Σ p dq`. Coordinates `s, u, th1.., t1.., p_th1.., p_t1..`.
pub fn model_reduction_universal(k: usize, n: usize, mu: &[f64]) -> Result<LcsStructure, ModelError> {
    if k + n == 0 {
        return Err(ModelError::BadParameter("need k + N ≥ 1".into()));
    }
    if mu.len() != k {
        return Err(ModelError::BadParameter(format!("μ has {} entries, expected k = {k}", mu.len())));
    }
    let base = torus_base(k, n, &format!("T{k}xR{n}"))?;
    let name = format!("reduction_universal(k={k},N={n},mu=[{}])", fmt_mu(mu));
    jet_structure(&name, &base, &torus_lee(&base, mu)?, 1.0)
}

/// `ℝ^{2n}` with the Liouville form `λ_n = Σ y_j dx_j` and `dλ_n`.
#[derive(Debug, Clone)]
pub struct Liouville {
    pub domain: Arc<CoordinateDomain>,
    pub lambda: DifferentialForm,
    pub dlambda: DifferentialForm,
}

pub fn model_liouville(n: usize) -> Result<Liouville, ModelError> {
    if n == 0 {
        return Err(ModelError::BadParameter("Liouville model needs n ≥ 1".into()));
    }
    let domain = super::sphere::ambient_domain(n, 1.0);
    let mut coeffs = vec![Expr::zero(); 2 * n];
    for j in 0..n {
        coeffs[2 * j] = Expr::var(&format!("y{}", j + 1));
    }
    let lambda = DifferentialForm::one_form(&domain, coeffs)?;
    let dlambda = lambda.ext_d();
    Ok(Liouville { domain, lambda, dlambda })
}

/// Result of a torus basis change on `M_{k,N}`.
#[derive(Debug, Clone)]
pub struct SlAction {
    /// The structure with Lee form `ds + Σ μ′_j dθ′_j`.
    pub structure: LcsStructure,
    /// `μ′ = A^{-T} μ`.
    pub mu: Vec<f64>,
    /// `Ψ: M′ → M`, `θ = A⁻¹θ′`, `p_θ = Aᵀ p′`; satisfies `Ψ*α = α′`
    /// and `Ψ*ω = ω′`.
    pub psi: SmoothMap,
}

fn integer_det(a: &[Vec<i64>]) -> i64 {
    let m = DMatrix::from_fn(a.len(), a.len(), |i, j| a[i][j] as f64);
    m.determinant().round() as i64
}

/// Applies `θ′ = Aθ` for a unimodular integer matrix `A`.
pub fn sl_k_action(a: &[Vec<i64>], k: usize, n: usize, mu: &[f64]) -> Result<SlAction, ModelError> {
    if a.len() != k || a.iter().any(|r| r.len() != k) {
        return Err(ModelError::BadParameter(format!("A must be {k}×{k}")));
    }
    let det = if k == 0 { 1 } else { integer_det(a) };
    if det.abs() != 1 {
        return Err(ModelError::NotUnimodular(det));
    }
    let original = model_reduction_universal(k, n, mu)?;
    let am = DMatrix::from_fn(k, k, |i, j| a[i][j] as f64);
    let inv = am.clone().try_inverse().expect("unimodular");
    // entries of A⁻¹ are integers up to rounding
    let inv = inv.map(|v| v.round());
    let mu_v = nalgebra::DVector::from_column_slice(mu);
    let mu_prime: Vec<f64> = (inv.transpose() * mu_v).iter().copied().collect();
    let mut structure = model_reduction_universal(k, n, &mu_prime)?;
    let m_prime = structure.charts[0].domain.clone();
    let renamed = Arc::new(CoordinateDomain::new(
        &format!("{}'", m_prime.name),
        m_prime.coordinates().to_vec(),
    )?);
    relabel(&mut structure, &renamed)?;
    let target = original.charts[0].domain.clone();
    let mut comps: Vec<Expr> = target.names().iter().map(|c| Expr::var(c)).collect();
    for i in 0..k {
        let th = format!("th{}", i + 1);
        let terms: Vec<Expr> = (0..k)
            .filter(|&j| inv[(i, j)] != 0.0)
            .map(|j| Expr::var(&format!("th{}", j + 1)).scale(inv[(i, j)]))
            .collect();
        comps[target.index_of(&th).expect("angle")] = Expr::sum(&terms);
        let pterms: Vec<Expr> = (0..k)
            .filter(|&j| a[j][i] != 0)
            .map(|j| Expr::var(&momentum(&format!("th{}", j + 1))).scale(a[j][i] as f64))
            .collect();
        comps[target.index_of(&momentum(&th)).expect("momentum")] = Expr::sum(&pterms);
    }
    let psi = SmoothMap::new(&renamed, &target, comps)?;
    structure.name = format!("{}∘A", original.name);
    Ok(SlAction {
        structure,
        mu: mu_prime,
        psi,
    })
}

/// Moves every chart of a single-chart structure onto an equal-coordinate
/// domain with a different name.
fn relabel(s: &mut LcsStructure, dom: &Arc<CoordinateDomain>) -> Result<(), ModelError> {
    let c = &mut s.charts[0];
    let swap = |f: &DifferentialForm| DifferentialForm::from_terms(dom, f.degree(), f.terms().clone());
    c.phi = swap(&c.phi)?;
    c.omega = swap(&c.omega)?;
    c.alpha = c.alpha.as_ref().map(swap).transpose()?;
    c.b = c.b.as_ref().map(|b| VectorField::new(dom, b.components().to_vec())).transpose()?;
    c.e = c.e.as_ref().map(|e| VectorField::new(dom, e.components().to_vec())).transpose()?;
    c.domain = dom.clone();
    Ok(())
}
