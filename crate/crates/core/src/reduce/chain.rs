//! The four stages presenting a first-kind structure `(M, Φ, B)` with
//! `ω = df₀ + Σ μ_j ω_j` as a reduction of `M_{k,N}`:
//!
//! 1. `M₁ = M × T*T^k` reduces onto `M` along the graph of `τ`;
//! 2. `M₂ = ℝ × J¹(M₁)` reduces onto `M₁` along the graph of `−α₁`,
//!    quotiented by the flows of `B₁, E₁`;
//! 3. the shear `s ↦ s − f₀` removes the exact part of the Lee form;
//! 4. `M_{k,N}` reduces onto `M₃` through an immersion
//!    `i′: M₁ → T^k × ℝ^N`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{
    eval_err, one_vs_two_stage, pinv, verify_strong_reducibility, verify_tower, FlowProjection, ReduceError,
    ReductionReport, Stage, TapeMap, TowerReport,
};
use crate::check::{all_passed, Check};
use crate::forms::numeric::rank_threshold;
use crate::forms::{Coordinate, CoordinateDomain, DifferentialForm, SmoothMap, VectorField};
use crate::models::{
    jet_structure, model_reduction_universal, momentum, validate_first_kind, ChartData, LcsStructure, StructureKind,
};
use crate::sampling::CheckOptions;
use crate::symexpr::{Expr, Tape};
use crate::twisted::{d_twisted, line_integral};

/// `ω = df₀ + Σ μ_j ω_j` with `ω_j = τ_j^* dθ` for circle-valued `τ_j`
/// (given by a coordinate lift). `loops` are used to certify that each
/// `ω_j` has integral periods.
#[derive(Debug, Clone)]
pub struct LeeDecomposition {
    pub mu: Vec<f64>,
    pub f0: Expr,
    pub omegas: Vec<DifferentialForm>,
    pub tau: Vec<Expr>,
    pub loops: Vec<SmoothMap>,
}

/// One built stage with its upper structure and construction checks.
#[derive(Debug)]
pub struct Step {
    pub structure: LcsStructure,
    pub stage: Stage,
    pub checks: Vec<Check>,
}

impl Step {
    pub fn chart(&self) -> &ChartData {
        &self.structure.charts[0]
    }
}

/// Moves a structure along a diffeomorphism `d: src → tgt` with inverse
/// `d_inv`: forms are pulled back, fields pushed through `d_inv`.
pub fn transport_chart(chart: &ChartData, d: &SmoothMap, d_inv: &SmoothMap) -> Result<ChartData, ReduceError> {
    let jac_inv = d_inv.jacobian();
    let field = |x: &VectorField| -> Result<VectorField, ReduceError> {
        let comps = jac_inv
            .iter()
            .map(|row| {
                let terms: Vec<Expr> = row
                    .iter()
                    .zip(x.components())
                    .filter(|(a, b)| !a.is_const_zero() && !b.is_const_zero())
                    .map(|(a, b)| d.compose_expr(&a.mul(b)))
                    .collect();
                Expr::sum(&terms)
            })
            .collect();
        Ok(VectorField::new(d.source(), comps)?)
    };
    Ok(ChartData {
        domain: d.source().clone(),
        phi: d.pullback(&chart.phi)?,
        omega: d.pullback(&chart.omega)?,
        alpha: chart.alpha.as_ref().map(|a| d.pullback(a)).transpose()?,
        b: chart.b.as_ref().map(&field).transpose()?,
        e: chart.e.as_ref().map(&field).transpose()?,
    })
}

/// Pulls a chart back along `(x, θ) ↦ (x, θ + f₀(x))`. The Lee form picks
/// up the exact part `df₀`; `f₀` must not involve `circle`.
pub fn shear_lee(chart: &ChartData, circle: &str, f0: &Expr) -> Result<ChartData, ReduceError> {
    if f0.variables().iter().any(|v| v == circle) {
        return Err(ReduceError::Input(format!("shear function depends on `{circle}`")));
    }
    let dom = &chart.domain;
    let shift = |sign: f64| -> Result<SmoothMap, ReduceError> {
        let comps = dom
            .names()
            .iter()
            .map(|n| {
                let v = Expr::var(n);
                if *n == circle {
                    v.add(&f0.scale(sign))
                } else {
                    v
                }
            })
            .collect();
        Ok(SmoothMap::new(dom, dom, comps)?)
    };
    transport_chart(chart, &shift(1.0)?, &shift(-1.0)?)
}

fn relabel(form: &DifferentialForm, dom: &Arc<CoordinateDomain>) -> Result<DifferentialForm, ReduceError> {
    Ok(DifferentialForm::from_terms(
        dom,
        form.degree(),
        form.terms().iter().map(|(k, v)| (k.clone(), v.clone())),
    )?)
}

fn vars(dom: &CoordinateDomain) -> Vec<Expr> {
    dom.names().iter().map(|n| Expr::var(n)).collect()
}

fn require_e(ch: &ChartData) -> Result<&VectorField, ReduceError> {
    ch.e.as_ref()
        .ok_or_else(|| ReduceError::Input(format!("chart `{}` needs a closed-form anti-Lee field", ch.domain.name)))
}

fn require_b(ch: &ChartData) -> Result<&VectorField, ReduceError> {
    ch.b.as_ref()
        .ok_or_else(|| ReduceError::Input(format!("chart `{}` has no transverse field B", ch.domain.name)))
}

fn identity_stage(name: &str, chart: &ChartData) -> Result<Stage, ReduceError> {
    let id = SmoothMap::identity(&chart.domain);
    Ok(Stage {
        name: name.to_string(),
        param: chart.domain.clone(),
        fiber: None,
        embedding: Box::new(TapeMap::new(&id)?),
        projection: Box::new(TapeMap::new(&id)?),
        lift: Box::new(|z, _| Ok(z.to_vec())),
        upper: chart.clone(),
        lower: chart.clone(),
    })
}

/// Stage 1. Certifies the decomposition, then builds
/// `M₁ = M × T*T^k` with
/// `α₁ = α + Σ μ_j r_j (dϑ_j − ω_j)`, `ω₁ = df₀ + Σ μ_j dϑ_j`,
/// `B₁ = B + Σ ω_j(B) ∂ϑ_j`, `E₁ = E + Σ ω_j(E) ∂ϑ_j`, and the
/// submanifold `(x, r) ↦ (x, τ(x), r)` projecting to `x`.
pub fn build_step1(chart: &ChartData, dec: &LeeDecomposition, opts: CheckOptions) -> Result<Step, ReduceError> {
    let k = dec.mu.len();
    if dec.omegas.len() != k || dec.tau.len() != k {
        return Err(ReduceError::Input(format!(
            "μ has {k} entries but {} forms and {} circle maps were given",
            dec.omegas.len(),
            dec.tau.len()
        )));
    }
    let dom = &chart.domain;
    let alpha = chart
        .alpha
        .as_ref()
        .ok_or_else(|| ReduceError::Input("structure has no potential α".into()))?;
    let b = require_b(chart)?;
    let e = require_e(chart)?;
    let mut checks = vec![];

    let omega0 = DifferentialForm::scalar(dom, dec.f0.clone()).ext_d();
    let mut sum = omega0.clone();
    for (m, w) in dec.mu.iter().zip(&dec.omegas) {
        sum = sum.add(&w.scale(*m))?;
    }
    let res = chart.omega.sub(&sum)?.certify_zero(opts.samples, f64::INFINITY, opts.seed)?.max_residual;
    if res > opts.tol {
        return Err(ReduceError::Decomposition(res));
    }
    checks.push(Check::residual("lee-decomposition", "ω = df₀ + Σ μ_j ω_j", res, opts.tol));
    let mut tau_res = 0.0f64;
    for (t, w) in dec.tau.iter().zip(&dec.omegas) {
        let dt = DifferentialForm::scalar(dom, t.clone()).ext_d();
        tau_res = tau_res.max(dt.sub(w)?.certify_zero(opts.samples, f64::INFINITY, opts.seed)?.max_residual);
    }
    if tau_res > opts.tol {
        return Err(ReduceError::Tau(tau_res));
    }
    checks.push(Check::residual("circle-maps", "τ_j^* dθ = ω_j", tau_res, opts.tol));
    if !dec.loops.is_empty() {
        let tol = opts.tol.max(1e-8);
        let mut worst = 0.0f64;
        for (j, w) in dec.omegas.iter().enumerate() {
            for l in &dec.loops {
                let p = line_integral(w, l, tol * 1e-2)?;
                let gap = (p - p.round()).abs();
                if gap > tol {
                    return Err(ReduceError::NotIntegral { index: j + 1, period: p });
                }
                worst = worst.max(gap);
            }
        }
        checks.push(Check::residual("integral-periods", "∫_γ ω_j ∈ ℤ", worst, tol));
    }

    if k == 0 {
        let structure = LcsStructure::single("M1", StructureKind::FirstKind, chart.clone());
        return Ok(Step {
            stage: identity_stage("step1", chart)?,
            structure,
            checks,
        });
    }

    let rs = Arc::new(CoordinateDomain::new(
        "R^k",
        (1..=k).map(|j| Coordinate::linear(&format!("r{j}"), -1.0, 1.0)).collect(),
    )?);
    let angles = CoordinateDomain::new(
        "T^k",
        (1..=k).map(|j| Coordinate::angular(&format!("vth{j}"))).collect(),
    )?;
    let m1 = Arc::new(dom.product(&angles.product(&rs, "T*T^k")?, "M1")?);
    let p1 = Arc::new(dom.product(&rs, "P1")?);

    let mut alpha1 = alpha.extend_to(&m1)?;
    let mut omega1 = omega0.extend_to(&m1)?;
    let mut b1 = b.extend_to(&m1)?;
    let mut e1 = e.extend_to(&m1)?;
    for j in 0..k {
        let (vth, r) = (format!("vth{j}", j = j + 1), format!("r{}", j + 1));
        let dvth = DifferentialForm::dx(&m1, &vth)?;
        let wj = dec.omegas[j].extend_to(&m1)?;
        let coef = Expr::var(&r).scale(dec.mu[j]);
        alpha1 = alpha1.add(&dvth.sub(&wj)?.scale_by(&coef))?;
        omega1 = omega1.add(&dvth.scale(dec.mu[j]))?;
        let wb = dec.omegas[j].pair(b)?;
        let we = dec.omegas[j].pair(e)?;
        b1 = b1.add(&VectorField::from_named(&m1, &[(&vth, wb)])?)?;
        e1 = e1.add(&VectorField::from_named(&m1, &[(&vth, we)])?)?;
    }
    let phi1 = d_twisted(&omega1, &alpha1)?;
    let upper = ChartData {
        domain: m1.clone(),
        phi: phi1,
        omega: omega1,
        alpha: Some(alpha1),
        b: Some(b1),
        e: Some(e1),
    };
    let structure = LcsStructure::single("M1", StructureKind::FirstKind, upper.clone());
    checks.extend(validate_first_kind(&structure, opts)?);

    let mut comps = vars(dom);
    comps.extend(dec.tau.iter().cloned());
    comps.extend(vars(&rs));
    let f = SmoothMap::new(&p1, &m1, comps)?;
    let pi = SmoothMap::new(&p1, dom, vars(dom))?;
    let stage = Stage {
        name: "step1".into(),
        param: p1,
        fiber: Some(rs),
        embedding: Box::new(TapeMap::new(&f)?),
        projection: Box::new(TapeMap::new(&pi)?),
        lift: Box::new(|z, r| Ok(z.iter().chain(r).copied().collect())),
        upper,
        lower: chart.clone(),
    };
    Ok(Step {
        structure,
        stage,
        checks,
    })
}

/// Stage 2. `M₂ = ℝ_s × ℝ_u × T*M₁` with `α₂ = du − λ`, `ω₂ = ds + ω₁`;
/// the submanifold `(s, u, x) ↦ (s, −u, x, −α₁(x))` projects by
/// `(s, u, x) ↦ ψ_u(φ_s(x))`, the flows of `E₁` and `B₁`, integrated with
/// local tolerance `flow_tol` over `s, u ∈ [−1, 1]`.
pub fn build_step2(m1: &ChartData, flow_tol: f64, opts: CheckOptions) -> Result<Step, ReduceError> {
    let alpha1 = m1
        .alpha
        .as_ref()
        .ok_or_else(|| ReduceError::Input("M₁ has no potential".into()))?;
    let b1 = require_b(m1)?;
    let e1 = require_e(m1)?;
    let mut structure = jet_structure("M2", &m1.domain, &m1.omega, 1.0)?;
    let m2 = structure.charts[0].clone();
    let su = Arc::new(CoordinateDomain::new(
        "su",
        vec![Coordinate::linear("s", -1.0, 1.0), Coordinate::linear("u", -1.0, 1.0)],
    )?);
    let p2 = Arc::new(su.product(&m1.domain, "P2")?);
    let graph = |s: Expr, u: Expr, src: &Arc<CoordinateDomain>| -> Result<SmoothMap, ReduceError> {
        let mut comps = vec![s, u];
        comps.extend(vars(&m1.domain));
        comps.extend((0..m1.domain.dim()).map(|i| alpha1.coefficient(&[i]).neg()));
        Ok(SmoothMap::new(src, &m2.domain, comps)?)
    };
    let g = graph(Expr::var("s"), Expr::var("u").neg(), &p2)?;
    let zero_slice = graph(Expr::zero(), Expr::zero(), &m1.domain)?;

    let mut checks = vec![
        Check::forms_equal(
            "graph-alpha",
            "G₀*α₂ = α₁",
            &zero_slice.pullback(m2.alpha.as_ref().expect("jet potential"))?,
            alpha1,
            opts,
        )?,
        Check::forms_equal("graph-omega", "G₀*ω₂ = ω₁", &zero_slice.pullback(&m2.omega)?, &m1.omega, opts)?,
        Check::forms_equal("graph-phi", "G₀*Φ₂ = Φ₁", &zero_slice.pullback(&m2.phi)?, &m1.phi, opts)?,
    ];
    let flows = Arc::new(FlowProjection::new(b1, e1, flow_tol)?);
    let pts = p2.sample_points(opts.samples.min(50), opts.seed);
    let gaps = crate::exec::try_map(&pts, |p| flows.commutator_gap(&p[2..], p[0], p[1]))?;
    checks.push(Check::residual(
        "flows-commute",
        "φ_s ψ_u = ψ_u φ_s",
        gaps.into_iter().fold(0.0, f64::max),
        opts.tol.max(1e-6),
    ));
    structure.name = "M2".into();
    let lift_flows = flows.clone();
    let stage = Stage {
        name: "step2".into(),
        param: p2,
        fiber: Some(su),
        embedding: Box::new(TapeMap::new(&g)?),
        projection: Box::new(FlowProjectionRef(flows)),
        lift: Box::new(move |z, f| {
            let x = lift_flows.backward(z, f[0], f[1])?;
            Ok([f[0], f[1]].into_iter().chain(x).collect())
        }),
        upper: m2,
        lower: m1.clone(),
    };
    Ok(Step {
        structure,
        stage,
        checks,
    })
}

/// Shared handle so the lift and the projection use the same flows.
struct FlowProjectionRef(Arc<FlowProjection>);

impl super::PointMap for FlowProjectionRef {
    fn source_dim(&self) -> usize {
        self.0.source_dim()
    }
    fn target_dim(&self) -> usize {
        self.0.target_dim()
    }
    fn eval(&self, p: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>), ReduceError> {
        self.0.eval(p)
    }
}

/// Stage 3. `H(s, u, ξ, x) = (s − f₀(x), u, ξ, x)` pulls `ω₂ = ds + df₀ +
/// Σ μ_j dϑ_j` back to `ds + Σ μ_j dϑ_j` and leaves `α₂, B₂, E₂` alone.
pub fn build_step3(m2: &ChartData, f0: &Expr, opts: CheckOptions) -> Result<Step, ReduceError> {
    let m3dom = Arc::new(CoordinateDomain::new("M3", m2.domain.coordinates().to_vec())?);
    let shift = |src: &Arc<CoordinateDomain>, tgt: &Arc<CoordinateDomain>, sign: f64| {
        let comps = src
            .names()
            .iter()
            .map(|n| {
                if *n == "s" {
                    Expr::var("s").add(&f0.scale(sign))
                } else {
                    Expr::var(n)
                }
            })
            .collect();
        SmoothMap::new(src, tgt, comps)
    };
    let h = shift(&m3dom, &m2.domain, -1.0)?;
    let h_inv = shift(&m2.domain, &m3dom, 1.0)?;
    let m3 = transport_chart(m2, &h, &h_inv)?;

    let df0 = DifferentialForm::scalar(&m3dom, f0.clone()).ext_d();
    let field_gap = |a: &VectorField, b: &VectorField| -> Result<DifferentialForm, ReduceError> {
        let comps = a.components().iter().zip(b.components()).map(|(x, y)| x.sub(y)).collect();
        Ok(DifferentialForm::one_form(&m3dom, comps)?)
    };
    let b2 = require_b(m2)?;
    let e2 = require_e(m2)?;
    let b2_r = VectorField::new(&m3dom, b2.components().to_vec())?;
    let e2_r = VectorField::new(&m3dom, e2.components().to_vec())?;
    let mut checks = vec![
        Check::forms_equal(
            "alpha-fixed",
            "H*α₂ = α₂",
            m3.alpha.as_ref().expect("transported potential"),
            &relabel(m2.alpha.as_ref().expect("jet potential"), &m3dom)?,
            opts,
        )?,
        Check::forms_equal(
            "lee-untwisted",
            "H*ω₂ = ω₂ − df₀",
            &m3.omega,
            &relabel(&m2.omega, &m3dom)?.sub(&df0)?,
            opts,
        )?,
        Check::form_zero("b-fixed", "H^*B₂ = B₂", &field_gap(m3.b.as_ref().expect("B"), &b2_r)?, opts)?,
        Check::form_zero("e-fixed", "H^*E₂ = E₂", &field_gap(m3.e.as_ref().expect("E"), &e2_r)?, opts)?,
    ];
    let tape = h.compile()?;
    let pts = m3dom.sample_points(opts.samples.min(50), opts.seed);
    let dets = crate::exec::try_map(&pts, |p| {
        tape.eval_raw(p)
            .map(|(_, j)| (j.determinant() - 1.0).abs())
            .map_err(eval_err(&m3dom, p))
    })?;
    checks.push(Check::residual("unimodular", "det dH = 1", dets.into_iter().fold(0.0, f64::max), opts.tol));

    let structure = LcsStructure::single("M3", StructureKind::FirstKind, m3.clone());
    let inv = h_inv.compile()?;
    let inv_dom = m2.domain.clone();
    let stage = Stage {
        name: "step3".into(),
        param: m3dom.clone(),
        fiber: None,
        embedding: Box::new(TapeMap::new(&SmoothMap::identity(&m3dom))?),
        projection: Box::new(TapeMap::new(&h)?),
        lift: Box::new(move |z, _| Ok(inv.eval_raw(z).map_err(eval_err(&inv_dom, z))?.0)),
        upper: m3,
        lower: m2.clone(),
    };
    Ok(Step {
        structure,
        stage,
        checks,
    })
}

/// Stage 4. Given an immersion `i′: M₁ → T^k × ℝ^N` (components in the
/// universal base order `th1.., t1..`, angular part lifting the identity
/// of `T^k`), the submanifold
/// `(s, u, x, p) ↦ (s, u, i′(x), p)` of `M_{k,N}` projects to
/// `(s, u, x, (di′)ᵀp) ∈ M₃`. Requires `N ≥ 2 dim M + k`.
pub fn build_step4(
    m3: &ChartData,
    m1: &ChartData,
    iprime: &[Expr],
    k: usize,
    n: usize,
    mu: &[f64],
    opts: CheckOptions,
) -> Result<Step, ReduceError> {
    let d1 = m1.domain.dim();
    if iprime.len() != k + n {
        return Err(ReduceError::Input(format!(
            "i′ has {} components, expected k + N = {}",
            iprime.len(),
            k + n
        )));
    }
    let dim_m = d1 - 2 * k;
    if n < 2 * dim_m + k {
        return Err(ReduceError::Input(format!("N = {n} is below 2·dim M + k = {}", 2 * dim_m + k)));
    }
    let universal = model_reduction_universal(k, n, mu)?;
    let u = universal.charts[0].clone();
    let base_names: Vec<String> = (1..=k)
        .map(|j| format!("th{j}"))
        .chain((1..=n).map(|i| format!("t{i}")))
        .collect();
    let moms: Vec<String> = base_names.iter().map(|b| momentum(b)).collect();
    let su = CoordinateDomain::new(
        "su",
        vec![Coordinate::linear("s", -1.0, 1.0), Coordinate::linear("u", -1.0, 1.0)],
    )?;
    let fiber = Arc::new(CoordinateDomain::new(
        "momenta",
        moms.iter().map(|m| Coordinate::linear(m, -1.0, 1.0)).collect(),
    )?);
    let p4 = Arc::new(su.product(&m1.domain, "tmp")?.product(&fiber, "P4")?);

    let mut up = vec![Expr::var("s"), Expr::var("u")];
    up.extend(iprime.iter().cloned());
    up.extend(moms.iter().map(|m| Expr::var(m)));
    let iota = SmoothMap::new(&p4, &u.domain, up)?;

    let names1 = m1.domain.names();
    let mut down = vec![Expr::var("s"), Expr::var("u")];
    down.extend(vars(&m1.domain));
    for q in &names1 {
        let terms: Vec<Expr> = iprime
            .iter()
            .zip(&moms)
            .map(|(c, m)| c.derivative(q).mul(&Expr::var(m)))
            .collect();
        down.push(Expr::sum(&terms));
    }
    let pi = SmoothMap::new(&p4, &m3.domain, down)?;

    let jac: Vec<Expr> = iprime.iter().flat_map(|c| names1.iter().map(move |q| c.derivative(q))).collect();
    let jac_tape = Arc::new(Tape::compile_in(&jac, &m1.domain)?);
    let rows = k + n;
    let pts = m1.domain.sample_points(opts.samples.min(100), opts.seed);
    let thr = rank_threshold();
    let ranks = crate::exec::try_map(&pts, |p| {
        jac_tape
            .eval(p)
            .map(|v| super::rank(&DMatrix::from_row_slice(rows, d1, &v), thr))
            .map_err(eval_err(&m1.domain, p))
    })?;
    let mut checks = vec![Check::rank(
        "immersion",
        "rank di′ = dim M₁",
        ranks.into_iter().min().unwrap_or(0),
        d1,
    )];
    checks.extend(validate_first_kind(&universal, opts)?);

    let m1dom = m1.domain.clone();
    let lift_tape = jac_tape.clone();
    let lift = move |z: &[f64], w: &[f64]| -> Result<Vec<f64>, ReduceError> {
        let x = &z[2..2 + d1];
        let xi = DVector::from_column_slice(&z[2 + d1..2 + 2 * d1]);
        let j = DMatrix::from_row_slice(rows, d1, &lift_tape.eval(x).map_err(eval_err(&m1dom, x))?);
        let jt = j.transpose();
        let free = DMatrix::<f64>::identity(rows, rows) - &j * pinv(&j);
        let p = pinv(&jt) * xi + free * DVector::from_column_slice(w);
        Ok(z[..2 + d1].iter().copied().chain(p.iter().copied()).collect())
    };
    let stage = Stage {
        name: "step4".into(),
        param: p4,
        fiber: Some(fiber),
        embedding: Box::new(TapeMap::new(&iota)?),
        projection: Box::new(TapeMap::new(&pi)?),
        lift: Box::new(lift),
        upper: u,
        lower: m3.clone(),
    };
    Ok(Step {
        structure: universal,
        stage,
        checks,
    })
}

/// Construction checks and reducibility report of one stage.
#[derive(Debug, Clone, serde::Serialize)]
pub struct StepReport {
    pub name: String,
    pub checks: Vec<Check>,
    pub reduction: ReductionReport,
}

/// Everything certified along the chain.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ChainReport {
    pub universal: String,
    pub steps: Vec<StepReport>,
    pub tower: TowerReport,
    pub one_vs_two_stage: Check,
}

impl ChainReport {
    pub fn checks(&self) -> Vec<Check> {
        let mut out = vec![];
        for s in &self.steps {
            out.extend(s.checks.iter().cloned());
            out.extend(s.reduction.checks.iter().cloned());
        }
        out.extend(self.tower.checks.iter().cloned());
        out.push(self.one_vs_two_stage.clone());
        out
    }

    pub fn passed(&self) -> bool {
        all_passed(&self.checks())
    }
}

/// Runs all four stages on one chart. Stages with flows, the tower and the
/// one-vs-two-stage comparison use tolerance `max(opts.tol, 1e-6)`.
pub fn run_reduction_chain(
    chart: &ChartData,
    dec: &LeeDecomposition,
    iprime: &[Expr],
    n: usize,
    opts: CheckOptions,
) -> Result<(ChainReport, Vec<Step>), ReduceError> {
    let flow_opts = opts.with_tol(opts.tol.max(1e-6));
    let k = dec.mu.len();
    let s1 = build_step1(chart, dec, opts)?;
    let s2 = build_step2(s1.chart(), 1e-9, opts)?;
    let s3 = build_step3(s2.chart(), &dec.f0, opts)?;
    let s4 = build_step4(s3.chart(), s1.chart(), iprime, k, n, &dec.mu, opts)?;
    let steps = vec![s1, s2, s3, s4];
    let mut reports = vec![];
    for (i, s) in steps.iter().enumerate() {
        let o = if i == 1 { flow_opts } else { opts };
        reports.push(StepReport {
            name: s.stage.name.clone(),
            checks: s.checks.iter().cloned().map(|c| c.prefixed(&s.stage.name)).collect(),
            reduction: verify_strong_reducibility(&s.stage, o)?,
        });
    }
    let stages: Vec<&Stage> = steps.iter().map(|s| &s.stage).collect();
    let tower = verify_tower(&stages, chart, flow_opts)?;
    let agreement = one_vs_two_stage(&stages, 1, flow_opts)?;
    Ok((
        ChainReport {
            universal: steps[3].structure.name.clone(),
            steps: reports,
            tower,
            one_vs_two_stage: agreement,
        },
        steps,
    ))
}
