//! Contact embeddings into odd spheres.
//!
//! A compact manifold arrives embedded in `ℝ^{2n}` (one parametrization per
//! chart) together with an ambient 1-form `Θ̄ = Σ f_k dx_k`. The maps built
//! here land on a round sphere and pull `c·η_N` back to `Θ = Θ̄|_M`:
//!
//! * `Ψ₁ = (x_k, f_k, …, sqrt(r₁² − Σ(f_k² + x_k²)), 0)` gives `Θ − dφ`
//!   with `φ = ½Σ f_k x_k`;
//! * `Ψ₂` appends the pair `(2φ, 1)` which contributes exactly `dφ`;
//! * `Ψ₃ = Ψ₂ / r₂` moves to the unit sphere, where `c = r₂²`.
//!
//! The variant that appends `(φ, 1)` instead is kept for comparison; its
//! pullback misses `Θ` by `½dφ`.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::check::{all_passed, Check};
use crate::forms::numeric::{numerical_rank, rank_threshold};
use crate::forms::{Coordinate, CoordinateDomain, DifferentialForm, FormError, SmoothMap};
use crate::lattice::RelationSearch;
use crate::models::sphere::{eta, SphereAtlas, CIRCLE};
use crate::models::{LcsStructure, ModelError};
use crate::sampling::CheckOptions;
use crate::symexpr::{Expr, SymError, Tape};
use crate::twisted::{classify_morphism, d_twisted, MorphismReport, TwistedError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error(transparent)]
    Form(#[from] FormError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Twisted(#[from] TwistedError),
    #[error("safety factor must exceed 1, got {0}")]
    SafetyFactor(f64),
    #[error("all coefficients and coordinates vanish on the samples")]
    Degenerate,
    #[error("bad problem: {0}")]
    Problem(String),
    #[error("radius {radius} does not bound the image: value {value} at {point}")]
    Radius { radius: f64, value: f64, point: String },
    #[error("pullback identity fails: residual {0:e}")]
    Construction(f64),
    #[error("target sphere S^{target} too small for image in S^{needed}")]
    TooSmall { target: usize, needed: usize },
    #[error("circle map does not realize the Lee form: residual {0:e}")]
    Tau(f64),
    #[error("α is not a potential: residual {0:e}")]
    NotPotential(f64),
}

impl From<SymError> for EmbedError {
    fn from(e: SymError) -> Self {
        EmbedError::Form(FormError::Sym(e))
    }
}

/// A manifold presented by chart parametrizations into `ℝ^{2n}` with the
/// ambient 1-form `Σ f_k dx_k`.
#[derive(Debug, Clone)]
pub struct EmbeddingProblem {
    pub name: String,
    pub ambient: Arc<CoordinateDomain>,
    pub charts: Vec<SmoothMap>,
    /// `(ambient index k, f_k)` for the nonzero coefficients.
    pub coefficients: Vec<(usize, Expr)>,
    pub rho: f64,
}

impl EmbeddingProblem {
    pub fn new(
        name: &str,
        ambient: &Arc<CoordinateDomain>,
        charts: Vec<SmoothMap>,
        coefficients: Vec<(usize, Expr)>,
        rho: f64,
    ) -> Result<Self, EmbedError> {
        if ambient.dim() % 2 != 0 {
            return Err(EmbedError::Problem("ambient dimension must be even".into()));
        }
        let mut seen = vec![false; ambient.dim()];
        for (k, f) in &coefficients {
            if *k >= ambient.dim() || std::mem::replace(&mut seen[*k], true) {
                return Err(EmbedError::Problem(format!("bad or repeated coefficient index {k}")));
            }
            for v in f.variables() {
                if ambient.index_of(&v).is_none() {
                    return Err(EmbedError::Problem(format!("coefficient uses unknown variable `{v}`")));
                }
            }
        }
        for c in &charts {
            crate::forms::same_domain(c.target(), ambient)?;
        }
        Ok(EmbeddingProblem {
            name: name.to_string(),
            ambient: ambient.clone(),
            charts,
            coefficients,
            rho,
        })
    }

    /// Adds zero coefficients for every ambient coordinate not yet listed,
    /// so every coordinate of `M` appears among the `x_k` and the sphere
    /// map is an embedding whenever the ambient one is. Zero pairs change
    /// neither `Θ` nor `φ`.
    pub fn with_all_coordinates(mut self) -> Self {
        for k in 0..self.ambient.dim() {
            if !self.coefficients.iter().any(|(i, _)| *i == k) {
                self.coefficients.push((k, Expr::zero()));
            }
        }
        self.coefficients.sort_by_key(|(k, _)| *k);
        self
    }

    pub fn p(&self) -> usize {
        self.coefficients.len()
    }

    pub fn theta_bar(&self) -> DifferentialForm {
        let mut c = vec![Expr::zero(); self.ambient.dim()];
        for (k, f) in &self.coefficients {
            c[*k] = f.clone();
        }
        DifferentialForm::one_form(&self.ambient, c).expect("dimension matches")
    }

    /// `Θ` on chart `c`.
    pub fn theta(&self, c: usize) -> Result<DifferentialForm, EmbedError> {
        Ok(self.charts[c].pullback(&self.theta_bar())?)
    }

    /// `(x_k, f_k)` as expressions in the coordinates of chart `c`.
    fn pairs(&self, c: usize) -> Vec<(Expr, Expr)> {
        let map = &self.charts[c];
        self.coefficients
            .iter()
            .map(|(k, f)| (map.components()[*k].clone(), map.compose_expr(f)))
            .collect()
    }

    fn phi(&self, c: usize) -> Expr {
        let terms: Vec<Expr> = self.pairs(c).iter().map(|(x, f)| x.mul(f)).collect();
        Expr::sum(&terms).scale(0.5)
    }

    fn chart_samples(&self, c: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
        self.charts[c].source().sample_points(count, seed ^ (c as u64).wrapping_mul(0x9e37_79b9))
    }
}

/// `ρ · max sqrt(Σ e²)` over the points, together with the unscaled max.
fn scaled_sup(exprs: &[Expr], domain: &CoordinateDomain, points: &[Vec<f64>], rho: f64) -> Result<(f64, f64), EmbedError> {
    if !(rho > 1.0) {
        return Err(EmbedError::SafetyFactor(rho));
    }
    let sq: Vec<Expr> = exprs.iter().map(|e| e.powi(2)).collect();
    let tape = Tape::compile_in(&[Expr::sum(&sq)], domain)?;
    let vals = crate::sampling::eval_all(&tape, domain, points)?;
    let sup = vals.iter().map(|v| v[0]).fold(0.0f64, f64::max).sqrt();
    if sup == 0.0 {
        return Err(EmbedError::Degenerate);
    }
    Ok((rho * sup, sup))
}

/// Radius `r` with `Σ(f_k² + x_k²) < r²` on the sampled points: `ρ` times
/// the sampled supremum. Returns `(r, sup)`.
pub fn radius_bound(
    fs: &[Expr],
    coords: &[Expr],
    domain: &CoordinateDomain,
    points: &[Vec<f64>],
    rho: f64,
) -> Result<(f64, f64), EmbedError> {
    let all: Vec<Expr> = fs.iter().chain(coords).cloned().collect();
    scaled_sup(&all, domain, points, rho)
}

/// Target `ℝ^{2N}` with coordinates `X1, Y1, …`, optionally `× S¹`.
pub fn sphere_target(n: usize, bound: f64, circle: bool) -> Arc<CoordinateDomain> {
    let mut coords: Vec<Coordinate> = (1..=n)
        .flat_map(|j| [format!("X{j}"), format!("Y{j}")])
        .map(|c| Coordinate::linear(&c, -bound, bound))
        .collect();
    let mut name = format!("R{}", 2 * n);
    if circle {
        coords.push(Coordinate::angular(CIRCLE));
        name.push_str("xS1");
    }
    Arc::new(CoordinateDomain::new(&name, coords).expect("distinct names"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Psi2Variant {
    /// Last pair `(2φ, 1)`: the pullback is exactly `Θ`.
    DoublePhi,
    /// Last pair `(φ, 1)`: the pullback is `Θ − ½dφ`.
    SinglePhi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    /// Image on the sphere of radius `r₁` in `ℝ^{2p+2}`.
    Psi1,
    /// Image on the sphere of radius `r₂` in `ℝ^{2p+4}`.
    Psi2,
    /// Image on the unit sphere.
    Unit,
}

/// Maps (one per chart) into the sphere `S^{2N−1}` of radius `radius`, with
/// `Ψ*(c·η_N)` certified against `Θ` (or `Θ − dφ` at stage `Psi1`).
#[derive(Debug, Clone)]
pub struct EmbeddingSolution {
    pub problem: String,
    pub variant: Psi2Variant,
    pub stage: Stage,
    pub n: usize,
    pub target: Arc<CoordinateDomain>,
    pub maps: Vec<SmoothMap>,
    pub r1: f64,
    pub r2: f64,
    pub radius: f64,
    pub c: f64,
    /// `φ = ½Σ f_k x_k` per chart.
    pub phi: Vec<Expr>,
    pub checks: Vec<Check>,
}

impl EmbeddingSolution {
    pub fn passed(&self) -> bool {
        all_passed(&self.checks)
    }
}

fn build_maps(
    problem: &EmbeddingProblem,
    target: &Arc<CoordinateDomain>,
    comps: impl Fn(usize) -> Vec<Expr>,
) -> Result<Vec<SmoothMap>, EmbedError> {
    (0..problem.charts.len())
        .map(|c| Ok(SmoothMap::new(problem.charts[c].source(), target, comps(c))?))
        .collect()
}

/// `max |Ψ*(c·η_N) − expected|` over all charts.
fn pullback_residual(
    maps: &[SmoothMap],
    n: usize,
    c: f64,
    expected: &[DifferentialForm],
    opts: CheckOptions,
) -> Result<(f64, String), EmbedError> {
    let mut worst = (0.0f64, String::new());
    for (i, (m, e)) in maps.iter().zip(expected).enumerate() {
        let pulled = m.pullback(&eta(m.target(), n).scale(c))?;
        let cert = pulled.certify_equal(e, opts.samples, f64::INFINITY, opts.seed ^ i as u64)?;
        if cert.max_residual >= worst.0 {
            worst = (cert.max_residual, m.source().format_point(&cert.worst_point));
        }
    }
    Ok(worst)
}

/// `max ||Ψ|² − r²|` over the samples.
fn sphere_residual(maps: &[SmoothMap], radius: f64, opts: CheckOptions) -> Result<f64, EmbedError> {
    let mut worst = 0.0f64;
    for (i, m) in maps.iter().enumerate() {
        let sq: Vec<Expr> = m.components().iter().filter(|e| !e.is_const_zero()).map(|e| e.powi(2)).collect();
        let tape = Tape::compile_in(&[Expr::sum(&sq)], m.source())?;
        let pts = m.source().sample_points(opts.samples, opts.seed ^ 0x5e ^ i as u64);
        for v in crate::sampling::eval_all(&tape, m.source(), &pts)? {
            worst = worst.max((v[0] - radius * radius).abs());
        }
    }
    Ok(worst)
}

/// Fails with a radius error when `Σ e² ≥ r²` at any certification sample.
fn ensure_inside(problem: &EmbeddingProblem, exprs: impl Fn(usize) -> Vec<Expr>, radius: f64, opts: CheckOptions) -> Result<(), EmbedError> {
    for c in 0..problem.charts.len() {
        let dom = problem.charts[c].source();
        let sq: Vec<Expr> = exprs(c).iter().map(|e| e.powi(2)).collect();
        let tape = Tape::compile_in(&[Expr::sum(&sq)], dom)?;
        let pts = problem.chart_samples(c, opts.samples, opts.seed ^ 0x1d);
        for (v, p) in crate::sampling::eval_all(&tape, dom, &pts)?.iter().zip(&pts) {
            if v[0] >= radius * radius {
                return Err(EmbedError::Radius {
                    radius,
                    value: v[0].sqrt(),
                    point: dom.format_point(p),
                });
            }
        }
    }
    Ok(())
}

fn flat_pairs(pairs: &[(Expr, Expr)]) -> Vec<Expr> {
    pairs.iter().flat_map(|(x, f)| [x.clone(), f.clone()]).collect()
}

/// Samples of `M` used to estimate suprema (all charts).
fn sup_points(problem: &EmbeddingProblem, opts: CheckOptions) -> Vec<(usize, Vec<f64>)> {
    (0..problem.charts.len())
        .flat_map(|c| problem.chart_samples(c, opts.samples, opts.seed).into_iter().map(move |p| (c, p)))
        .collect()
}

fn chart_sup(problem: &EmbeddingProblem, exprs: impl Fn(usize) -> Vec<Expr>, rho: f64, opts: CheckOptions) -> Result<(f64, f64), EmbedError> {
    let pts = sup_points(problem, opts);
    let mut best = (0.0f64, 0.0f64);
    let mut any = false;
    for c in 0..problem.charts.len() {
        let mine: Vec<Vec<f64>> = pts.iter().filter(|(k, _)| *k == c).map(|(_, p)| p.clone()).collect();
        match scaled_sup(&exprs(c), problem.charts[c].source(), &mine, rho) {
            Ok(v) => {
                any = true;
                if v.1 > best.1 {
                    best = v;
                }
            }
            Err(EmbedError::Degenerate) => {}
            Err(e) => return Err(e),
        }
    }
    if !any {
        return Err(EmbedError::Degenerate);
    }
    Ok(best)
}

/// `Ψ₁` into the sphere of radius `r₁` in `ℝ^{2p+2}`, certified against
/// `Θ − dφ`.
pub fn build_psi1(problem: &EmbeddingProblem, opts: CheckOptions) -> Result<EmbeddingSolution, EmbedError> {
    let p = problem.p();
    let (r1, _) = chart_sup(problem, |c| flat_pairs(&problem.pairs(c)), problem.rho, opts)?;
    ensure_inside(problem, |c| flat_pairs(&problem.pairs(c)), r1, opts)?;
    let target = sphere_target(p + 1, r1, false);
    let maps = build_maps(problem, &target, |c| {
        let pairs = problem.pairs(c);
        let sq: Vec<Expr> = flat_pairs(&pairs).iter().map(|e| e.powi(2)).collect();
        let mut v = flat_pairs(&pairs);
        v.push(Expr::constant(r1 * r1).sub(&Expr::sum(&sq)).sqrt());
        v.push(Expr::zero());
        v
    })?;
    let phi: Vec<Expr> = (0..problem.charts.len()).map(|c| problem.phi(c)).collect();
    let expected = (0..problem.charts.len())
        .map(|c| {
            let dphi = DifferentialForm::scalar(maps[c].source(), phi[c].clone()).ext_d();
            Ok(problem.theta(c)?.sub(&dphi)?)
        })
        .collect::<Result<Vec<_>, EmbedError>>()?;
    let (res, at) = pullback_residual(&maps, p + 1, 1.0, &expected, opts)?;
    let mut identity = Check::residual("psi1-pullback", "Ψ₁*η = Θ − dφ", res, opts.tol);
    if !identity.passed {
        identity = identity.with_detail(format!("worst point {at}"));
    }
    let checks = vec![
        Check::residual("psi1-sphere", "|Ψ₁|² = r₁²", sphere_residual(&maps, r1, opts)?, opts.tol),
        identity,
    ];
    Ok(EmbeddingSolution {
        problem: problem.name.clone(),
        variant: Psi2Variant::DoublePhi,
        stage: Stage::Psi1,
        n: p + 1,
        target,
        maps,
        r1,
        r2: f64::NAN,
        radius: r1,
        c: 1.0,
        phi,
        checks,
    })
}

/// `Ψ₂` into the sphere of radius `r₂` in `ℝ^{2p+4}`.
///
/// The `DoublePhi` variant fails with a construction error if its pullback
/// misses `Θ`; the `SinglePhi` variant records its measured defect instead and
/// certifies that the defect is `½dφ`.
pub fn build_psi2(problem: &EmbeddingProblem, variant: Psi2Variant, opts: CheckOptions) -> Result<EmbeddingSolution, EmbedError> {
    let psi1 = build_psi1(problem, opts)?;
    let p = problem.p();
    let last = |c: usize| match variant {
        Psi2Variant::DoublePhi => psi1.phi[c].scale(2.0),
        Psi2Variant::SinglePhi => psi1.phi[c].clone(),
    };
    // γ = 1 + last² + Σ(f² + x²)
    let gamma_parts = |c: usize| {
        let mut v = vec![Expr::one(), last(c)];
        v.extend(flat_pairs(&problem.pairs(c)));
        v
    };
    let (r2, _) = chart_sup(problem, gamma_parts, problem.rho, opts)?;
    ensure_inside(problem, gamma_parts, r2, opts)?;
    let target = sphere_target(p + 2, r2, false);
    let maps = build_maps(problem, &target, |c| {
        let parts = gamma_parts(c);
        let sq: Vec<Expr> = parts.iter().map(|e| e.powi(2)).collect();
        let mut v = flat_pairs(&problem.pairs(c));
        v.push(Expr::constant(r2 * r2).sub(&Expr::sum(&sq)).sqrt());
        v.push(Expr::zero());
        v.push(last(c));
        v.push(Expr::one());
        v
    })?;
    let thetas = (0..problem.charts.len()).map(|c| problem.theta(c)).collect::<Result<Vec<_>, _>>()?;
    let (res, at) = pullback_residual(&maps, p + 2, 1.0, &thetas, opts)?;
    let mut checks = vec![Check::residual(
        "psi2-sphere",
        "|Ψ₂|² = r₂²",
        sphere_residual(&maps, r2, opts)?,
        opts.tol,
    )];
    let mut identity = Check::residual("psi2-pullback", "Ψ₂*η = Θ", res, opts.tol);
    match variant {
        Psi2Variant::DoublePhi => {
            if !identity.passed {
                return Err(EmbedError::Construction(res));
            }
            checks.push(identity);
        }
        Psi2Variant::SinglePhi => {
            identity = identity.with_detail(format!("last pair (φ, 1); worst point {at}"));
            checks.push(identity);
            let expected = (0..problem.charts.len())
                .map(|c| {
                    let half = DifferentialForm::scalar(maps[c].source(), psi1.phi[c].clone()).ext_d().scale(0.5);
                    Ok(thetas[c].sub(&half)?)
                })
                .collect::<Result<Vec<_>, EmbedError>>()?;
            let (d, _) = pullback_residual(&maps, p + 2, 1.0, &expected, opts)?;
            checks.push(Check::residual("single-phi-defect", "Θ − Ψ₂*η = ½dφ", d, opts.tol));
        }
    }
    Ok(EmbeddingSolution {
        problem: problem.name.clone(),
        variant,
        stage: Stage::Psi2,
        n: p + 2,
        target,
        maps,
        r1: psi1.r1,
        r2,
        radius: r2,
        c: 1.0,
        phi: psi1.phi,
        checks,
    })
}

/// Homothety onto the unit sphere: `c = r₂²` and `Ψ*(c·η) = Θ` (or the
/// `SinglePhi` defect).
pub fn build_psi3(problem: &EmbeddingProblem, sol: &EmbeddingSolution, opts: CheckOptions) -> Result<EmbeddingSolution, EmbedError> {
    if sol.stage != Stage::Psi2 {
        return Err(EmbedError::Problem("homothety expects a Ψ₂ solution".into()));
    }
    let r2 = sol.r2;
    let target = sphere_target(sol.n, 1.0, false);
    let maps = sol
        .maps
        .iter()
        .map(|m| {
            let comps = m.components().iter().map(|e| e.scale(1.0 / r2)).collect();
            Ok(SmoothMap::new(m.source(), &target, comps)?)
        })
        .collect::<Result<Vec<_>, EmbedError>>()?;
    let mut out = EmbeddingSolution {
        stage: Stage::Unit,
        target,
        maps,
        radius: 1.0,
        c: r2 * r2,
        checks: vec![],
        ..sol.clone()
    };
    out.checks = certify_unit(problem, &out, opts)?;
    Ok(out)
}

fn certify_unit(problem: &EmbeddingProblem, sol: &EmbeddingSolution, opts: CheckOptions) -> Result<Vec<Check>, EmbedError> {
    let thetas = (0..problem.charts.len()).map(|c| problem.theta(c)).collect::<Result<Vec<_>, _>>()?;
    let (res, at) = pullback_residual(&sol.maps, sol.n, sol.c, &thetas, opts)?;
    let mut checks = vec![Check::residual("unit-sphere", "|Ψ|² = 1", sphere_residual(&sol.maps, 1.0, opts)?, opts.tol)];
    let mut identity = Check::residual("contact-pullback", "Ψ*(c·η_N) = Θ", res, opts.tol)
        .with_detail(format!("N = {}, c = r₂² = {}", sol.n, sol.c));
    if !identity.passed {
        identity = identity.with_detail(format!("N = {}, c = {}, worst point {at}", sol.n, sol.c));
    }
    checks.push(identity);
    if sol.variant == Psi2Variant::SinglePhi {
        let expected = (0..problem.charts.len())
            .map(|c| {
                let half = DifferentialForm::scalar(sol.maps[c].source(), sol.phi[c].clone()).ext_d().scale(0.5);
                Ok(thetas[c].sub(&half)?)
            })
            .collect::<Result<Vec<_>, EmbedError>>()?;
        let (d, _) = pullback_residual(&sol.maps, sol.n, sol.c, &expected, opts)?;
        checks.push(Check::residual("single-phi-defect", "Θ − Ψ*(c·η_N) = ½dφ", d, opts.tol));
    }
    checks.push(immersion_check(&sol.maps, opts)?);
    Ok(checks)
}

/// Appends zero coordinate pairs so the image lies in `S^{2N−1}`.
pub fn pad_to_dimension(problem: &EmbeddingProblem, sol: &EmbeddingSolution, n: usize, opts: CheckOptions) -> Result<EmbeddingSolution, EmbedError> {
    if sol.stage != Stage::Unit {
        return Err(EmbedError::Problem("padding expects a unit-sphere solution".into()));
    }
    if n < sol.n {
        return Err(EmbedError::TooSmall {
            target: 2 * n - 1,
            needed: 2 * sol.n - 1,
        });
    }
    let target = sphere_target(n, 1.0, false);
    let maps = sol
        .maps
        .iter()
        .map(|m| {
            let mut comps = m.components().to_vec();
            comps.resize(2 * n, Expr::zero());
            Ok(SmoothMap::new(m.source(), &target, comps)?)
        })
        .collect::<Result<Vec<_>, EmbedError>>()?;
    let mut out = EmbeddingSolution {
        n,
        target,
        maps,
        checks: vec![],
        ..sol.clone()
    };
    out.checks = certify_unit(problem, &out, opts)?;
    Ok(out)
}

/// Full pipeline end to end, padded to `S^{2N−1}` when
/// `n` is given.
pub fn embed_contact(
    problem: &EmbeddingProblem,
    variant: Psi2Variant,
    n: Option<usize>,
    opts: CheckOptions,
) -> Result<EmbeddingSolution, EmbedError> {
    let s2 = build_psi2(problem, variant, opts)?;
    let s3 = build_psi3(problem, &s2, opts)?;
    match n {
        Some(n) if n != s3.n => pad_to_dimension(problem, &s3, n, opts),
        _ => Ok(s3),
    }
}

/// Jacobian rank equals the chart dimension at every sample.
pub fn immersion_check(maps: &[SmoothMap], opts: CheckOptions) -> Result<Check, EmbedError> {
    let mut dim = 0;
    for (i, m) in maps.iter().enumerate() {
        let tape = m.compile()?;
        let pts = m.source().sample_points(opts.samples.min(200), opts.seed ^ 0x1a ^ i as u64);
        let ranks = crate::exec::try_map(&pts, |p| {
            tape.eval_raw(p)
                .map(|(_, j)| numerical_rank(&j, rank_threshold()))
                .map_err(|source| SymError::Eval {
                    source,
                    point: m.source().format_point(p),
                })
        })?;
        dim = m.source().dim();
        let r = ranks.into_iter().min().unwrap_or(dim);
        if r < dim {
            return Ok(Check::rank("immersion", "rank dΨ = dim M", r, dim).with_detail(format!("chart {}", m.source().name)));
        }
    }
    Ok(Check::rank("immersion", "rank dΨ = dim M", dim, dim))
}

/// Over seeded pairs of sample points of `M` whose ambient images are more
/// than `delta` apart, the smallest distance between their images under
/// the embedding. A positive value is evidence of injectivity, not proof.
pub fn injectivity_check(
    problem: &EmbeddingProblem,
    maps: &[SmoothMap],
    pairs: usize,
    delta: f64,
    opts: CheckOptions,
) -> Result<Check, EmbedError> {
    let per_chart = (2 * pairs / problem.charts.len().max(1)).clamp(2, 2000);
    let mut pts: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for (c, m) in maps.iter().enumerate() {
        let src = problem.charts[c].compile()?;
        let img = m.compile()?;
        for p in problem.chart_samples(c, per_chart, opts.seed ^ 0x17) {
            let err = |source| SymError::Eval {
                source,
                point: m.source().format_point(&p),
            };
            let (x, _) = src.eval(&p).map_err(err)?;
            let (y, _) = img.eval(&p).map_err(err)?;
            pts.push((x, y));
        }
    }
    let target = maps[0].target().clone();
    let dist = |a: &[f64], b: &[f64], angular: &dyn Fn(usize) -> bool| -> f64 {
        a.iter()
            .zip(b)
            .enumerate()
            .map(|(i, (u, v))| {
                let d = if angular(i) {
                    let r = (u - v).rem_euclid(1.0);
                    r.min(1.0 - r)
                } else {
                    u - v
                };
                d * d
            })
            .sum::<f64>()
            .sqrt()
    };
    let src_ang = |_: usize| false;
    let tgt_ang = |i: usize| target.coordinates()[i].is_angular();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x1e);
    let mut min_img = f64::INFINITY;
    let mut used = 0;
    for _ in 0..pairs {
        let (i, j) = (rng.gen_range(0..pts.len()), rng.gen_range(0..pts.len()));
        if dist(&pts[i].0, &pts[j].0, &src_ang) <= delta {
            continue;
        }
        used += 1;
        min_img = min_img.min(dist(&pts[i].1, &pts[j].1, &tgt_ang));
    }
    let mut c = Check::flag(
        "injectivity",
        "x ≠ x′ ⇒ Ψ(x) ≠ Ψ(x′)",
        used > 0 && min_img > 0.0,
        format!("{used} pairs at ambient distance > {delta}; min image distance {min_img:.3e}"),
    );
    c.max_residual = if min_img.is_finite() { min_img } else { 0.0 };
    Ok(c)
}

/// Embedding of an exact l.c.s. manifold with integral Lee class into
/// `S^{2N−1} × S¹`.
#[derive(Debug, Clone)]
pub struct LcsEmbedding {
    pub contact: EmbeddingSolution,
    pub target: Arc<CoordinateDomain>,
    pub maps: Vec<SmoothMap>,
    pub c: f64,
    pub checks: Vec<Check>,
    pub morphism: Vec<MorphismReport>,
}

/// `Ψ = (Ψ₁, τ)`: the contact embedding of `(M, α)` paired with a
/// user-supplied circle map `τ` (one expression per chart) satisfying
/// `dτ = ω`. Certifies `Ψ*(cη_N) = α`, `Ψ*(dθ) = ω`, `Ψ*(cΦ_N) = Φ`, and
/// classifies `Ψ` as a morphism on every chart.
pub fn build_lcs_embedding(
    structure: &LcsStructure,
    problem: &EmbeddingProblem,
    tau: &[Expr],
    n: usize,
    opts: CheckOptions,
) -> Result<LcsEmbedding, EmbedError> {
    if structure.charts.len() != problem.charts.len() || tau.len() != problem.charts.len() {
        return Err(EmbedError::Problem("charts of structure, problem and τ must align".into()));
    }
    let mut checks = Vec::new();
    let mut tau_res = 0.0f64;
    let mut pot_res = 0.0f64;
    let mut theta_res = 0.0f64;
    for (c, ch) in structure.charts.iter().enumerate() {
        crate::forms::same_domain(&ch.domain, problem.charts[c].source())?;
        let alpha = ch
            .alpha
            .as_ref()
            .ok_or_else(|| EmbedError::Problem(format!("{}: structure has no potential", structure.name)))?;
        let dtau = DifferentialForm::scalar(&ch.domain, tau[c].clone()).ext_d();
        tau_res = tau_res.max(dtau.certify_equal(&ch.omega, opts.samples, f64::INFINITY, opts.seed)?.max_residual);
        let pot = d_twisted(&ch.omega, alpha)?;
        pot_res = pot_res.max(pot.certify_equal(&ch.phi, opts.samples, f64::INFINITY, opts.seed)?.max_residual);
        theta_res = theta_res.max(problem.theta(c)?.certify_equal(alpha, opts.samples, f64::INFINITY, opts.seed)?.max_residual);
    }
    if tau_res > opts.tol {
        return Err(EmbedError::Tau(tau_res));
    }
    if pot_res > opts.tol {
        return Err(EmbedError::NotPotential(pot_res));
    }
    if theta_res > opts.tol {
        return Err(EmbedError::Problem(format!("ambient form does not restrict to α (residual {theta_res:e})")));
    }
    checks.push(Check::residual("circle-map", "τ*dθ = ω", tau_res, opts.tol));
    checks.push(Check::residual("potential", "d_ω α = Φ", pot_res, opts.tol));
    let contact = embed_contact(problem, Psi2Variant::DoublePhi, Some(n), opts)?;
    checks.extend(contact.checks.iter().cloned().map(|c| c.prefixed("contact")));
    let target = sphere_target(n, 1.0, true);
    let maps = contact
        .maps
        .iter()
        .zip(tau)
        .map(|(m, t)| {
            let mut comps = m.components().to_vec();
            comps.push(t.clone());
            Ok(SmoothMap::new(m.source(), &target, comps)?)
        })
        .collect::<Result<Vec<_>, EmbedError>>()?;
    let c = contact.c;
    let eta_n = eta(&target, n).scale(c);
    let dtheta = DifferentialForm::dx(&target, CIRCLE)?;
    let phi_n = eta_n.ext_d().sub(&dtheta.wedge(&eta_n)?)?;
    let (mut ra, mut rw, mut rp) = (0.0f64, 0.0f64, 0.0f64);
    let mut morphism = Vec::new();
    for (i, (m, ch)) in maps.iter().zip(&structure.charts).enumerate() {
        let seed = opts.seed ^ i as u64;
        ra = ra.max(m.pullback(&eta_n)?.certify_equal(ch.alpha.as_ref().unwrap(), opts.samples, f64::INFINITY, seed)?.max_residual);
        rw = rw.max(m.pullback(&dtheta)?.certify_equal(&ch.omega, opts.samples, f64::INFINITY, seed)?.max_residual);
        rp = rp.max(m.pullback(&phi_n)?.certify_equal(&ch.phi, opts.samples, f64::INFINITY, seed)?.max_residual);
        let src_loop = circle_loop(&ch.domain, opts.seed ^ i as u64)?;
        let tgt_loop = circle_loop(&target, 0)?;
        morphism.push(classify_morphism(
            m,
            &ch.omega,
            &dtheta,
            &src_loop.into_iter().collect::<Vec<_>>(),
            &tgt_loop.into_iter().collect::<Vec<_>>(),
            opts.with_samples(opts.samples.min(100)),
            RelationSearch::default(),
        )?);
    }
    checks.push(Check::residual("alpha-pullback", "Ψ*(cη_N) = α", ra, opts.tol));
    checks.push(Check::residual("lee-pullback", "Ψ*(dθ) = ω", rw, opts.tol));
    checks.push(Check::residual("phi-pullback", "Ψ*(cΦ_N) = Φ", rp, opts.tol));
    let strict = morphism.iter().all(|m| m.strict);
    let full = morphism.iter().all(|m| m.full);
    checks.push(Check::flag(
        "morphism",
        "Ψ strict and full",
        strict && full,
        format!("strict = {strict}, full = {full} on {} charts", morphism.len()),
    ));
    checks.push(immersion_check(&maps, opts)?);
    Ok(LcsEmbedding {
        contact,
        target,
        maps,
        c,
        checks,
        morphism,
    })
}

/// The loop `t ↦ (p, θ = t)` through a sample point of a domain whose last
/// coordinate is the circle (`None` if there is no circle coordinate).
fn circle_loop(domain: &Arc<CoordinateDomain>, seed: u64) -> Result<Option<SmoothMap>, EmbedError> {
    let Some(k) = domain.index_of(CIRCLE) else { return Ok(None) };
    let base = if domain.ball().is_some() || domain.coordinates().iter().any(|c| !c.is_angular()) {
        domain.sample_points(1, seed)[0].clone()
    } else {
        vec![0.0; domain.dim()]
    };
    let line = Arc::new(CoordinateDomain::new("loop", vec![Coordinate::linear("t", 0.0, 1.0)])?);
    let comps = (0..domain.dim())
        .map(|i| if i == k { Expr::var("t") } else { Expr::constant(base[i]) })
        .collect();
    Ok(Some(SmoothMap::new(&line, domain, comps)?))
}

fn angle_chart(name: &str, vars: &[&str]) -> Arc<CoordinateDomain> {
    Arc::new(CoordinateDomain::new(name, vars.iter().map(|v| Coordinate::angular(v)).collect()).expect("distinct"))
}

fn cos2pi(v: &str) -> Expr {
    Expr::var(v).scale(2.0 * PI).cos()
}

fn sin2pi(v: &str) -> Expr {
    Expr::var(v).scale(2.0 * PI).sin()
}

/// `S¹ ⊂ ℝ²` with `Θ̄ = y dx`.
pub fn problem_circle(rho: f64) -> Result<EmbeddingProblem, EmbedError> {
    let amb = crate::models::sphere::ambient_domain(1, 1.0);
    let chart = angle_chart("S1", &["t"]);
    let param = SmoothMap::new(&chart, &amb, vec![cos2pi("t"), sin2pi("t")])?;
    EmbeddingProblem::new("circle", &amb, vec![param], vec![(0, Expr::var("y1"))], rho)
}

/// The flat torus `T² ⊂ ℝ⁴` with `Θ̄ = y1 dx1 + (x1 y2 + 1/2) dx2`, i.e.
/// `sin(2πθ₁) d cos(2πθ₁) + …` on the torus.
pub fn problem_torus(rho: f64) -> Result<EmbeddingProblem, EmbedError> {
    let amb = crate::models::sphere::ambient_domain(2, 1.0);
    let chart = angle_chart("T2", &["t1", "t2"]);
    let param = SmoothMap::new(&chart, &amb, vec![cos2pi("t1"), sin2pi("t1"), cos2pi("t2"), sin2pi("t2")])?;
    let f2 = Expr::var("x1").mul(&Expr::var("y2")).add(&Expr::constant(0.5));
    EmbeddingProblem::new("torus", &amb, vec![param], vec![(0, Expr::var("y1")), (2, f2)], rho)
}

/// `S³ ⊂ ℝ⁴` on its full atlas with `Θ̄ = η₂`.
pub fn problem_sphere3(rho: f64) -> Result<EmbeddingProblem, EmbedError> {
    let atlas = SphereAtlas::new(2)?;
    let charts = atlas.charts().map(|c| c.param.clone()).collect();
    EmbeddingProblem::new("sphere3", &atlas.ambient, charts, eta_coefficients(&atlas.ambient, 2), rho)
}

fn eta_coefficients(amb: &Arc<CoordinateDomain>, n: usize) -> Vec<(usize, Expr)> {
    eta(amb, n)
        .terms()
        .iter()
        .map(|(idx, e)| (idx[0], e.clone()))
        .collect()
}

/// The three corpus problems.
pub fn corpus(rho: f64) -> Result<Vec<EmbeddingProblem>, EmbedError> {
    Ok(vec![problem_circle(rho)?, problem_torus(rho)?, problem_sphere3(rho)?])
}

/// `S³ × S¹ ⊂ ℝ⁴ × ℝ²` (circle as `(cos 2πθ, sin 2πθ)`) on the charts of
/// `sphere_circle(N=2, q)` with `Θ̄ = q·η₂`, plus `τ = θ` per chart.
pub fn problem_sphere_circle(structure: &LcsStructure, q: f64, rho: f64) -> Result<(EmbeddingProblem, Vec<Expr>), EmbedError> {
    let atlas = SphereAtlas::new(2)?;
    let amb = crate::models::sphere::ambient_domain(3, 1.0);
    if structure.charts.len() != atlas.graph.len() + 1 {
        return Err(EmbedError::Problem("expected the sphere_circle(N=2) atlas".into()));
    }
    let charts = atlas
        .charts()
        .zip(&structure.charts)
        .map(|(sc, ch)| {
            let mut comps: Vec<Expr> = sc.param.components().to_vec();
            comps.push(cos2pi(CIRCLE));
            comps.push(sin2pi(CIRCLE));
            Ok(SmoothMap::new(&ch.domain, &amb, comps)?)
        })
        .collect::<Result<Vec<_>, EmbedError>>()?;
    let coeffs = eta_coefficients(&crate::models::sphere::ambient_domain(2, 1.0), 2)
        .into_iter()
        .map(|(k, e)| (k, e.scale(q)))
        .collect();
    let problem = EmbeddingProblem::new("sphere3xS1", &amb, charts, coeffs, rho)?.with_all_coordinates();
    let tau = vec![Expr::var(CIRCLE); structure.charts.len()];
    Ok((problem, tau))
}
