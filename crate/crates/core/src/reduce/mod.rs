//! Reduction of first-kind structures along strongly reducible
//! submanifolds, and the four-stage chain that presents a first-kind
//! structure as a reduction of a universal jet-space model.
//!
//! A reduction stage is a parametrised submanifold `ι: P → M_up` with a
//! projection `π: P → M_down` and a lift `(z, fiber) ↦ y` with `π(y) = z`.
//! Stages are verified at sampled points; a tower of stages is verified in
//! one shot by solving for the tangent space of the concatenated
//! submanifold.

mod chain;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::check::Check;
use crate::forms::numeric::{rank_threshold, sharp_values};
use crate::forms::{CoordinateDomain, FormError, FormTape, MapTape, SmoothMap, VectorField};
use crate::models::{ChartData, ModelError};
use crate::ode::{Flow, FlowError};
use crate::sampling::CheckOptions;
use crate::symexpr::{EvalError, SymError, Tape};
use crate::twisted::TwistedError;

pub use chain::{
    build_step1, build_step2, build_step3, build_step4, run_reduction_chain, shear_lee, transport_chart,
    ChainReport, LeeDecomposition, Step, StepReport,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReduceError {
    #[error(transparent)]
    Form(#[from] FormError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Twisted(#[from] TwistedError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("evaluation failed at {point}: {source}")]
    Eval { source: EvalError, point: String },
    #[error("kernel rank jumps: {rank_a} at {point_a} but {rank_b} at {point_b}")]
    RankJump {
        rank_a: usize,
        point_a: String,
        rank_b: usize,
        point_b: String,
    },
    #[error("Lee form decomposition ω = ω₀ + Σ μ_j ω_j fails: residual {0:e}")]
    Decomposition(f64),
    #[error("τ_j^* dθ ≠ ω_j: residual {0:e}")]
    Tau(f64),
    #[error("ω₀ is not df₀: residual {0:e}")]
    NotExact(f64),
    #[error("period {period} of ω_{index} is not an integer")]
    NotIntegral { index: usize, period: f64 },
    #[error("reduction input: {0}")]
    Input(String),
}

impl From<SymError> for ReduceError {
    fn from(e: SymError) -> Self {
        ReduceError::Form(FormError::Sym(e))
    }
}

fn eval_err<'a>(domain: &'a CoordinateDomain, p: &'a [f64]) -> impl Fn(EvalError) -> ReduceError + 'a {
    move |source| ReduceError::Eval {
        source,
        point: domain.format_point(p),
    }
}

/// A map evaluated pointwise with its Jacobian.
pub trait PointMap: Send + Sync {
    fn source_dim(&self) -> usize;
    fn target_dim(&self) -> usize;
    fn eval(&self, p: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>), ReduceError>;
}

/// A symbolic map compiled to a tape. Angular values are not reduced.
#[derive(Debug, Clone)]
pub struct TapeMap {
    tape: MapTape,
    source: Arc<CoordinateDomain>,
}

impl TapeMap {
    pub fn new(map: &SmoothMap) -> Result<Self, ReduceError> {
        Ok(TapeMap {
            tape: map.compile()?,
            source: map.source().clone(),
        })
    }
}

impl PointMap for TapeMap {
    fn source_dim(&self) -> usize {
        self.tape.source_dim
    }
    fn target_dim(&self) -> usize {
        self.tape.target_dim
    }
    fn eval(&self, p: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>), ReduceError> {
        self.tape.eval_raw(p).map_err(eval_err(&self.source, p))
    }
}

/// `(s, u, x) ↦ ψ_u(φ_s(x))` where `φ` and `ψ` are the flows of two
/// commuting fields `B` and `E`. The Jacobian comes from the variational
/// equation, so no finite differences are involved.
#[derive(Debug, Clone)]
pub struct FlowProjection {
    b: Flow,
    e: Flow,
    b_tape: Tape,
    e_tape: Tape,
    domain: Arc<CoordinateDomain>,
}

impl FlowProjection {
    pub fn new(b: &VectorField, e: &VectorField, tol: f64) -> Result<Self, ReduceError> {
        crate::forms::same_domain(b.domain(), e.domain())?;
        Ok(FlowProjection {
            b: Flow::new(b, tol)?,
            e: Flow::new(e, tol)?,
            b_tape: b.compile()?,
            e_tape: e.compile()?,
            domain: b.domain().clone(),
        })
    }

    fn inside(&self) -> impl Fn(&[f64]) -> bool + '_ {
        |p| self.domain.contains(p)
    }

    /// `ψ_u(φ_s(x))`.
    pub fn forward(&self, x: &[f64], s: f64, u: f64) -> Result<Vec<f64>, ReduceError> {
        let a = self.b.run(x, s, self.inside())?;
        Ok(self.e.run(&a.point, u, self.inside())?.point)
    }

    /// `φ_{−s}(ψ_{−u}(z))`, the inverse of [`forward`](Self::forward) in `x`.
    pub fn backward(&self, z: &[f64], s: f64, u: f64) -> Result<Vec<f64>, ReduceError> {
        let a = self.e.run(z, -u, self.inside())?;
        Ok(self.b.run(&a.point, -s, self.inside())?.point)
    }

    /// `ψ_u(φ_s(x))` against `φ_s(ψ_u(x))`.
    pub fn commutator_gap(&self, x: &[f64], s: f64, u: f64) -> Result<f64, ReduceError> {
        let one = self.forward(x, s, u)?;
        let a = self.e.run(x, u, self.inside())?;
        let two = self.b.run(&a.point, s, self.inside())?.point;
        Ok(one.iter().zip(&two).fold(0.0f64, |m, (p, q)| m.max((p - q).abs())))
    }
}

impl PointMap for FlowProjection {
    fn source_dim(&self) -> usize {
        self.domain.dim() + 2
    }
    fn target_dim(&self) -> usize {
        self.domain.dim()
    }
    fn eval(&self, p: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>), ReduceError> {
        let n = self.domain.dim();
        let (s, u, x) = (p[0], p[1], &p[2..]);
        let a = self.b.run(x, s, self.inside())?;
        let c = self.e.run(&a.point, u, self.inside())?;
        let bv = DVector::from_vec(self.b_tape.eval(&a.point).map_err(eval_err(&self.domain, &a.point))?);
        let ev = DVector::from_vec(self.e_tape.eval(&c.point).map_err(eval_err(&self.domain, &c.point))?);
        let mut jac = DMatrix::zeros(n, n + 2);
        jac.set_column(0, &(&c.jacobian * bv));
        jac.set_column(1, &ev);
        jac.view_mut((0, 2), (n, n)).copy_from(&(&c.jacobian * &a.jacobian));
        Ok((c.point, jac))
    }
}

/// A stage of reduction: `ι: P → upper`, `π: P → lower` and a lift.
pub struct Stage {
    pub name: String,
    pub param: Arc<CoordinateDomain>,
    /// Fiber parameters consumed by the lift (possibly none).
    pub fiber: Option<Arc<CoordinateDomain>>,
    pub embedding: Box<dyn PointMap>,
    pub projection: Box<dyn PointMap>,
    #[allow(clippy::type_complexity)]
    pub lift: Box<dyn Fn(&[f64], &[f64]) -> Result<Vec<f64>, ReduceError> + Send + Sync>,
    pub upper: ChartData,
    pub lower: ChartData,
}

impl fmt::Debug for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Stage")
            .field("name", &self.name)
            .field("param", &self.param.name)
            .field("upper", &self.upper.domain.name)
            .field("lower", &self.lower.domain.name)
            .finish()
    }
}

impl Stage {
    fn fiber_samples(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        match &self.fiber {
            Some(f) => f.sample_points(count, seed),
            None => vec![vec![]; count],
        }
    }
}

/// Compiled structure data of one chart.
struct Compiled {
    domain: Arc<CoordinateDomain>,
    phi: FormTape,
    omega: FormTape,
    alpha: FormTape,
    dalpha: FormTape,
    b: Option<Tape>,
    e: Option<Tape>,
}

struct Values {
    phi: DMatrix<f64>,
    omega: DVector<f64>,
    alpha: DVector<f64>,
    dalpha: DMatrix<f64>,
    b: Option<DVector<f64>>,
    e: DVector<f64>,
}

impl Compiled {
    fn new(ch: &ChartData) -> Result<Self, ReduceError> {
        let alpha = ch
            .alpha
            .as_ref()
            .ok_or_else(|| ReduceError::Input(format!("chart `{}` has no potential α", ch.domain.name)))?;
        Ok(Compiled {
            domain: ch.domain.clone(),
            phi: ch.phi.compile()?,
            omega: ch.omega.compile()?,
            alpha: alpha.compile()?,
            dalpha: alpha.ext_d().compile()?,
            b: ch.b.as_ref().map(|b| b.compile()).transpose()?,
            e: ch.e.as_ref().map(|e| e.compile()).transpose()?,
        })
    }

    fn at(&self, p: &[f64]) -> Result<Values, ReduceError> {
        let err = eval_err(&self.domain, p);
        let phi = self.phi.eval_skew(p).map_err(&err)?;
        let omega = DVector::from_vec(self.omega.eval_covector(p).map_err(&err)?);
        let b = match &self.b {
            Some(t) => Some(DVector::from_vec(t.eval(p).map_err(&err)?)),
            None => None,
        };
        let e = match &self.e {
            Some(t) => DVector::from_vec(t.eval(p).map_err(&err)?),
            None => {
                let rhs: Vec<f64> = omega.iter().map(|v| -v).collect();
                DVector::from_vec(sharp_values(&phi, &rhs).map_err(|rank| {
                    ReduceError::Form(FormError::Singular {
                        point: self.domain.format_point(p),
                        rank,
                        dim: self.domain.dim(),
                    })
                })?)
            }
        };
        Ok(Values {
            alpha: DVector::from_vec(self.alpha.eval_covector(p).map_err(&err)?),
            dalpha: self.dalpha.eval_skew(p).map_err(&err)?,
            phi,
            omega,
            b,
            e,
        })
    }
}

/// Singular values are treated as zero below `threshold × largest`. Flow
/// Jacobians carry integration error, so the threshold follows the check
/// tolerance.
fn kernel_threshold(tol: f64) -> f64 {
    rank_threshold().max(100.0 * tol)
}

/// Basis of the kernel of `a` (columns) and the rank.
fn null_space(a: &DMatrix<f64>, rel: f64) -> (DMatrix<f64>, usize) {
    let (m, n) = a.shape();
    if n == 0 {
        return (DMatrix::zeros(0, 0), 0);
    }
    let padded = if m < n {
        let mut p = DMatrix::zeros(n, n);
        p.view_mut((0, 0), (m, n)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let top = svd.singular_values.iter().fold(0.0f64, |acc, v| acc.max(*v));
    let cut = if top == 0.0 { f64::INFINITY } else { rel * top };
    let small: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] <= cut)
        .collect();
    let mut basis = DMatrix::zeros(n, small.len());
    for (c, &i) in small.iter().enumerate() {
        basis.set_column(c, &vt.row(i).transpose());
    }
    (basis, n - small.len())
}

fn rank(a: &DMatrix<f64>, rel: f64) -> usize {
    if a.is_empty() {
        return 0;
    }
    let sv = a.clone().svd(false, false).singular_values;
    let top = sv.iter().fold(0.0f64, |acc, v| acc.max(*v));
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&v| v > rel * top).count()
}

/// Least-squares solution of `a x = b` and the largest entry of the
/// residual.
fn lsq(a: &DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, f64) {
    if a.ncols() == 0 {
        return (DVector::zeros(0), b.amax());
    }
    let x = a
        .clone()
        .svd(true, true)
        .solve(b, 1e-13)
        .unwrap_or_else(|_| DVector::zeros(a.ncols()));
    let r = a * &x - b;
    (x, if r.is_empty() { 0.0 } else { r.amax() })
}

fn pinv(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.clone()
        .pseudo_inverse(1e-13)
        .unwrap_or_else(|_| DMatrix::zeros(a.ncols(), a.nrows()))
}

fn amax(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        0.0
    } else {
        m.amax()
    }
}

fn vmax(v: &DVector<f64>) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.amax()
    }
}

/// Difference of two points of `domain`, angular coordinates compared mod 1.
fn point_gap(domain: &CoordinateDomain, a: &[f64], b: &[f64]) -> f64 {
    domain
        .coordinates()
        .iter()
        .zip(a.iter().zip(b))
        .map(|(c, (x, y))| {
            let d = x - y;
            if c.is_angular() {
                let r = d.rem_euclid(1.0);
                r.min(1.0 - r)
            } else {
                d.abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Outcome of verifying one stage.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ReductionReport {
    pub stage: String,
    pub checks: Vec<Check>,
    /// Dimension of `ker(ω, α, dα)|_C`.
    pub kernel_rank: usize,
    /// Dimensions of `ker Φ|_C` seen over the samples.
    pub ker_phi_ranks: Vec<usize>,
    /// Whether `ker Φ|_C` had the dimension of `ker(ω, α, dα)|_C` at every
    /// sample. Reported only; not asserted.
    pub ker_phi_agrees: bool,
}

impl ReductionReport {
    pub fn passed(&self) -> bool {
        crate::check::all_passed(&self.checks)
    }
}

struct StageSample {
    kernel: usize,
    ker_phi: usize,
    tangent_b: f64,
    tangent_e: f64,
    quotient: f64,
    proj_rank: usize,
    alpha: f64,
    omega: f64,
    phi: f64,
    b_proj: f64,
    e_proj: f64,
}

/// Verifies at sampled parameter points that `ι(P)` is strongly reducible
/// and that `π` carries its reduced structure onto `lower`:
/// `B, E` tangent to `C`; `ker(ω, α, dα)|_C` of constant rank and equal to
/// `ker dπ`; `ι*α = π*α₀`, `ι*ω = π*ω₀`, `ι*Φ = π*Φ₀`; and `π_*B = B₀`,
/// `π_*E = E₀`. A rank jump is an error carrying two witness points.
pub fn verify_strong_reducibility(stage: &Stage, opts: CheckOptions) -> Result<ReductionReport, ReduceError> {
    let up = Compiled::new(&stage.upper)?;
    let down = Compiled::new(&stage.lower)?;
    let dp = stage.param.dim();
    let expected_kernel = dp.checked_sub(stage.lower.domain.dim()).ok_or_else(|| {
        ReduceError::Input(format!("{}: parameter space is smaller than the quotient", stage.name))
    })?;
    let rel = kernel_threshold(opts.tol);
    let points = stage.param.sample_points(opts.samples, opts.seed);
    let samples = crate::exec::try_map(&points, |y| -> Result<StageSample, ReduceError> {
        let (x, jc) = stage.embedding.eval(y)?;
        let (z, jp) = stage.projection.eval(y)?;
        let u = up.at(&x)?;
        let d = down.at(&z)?;
        let tangent_b = match &u.b {
            Some(b) => lsq(&jc, b),
            None => (DVector::zeros(dp), 0.0),
        };
        let tangent_e = lsq(&jc, &u.e);
        let a = jc.transpose() * &u.alpha;
        let w = jc.transpose() * &u.omega;
        let da = jc.transpose() * &u.dalpha * &jc;
        let ph = jc.transpose() * &u.phi * &jc;
        let mut stack = DMatrix::zeros(dp + 2, dp);
        stack.set_row(0, &a.transpose());
        stack.set_row(1, &w.transpose());
        stack.view_mut((2, 0), (dp, dp)).copy_from(&da);
        let (kernel_basis, r) = null_space(&stack, rel);
        let b_proj = match (&u.b, &d.b) {
            (Some(_), Some(b0)) => vmax(&(&jp * &tangent_b.0 - b0)),
            _ => 0.0,
        };
        Ok(StageSample {
            kernel: dp - r,
            ker_phi: dp - rank(&ph, rel),
            tangent_b: tangent_b.1,
            tangent_e: tangent_e.1,
            quotient: amax(&(&jp * &kernel_basis)),
            proj_rank: rank(&jp, rel),
            alpha: vmax(&(a - jp.transpose() * &d.alpha)),
            omega: vmax(&(w - jp.transpose() * &d.omega)),
            phi: amax(&(ph - jp.transpose() * &d.phi * &jp)),
            b_proj,
            e_proj: vmax(&(&jp * &tangent_e.0 - &d.e)),
        })
    })?;
    let first = samples.first().ok_or_else(|| ReduceError::Input("no samples".into()))?;
    if let Some(i) = samples.iter().position(|s| s.kernel != first.kernel) {
        return Err(ReduceError::RankJump {
            rank_a: first.kernel,
            point_a: stage.param.format_point(&points[0]),
            rank_b: samples[i].kernel,
            point_b: stage.param.format_point(&points[i]),
        });
    }
    let kernel = first.kernel;
    let worst = |f: fn(&StageSample) -> f64| samples.iter().map(f).fold(0.0, f64::max);
    let mut ker_phi_ranks: Vec<usize> = samples.iter().map(|s| s.ker_phi).collect();
    ker_phi_ranks.sort_unstable();
    ker_phi_ranks.dedup();
    let ker_phi_agrees = ker_phi_ranks == [kernel];
    let tol = opts.tol;
    let mut checks = vec![];
    if stage.upper.b.is_some() {
        checks.push(Check::residual("b-tangent", "B ∈ TC", worst(|s| s.tangent_b), tol));
    }
    checks.push(Check::residual("e-tangent", "E ∈ TC", worst(|s| s.tangent_e), tol));
    checks.push(
        Check::rank("kernel-rank", "dim ker(ω, α, dα)|C = dim C − dim M₀", kernel, expected_kernel).with_detail(
            format!("ker Φ|C dimensions {ker_phi_ranks:?}; agrees with ker(ω, α, dα)|C: {ker_phi_agrees}"),
        ),
    );
    let mut q = Check::residual("quotient-kernel", "ker dπ = ker(ω, α, dα)|C", worst(|s| s.quotient), tol);
    let bad_rank = samples.iter().filter(|s| s.proj_rank != dp - kernel).count();
    if bad_rank > 0 {
        q.passed = false;
        q.detail = Some(format!("rank dπ ≠ dim C − dim D at {bad_rank} samples"));
    }
    checks.push(q);
    checks.push(Check::residual("alpha-descends", "ι*α = π*α₀", worst(|s| s.alpha), tol));
    checks.push(Check::residual("omega-descends", "ι*ω = π*ω₀", worst(|s| s.omega), tol));
    checks.push(Check::residual("phi-descends", "ι*Φ = π*Φ₀", worst(|s| s.phi), tol));
    if stage.upper.b.is_some() && stage.lower.b.is_some() {
        checks.push(Check::residual("b-projects", "π_*B = B₀", worst(|s| s.b_proj), tol));
    }
    checks.push(Check::residual("e-projects", "π_*E = E₀", worst(|s| s.e_proj), tol));
    Ok(ReductionReport {
        stage: stage.name.clone(),
        checks: checks.into_iter().map(|c| c.prefixed(&stage.name)).collect(),
        kernel_rank: kernel,
        ker_phi_ranks,
        ker_phi_agrees,
    })
}

/// One point of a tower of stages (bottom first), lifted from a base point.
struct TowerPoint {
    /// Parameter points `y_i` and their images `z_i = ι_i(y_i)`.
    ys: Vec<Vec<f64>>,
    zs: Vec<Vec<f64>>,
    embed_jac: Vec<DMatrix<f64>>,
    proj_jac: Vec<DMatrix<f64>>,
    /// Tangent vectors of the concatenated submanifold, pushed to the top
    /// (`up`) and down to the base (`down`).
    up: DMatrix<f64>,
    down: DMatrix<f64>,
    lift_gap: f64,
}

fn tower_point(stages: &[&Stage], x: &[f64], fibers: &[&[f64]], rel: f64) -> Result<TowerPoint, ReduceError> {
    let mut z = x.to_vec();
    let mut tp = TowerPoint {
        ys: vec![],
        zs: vec![],
        embed_jac: vec![],
        proj_jac: vec![],
        up: DMatrix::zeros(0, 0),
        down: DMatrix::zeros(0, 0),
        lift_gap: 0.0,
    };
    for (st, fib) in stages.iter().zip(fibers) {
        let y = (st.lift)(&z, fib)?;
        let (pz, jp) = st.projection.eval(&y)?;
        tp.lift_gap = tp.lift_gap.max(point_gap(&st.lower.domain, &pz, &z));
        let (up, ji) = st.embedding.eval(&y)?;
        tp.ys.push(y);
        tp.zs.push(up.clone());
        tp.embed_jac.push(ji);
        tp.proj_jac.push(jp);
        z = up;
    }
    // Unknowns v_i ∈ T P_i with dπ_{i+1} v_{i+1} = dι_i v_i.
    let dims: Vec<usize> = stages.iter().map(|s| s.param.dim()).collect();
    let offsets: Vec<usize> = dims
        .iter()
        .scan(0, |acc, d| {
            let o = *acc;
            *acc += d;
            Some(o)
        })
        .collect();
    let total: usize = dims.iter().sum();
    let rows: usize = tp.embed_jac[..stages.len() - 1].iter().map(|j| j.nrows()).sum();
    let mut sys = DMatrix::zeros(rows, total);
    let mut r0 = 0;
    for i in 0..stages.len() - 1 {
        let ji = &tp.embed_jac[i];
        let jp = &tp.proj_jac[i + 1];
        let h = ji.nrows();
        sys.view_mut((r0, offsets[i]), (h, dims[i])).copy_from(&(-ji));
        sys.view_mut((r0, offsets[i + 1]), (h, dims[i + 1])).copy_from(jp);
        r0 += h;
    }
    let (basis, _) = null_space(&sys, rel);
    let last = stages.len() - 1;
    tp.up = &tp.embed_jac[last] * basis.rows(offsets[last], dims[last]);
    tp.down = &tp.proj_jac[0] * basis.rows(0, dims[0]);
    Ok(tp)
}

/// Reduced covector, 1-form and 2-form on the base read off from tangent
/// vectors `up`/`down`: solves `downᵀ a₀ = upᵀ a` and
/// `Φ₀ = (down⁺)ᵀ (upᵀ Φ up) down⁺`.
fn reduced_values(up: &DMatrix<f64>, down: &DMatrix<f64>, v: &Values) -> (DVector<f64>, DVector<f64>, DMatrix<f64>) {
    let dt = down.transpose();
    let a0 = lsq(&dt, &(up.transpose() * &v.alpha)).0;
    let w0 = lsq(&dt, &(up.transpose() * &v.omega)).0;
    let dp = pinv(down);
    let phi0 = dp.transpose() * (up.transpose() * &v.phi * up) * &dp;
    (a0, w0, phi0)
}

/// Verification of a tower of stages as one reduction of the top structure
/// onto the base.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TowerReport {
    pub checks: Vec<Check>,
    /// Dimension of the concatenated submanifold.
    pub dimension: usize,
    pub kernel_rank: usize,
}

/// Concatenates `stages` (bottom first, each stage's upper being the next
/// stage's lower) into one submanifold of the top structure and checks that
/// it reduces onto `base`: constant kernel rank equal to the fiber
/// dimension, `ker dπ` equal to the kernel, tangency of `B`, `E`, and the
/// three pullback identities.
pub fn verify_tower(stages: &[&Stage], base: &ChartData, opts: CheckOptions) -> Result<TowerReport, ReduceError> {
    if stages.is_empty() {
        return Err(ReduceError::Input("empty tower".into()));
    }
    let top = Compiled::new(&stages[stages.len() - 1].upper)?;
    let bottom = Compiled::new(base)?;
    let rel = kernel_threshold(opts.tol);
    let xs = base.domain.sample_points(opts.samples, opts.seed);
    let fibers: Vec<Vec<Vec<f64>>> = stages
        .iter()
        .enumerate()
        .map(|(i, s)| s.fiber_samples(opts.samples, opts.seed.wrapping_add(1 + i as u64)))
        .collect();
    let idx: Vec<usize> = (0..xs.len()).collect();
    let per = crate::exec::try_map(&idx, |&n| -> Result<[f64; 9], ReduceError> {
        let fib: Vec<&[f64]> = fibers.iter().map(|f| f[n].as_slice()).collect();
        let tp = tower_point(stages, &xs[n], &fib, rel)?;
        let t = top.at(tp.zs.last().expect("non-empty tower"))?;
        let b = bottom.at(&xs[n])?;
        let (up, down) = (&tp.up, &tp.down);
        let dim = up.ncols();
        let a = up.transpose() * &t.alpha;
        let w = up.transpose() * &t.omega;
        let mut stack = DMatrix::zeros(dim + 2, dim);
        stack.set_row(0, &a.transpose());
        stack.set_row(1, &w.transpose());
        stack.view_mut((2, 0), (dim, dim)).copy_from(&(up.transpose() * &t.dalpha * up));
        let (k, r) = null_space(&stack, rel);
        let tb = match &t.b {
            Some(bv) => lsq(up, bv).1,
            None => 0.0,
        };
        Ok([
            dim as f64,
            (dim - r) as f64,
            tp.lift_gap,
            amax(&(down * &k)),
            if rank(down, rel) == r { 0.0 } else { 1.0 },
            vmax(&(a - down.transpose() * &b.alpha)),
            vmax(&(w - down.transpose() * &b.omega)),
            amax(&(up.transpose() * &t.phi * up - down.transpose() * &b.phi * down)),
            tb.max(lsq(up, &t.e).1),
        ])
    })?;
    let dim = per[0][0] as usize;
    let kernel = per[0][1] as usize;
    if let Some(i) = per.iter().position(|p| p[1] as usize != kernel || p[0] as usize != dim) {
        return Err(ReduceError::RankJump {
            rank_a: kernel,
            point_a: base.domain.format_point(&xs[0]),
            rank_b: per[i][1] as usize,
            point_b: base.domain.format_point(&xs[i]),
        });
    }
    let worst = |j: usize| per.iter().map(|p| p[j]).fold(0.0, f64::max);
    let tol = opts.tol;
    let mut quotient = Check::residual("quotient-kernel", "ker dπ = ker(ω, α, dα)|C", worst(3), tol);
    if worst(4) > 0.0 {
        quotient.passed = false;
        quotient.detail = Some("rank dπ differs from dim C − dim D".into());
    }
    let checks = vec![
        Check::residual("lift", "π(lift(z)) = z", worst(2), tol),
        Check::rank(
            "kernel-rank",
            "dim ker(ω, α, dα)|C = dim C − dim M",
            kernel,
            dim.saturating_sub(base.domain.dim()),
        ),
        quotient,
        Check::residual("tangent", "B, E ∈ TC", worst(8), tol),
        Check::residual("alpha-descends", "ι*α = π*α₀", worst(5), tol),
        Check::residual("omega-descends", "ι*ω = π*ω₀", worst(6), tol),
        Check::residual("phi-descends", "ι*Φ = π*Φ₀", worst(7), tol),
    ];
    Ok(TowerReport {
        checks: checks.into_iter().map(|c| c.prefixed("tower")).collect(),
        dimension: dim,
        kernel_rank: kernel,
    })
}

/// Reduces the top structure onto the base in one stage (the whole tower)
/// and in two (the stages above `split` first, then the rest using the
/// numerically reduced forms), and reports the largest disagreement of the
/// reduced `α₀, ω₀, Φ₀`.
pub fn one_vs_two_stage(stages: &[&Stage], split: usize, opts: CheckOptions) -> Result<Check, ReduceError> {
    if split == 0 || split >= stages.len() {
        return Err(ReduceError::Input(format!("split {split} must lie strictly inside the tower")));
    }
    let top = Compiled::new(&stages[stages.len() - 1].upper)?;
    let base = &stages[0].lower;
    let rel = kernel_threshold(opts.tol);
    let xs = base.domain.sample_points(opts.samples, opts.seed);
    let fibers: Vec<Vec<Vec<f64>>> = stages
        .iter()
        .enumerate()
        .map(|(i, s)| s.fiber_samples(opts.samples, opts.seed.wrapping_add(1 + i as u64)))
        .collect();
    let idx: Vec<usize> = (0..xs.len()).collect();
    let gaps = crate::exec::try_map(&idx, |&n| -> Result<f64, ReduceError> {
        let fib: Vec<&[f64]> = fibers.iter().map(|f| f[n].as_slice()).collect();
        let whole = tower_point(stages, &xs[n], &fib, rel)?;
        let t = top.at(whole.zs.last().expect("non-empty tower"))?;
        let one = reduced_values(&whole.up, &whole.down, &t);

        // Upper part reduced onto the middle manifold at z_{split−1}.
        let mid = &whole.zs[split - 1];
        let upper = tower_point(&stages[split..], mid, &fib[split..], rel)?;
        let t_up = top.at(upper.zs.last().expect("non-empty tower"))?;
        let (am, wm, pm) = reduced_values(&upper.up, &upper.down, &t_up);
        // Then the lower part with the numerically reduced middle forms.
        let lower = tower_point(&stages[..split], &xs[n], &fib[..split], rel)?;
        let mid_vals = Values {
            phi: pm,
            omega: wm,
            alpha: am,
            dalpha: DMatrix::zeros(0, 0),
            b: None,
            e: DVector::zeros(0),
        };
        let two = reduced_values(&lower.up, &lower.down, &mid_vals);
        Ok(vmax(&(&one.0 - &two.0))
            .max(vmax(&(&one.1 - &two.1)))
            .max(amax(&(&one.2 - &two.2))))
    })?;
    let worst = gaps.iter().copied().fold(0.0, f64::max);
    Ok(Check::residual(
        "one-vs-two-stage",
        "(M /C₂)/C₁ = M /π₂⁻¹(C₁)",
        worst,
        opts.tol,
    ))
}
