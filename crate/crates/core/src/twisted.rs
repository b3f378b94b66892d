//! Twisted de Rham calculus: `d_ω`, the conformal action of functions, Lee
//! form extraction, period lattices and morphisms between pairs `(M, ω)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::forms::numeric::{multi_indices, rank_threshold};
use crate::forms::{CoordinateDomain, DifferentialForm, FormError, FormTape, SmoothMap};
use crate::lattice::{GeneratedGroup, RelationSearch};
use crate::quadrature::{integrate, QuadError};
use crate::sampling::CheckOptions;
use crate::symexpr::{EvalError, Expr, SymError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TwistedError {
    #[error(transparent)]
    Form(#[from] FormError),
    #[error("not locally conformally symplectic: residual {residual:e} at {point}")]
    NotLcs { residual: f64, point: String },
    #[error("ν ↦ ν∧Φ has rank {rank} < {dim} at {point}; the Lee form is not determined")]
    Underdetermined { rank: usize, dim: usize, point: String },
    #[error("Lee form is not closed: residual {0:e}")]
    NotClosed(f64),
    #[error("curve is not closed: endpoint gap {0:e}")]
    OpenCurve(f64),
    #[error("loop must be a map from a one-dimensional domain")]
    NotALoop,
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error("scaling function mismatch: residual {0:e}")]
    ScalingMismatch(f64),
    #[error("evaluation failed at {point}: {source}")]
    Eval { source: EvalError, point: String },
}

impl From<SymError> for TwistedError {
    fn from(e: SymError) -> Self {
        TwistedError::Form(FormError::Sym(e))
    }
}

fn eval_err<'a>(domain: &'a CoordinateDomain, point: &'a [f64]) -> impl Fn(EvalError) -> TwistedError + 'a {
    move |source| TwistedError::Eval {
        source,
        point: domain.format_point(point),
    }
}

/// `d_ω a = da − ω∧a`.
pub fn d_twisted(omega: &DifferentialForm, a: &DifferentialForm) -> Result<DifferentialForm, FormError> {
    if omega.degree() != 1 {
        return Err(FormError::DegreeMismatch(omega.degree(), 1));
    }
    a.ext_d().sub(&omega.wedge(a)?)
}

/// The action of `f` on twisted complexes: `(a, ω) ↦ (e^f a, ω + df)`.
pub fn conformal_rescale(
    f: &Expr,
    a: &DifferentialForm,
    omega: &DifferentialForm,
) -> Result<(DifferentialForm, DifferentialForm), FormError> {
    let df = DifferentialForm::scalar(omega.domain(), f.clone()).ext_d();
    Ok((a.scale_by(&f.exp()), omega.add(&df)?))
}

/// Lee form data: the form itself (when fitted), its closedness, and the
/// period lattice (when loops were supplied).
#[derive(Debug, Clone)]
pub struct LeeData {
    pub omega: Option<DifferentialForm>,
    /// Fitted coefficients on the ansatz basis.
    pub coefficients: Vec<f64>,
    /// Pointwise least-squares solutions `(point, ν)` when no ansatz is given.
    pub pointwise: Vec<(Vec<f64>, Vec<f64>)>,
    /// Largest `|dΦ − ν∧Φ|` over samples.
    pub equation_residual: f64,
    pub closedness_residual: f64,
    pub periods: Vec<f64>,
    pub lattice: Option<GeneratedGroup>,
}

impl LeeData {
    pub fn rank(&self) -> usize {
        self.lattice.as_ref().map_or(0, |l| l.rank)
    }

    pub fn is_integral(&self, tol: f64) -> bool {
        self.lattice.as_ref().is_some_and(|l| l.is_integral(tol))
    }
}

/// Matrix of the linear map `ν ↦ ν∧Φ` into 3-form coefficients (rows
/// indexed by `triples`).
fn wedge_matrix(phi: &DMatrix<f64>, triples: &[Vec<usize>]) -> DMatrix<f64> {
    let n = phi.nrows();
    let mut a = DMatrix::zeros(triples.len(), n);
    for (r, t) in triples.iter().enumerate() {
        let (i, j, k) = (t[0], t[1], t[2]);
        a[(r, i)] += phi[(j, k)];
        a[(r, j)] -= phi[(i, k)];
        a[(r, k)] += phi[(i, j)];
    }
    a
}

fn three_form_values(tape: &FormTape, triples: &[Vec<usize>], point: &[f64]) -> Result<DVector<f64>, EvalError> {
    let terms = tape.eval_terms(point)?;
    let mut v = DVector::zeros(triples.len());
    for (idx, val) in terms {
        if let Ok(r) = triples.binary_search(&idx) {
            v[r] = val;
        }
    }
    Ok(v)
}

/// Recovers the Lee form of `Φ` from `dΦ = ω∧Φ`.
///
/// Without an ansatz the pointwise least-squares solutions are returned.
/// With an ansatz basis `β_l`, constant coefficients `c_l` are fitted over
/// all samples so that `ω = Σ c_l β_l`, and the resulting equation and
/// closedness are certified symbolically.
pub fn extract_lee(
    phi: &DifferentialForm,
    ansatz: Option<&[DifferentialForm]>,
    opts: CheckOptions,
) -> Result<LeeData, TwistedError> {
    if phi.degree() != 2 {
        return Err(FormError::DegreeMismatch(phi.degree(), 2).into());
    }
    let domain = phi.domain().clone();
    let n = domain.dim();
    if n < 4 {
        return Err(TwistedError::Underdetermined {
            rank: 0,
            dim: n,
            point: "(dimension below 4)".into(),
        });
    }
    let triples = multi_indices(n, 3);
    let phi_tape = phi.compile()?;
    let dphi_tape = phi.ext_d().compile()?;
    let points = domain.sample_points(opts.samples, opts.seed);
    let systems = crate::exec::try_map(&points, |p| -> Result<(DMatrix<f64>, DVector<f64>), TwistedError> {
        let m = phi_tape.eval_skew(p).map_err(eval_err(&domain, p))?;
        let b = three_form_values(&dphi_tape, &triples, p).map_err(eval_err(&domain, p))?;
        Ok((wedge_matrix(&m, &triples), b))
    })?;
    for ((a, _), p) in systems.iter().zip(&points) {
        let rank = crate::forms::numeric::numerical_rank(a, rank_threshold());
        if rank < n {
            return Err(TwistedError::Underdetermined {
                rank,
                dim: n,
                point: domain.format_point(p),
            });
        }
    }
    match ansatz {
        None => {
            let mut worst = (0.0f64, 0usize);
            let pointwise = systems
                .iter()
                .enumerate()
                .map(|(s, (a, b))| {
                    let nu = a.clone().svd(true, true).solve(b, 1e-14).expect("svd solve");
                    let r = (a * &nu - b).amax();
                    if r > worst.0 {
                        worst = (r, s);
                    }
                    (points[s].clone(), nu.iter().copied().collect::<Vec<_>>())
                })
                .collect();
            if worst.0 > opts.tol {
                return Err(TwistedError::NotLcs {
                    residual: worst.0,
                    point: domain.format_point(&points[worst.1]),
                });
            }
            Ok(LeeData {
                omega: None,
                coefficients: vec![],
                pointwise,
                equation_residual: worst.0,
                closedness_residual: f64::NAN,
                periods: vec![],
                lattice: None,
            })
        }
        Some(basis) => {
            let m = basis.len();
            let tapes = basis.iter().map(|b| b.compile()).collect::<Result<Vec<_>, _>>()?;
            let rows_per = triples.len();
            let mut big_a = DMatrix::zeros(rows_per * points.len(), m);
            let mut big_b = DVector::zeros(rows_per * points.len());
            for (s, ((a, b), p)) in systems.iter().zip(&points).enumerate() {
                let mut bmat = DMatrix::zeros(n, m);
                for (l, t) in tapes.iter().enumerate() {
                    let v = t.eval_covector(p).map_err(eval_err(&domain, p))?;
                    for i in 0..n {
                        bmat[(i, l)] = v[i];
                    }
                }
                big_a.view_mut((s * rows_per, 0), (rows_per, m)).copy_from(&(a * bmat));
                big_b.rows_mut(s * rows_per, rows_per).copy_from(b);
            }
            let c = big_a.svd(true, true).solve(&big_b, 1e-14).expect("svd solve");
            let coefficients: Vec<f64> = c.iter().copied().collect();
            let mut omega = DifferentialForm::zero(&domain, 1);
            for (b, &cl) in basis.iter().zip(&coefficients) {
                if cl != 0.0 {
                    omega = omega.add(&b.scale(cl))?;
                }
            }
            let residual_form = phi.ext_d().sub(&omega.wedge(phi)?)?;
            let cert = residual_form.certify_zero(opts.samples, f64::INFINITY, opts.seed ^ 0x5a5a)?;
            if cert.max_residual > opts.tol {
                return Err(TwistedError::NotLcs {
                    residual: cert.max_residual,
                    point: domain.format_point(&cert.worst_point),
                });
            }
            let closed = omega.ext_d().certify_zero(opts.samples, f64::INFINITY, opts.seed ^ 0xa5a5)?;
            Ok(LeeData {
                omega: Some(omega),
                coefficients,
                pointwise: vec![],
                equation_residual: cert.max_residual,
                closedness_residual: closed.max_residual,
                periods: vec![],
                lattice: None,
            })
        }
    }
}

/// Integral of a 1-form along a curve `[0, 1] → domain`.
pub fn line_integral(omega: &DifferentialForm, curve: &SmoothMap, tol: f64) -> Result<f64, TwistedError> {
    if curve.source().dim() != 1 {
        return Err(TwistedError::NotALoop);
    }
    let pulled = curve.pullback(omega)?;
    let tape = pulled.compile()?;
    let src = curve.source().clone();
    let v = integrate(
        |t| {
            tape.eval_covector(&[t])
                .map(|c| c[0])
                .map_err(|e| format!("{e} at {}", src.format_point(&[t])))
        },
        0.0,
        1.0,
        tol,
    )?;
    Ok(v)
}

fn endpoint_gap(curve: &SmoothMap) -> Result<f64, TwistedError> {
    let tape = curve.compile()?;
    let src = curve.source();
    let (a, _) = tape.eval_raw(&[0.0]).map_err(eval_err(src, &[0.0]))?;
    let (b, _) = tape.eval_raw(&[1.0]).map_err(eval_err(src, &[1.0]))?;
    let mut gap = 0.0f64;
    for ((x, y), c) in a.iter().zip(&b).zip(curve.target().coordinates()) {
        let d = if c.is_angular() {
            let r = (y - x).rem_euclid(1.0);
            r.min(1.0 - r)
        } else {
            (y - x).abs()
        };
        gap = gap.max(d);
    }
    Ok(gap)
}

/// Periods of a closed 1-form over user-declared loops and the subgroup of ℝ
/// they generate.
pub fn period_lattice(
    omega: &DifferentialForm,
    loops: &[SmoothMap],
    opts: CheckOptions,
    search: RelationSearch,
) -> Result<LeeData, TwistedError> {
    let closed = omega.ext_d().certify_zero(opts.samples, f64::INFINITY, opts.seed)?;
    if closed.max_residual > opts.tol {
        return Err(TwistedError::NotClosed(closed.max_residual));
    }
    let mut periods = Vec::with_capacity(loops.len());
    for l in loops {
        let gap = endpoint_gap(l)?;
        if gap > opts.tol {
            return Err(TwistedError::OpenCurve(gap));
        }
        periods.push(line_integral(omega, l, (opts.tol * 1e-2).max(1e-14))?);
    }
    let lattice = GeneratedGroup::new(&periods, search);
    Ok(LeeData {
        omega: Some(omega.clone()),
        coefficients: vec![],
        pointwise: vec![],
        equation_residual: 0.0,
        closedness_residual: closed.max_residual,
        periods,
        lattice: Some(lattice),
    })
}

/// Scaling function `f` with `df = δ`, reconstructed by line integration
/// from a basepoint (so `f(basepoint) = 0`).
#[derive(Debug, Clone)]
pub struct ScalingFunction {
    delta: FormTape,
    domain: Arc<CoordinateDomain>,
    pub basepoint: Vec<f64>,
    tol: f64,
}

impl ScalingFunction {
    pub fn new(delta: &DifferentialForm, basepoint: Vec<f64>, tol: f64) -> Result<Self, TwistedError> {
        Ok(ScalingFunction {
            delta: delta.compile()?,
            domain: delta.domain().clone(),
            basepoint,
            tol,
        })
    }

    fn segment(&self, a: &[f64], b: &[f64]) -> Result<f64, TwistedError> {
        let dir: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
        if dir.iter().all(|&d| d == 0.0) {
            return Ok(0.0);
        }
        let v = integrate(
            |t| {
                let p: Vec<f64> = a.iter().zip(&dir).map(|(x, d)| x + t * d).collect();
                let c = self
                    .delta
                    .eval_covector(&p)
                    .map_err(|e| format!("{e} at {}", self.domain.format_point(&p)))?;
                Ok(c.iter().zip(&dir).map(|(ci, di)| ci * di).sum())
            },
            0.0,
            1.0,
            self.tol,
        )?;
        Ok(v)
    }

    /// `f(x)` along the straight segment from the basepoint.
    pub fn eval(&self, x: &[f64]) -> Result<f64, TwistedError> {
        self.segment(&self.basepoint, x)
    }

    /// `f(x)` along the staircase path that moves one coordinate at a time.
    pub fn eval_axis_path(&self, x: &[f64]) -> Result<f64, TwistedError> {
        let mut cur = self.basepoint.clone();
        let mut total = 0.0;
        for i in 0..x.len() {
            let mut next = cur.clone();
            next[i] = x[i];
            total += self.segment(&cur, &next)?;
            cur = next;
        }
        Ok(total)
    }

    /// Largest disagreement between the two path choices over samples; zero
    /// up to quadrature error exactly when `δ` is exact on the chart.
    pub fn path_residual(&self, opts: CheckOptions) -> Result<f64, TwistedError> {
        let points = self.domain.sample_points(opts.samples, opts.seed);
        let diffs = crate::exec::try_map(&points, |p| Ok::<_, TwistedError>((self.eval(p)? - self.eval_axis_path(p)?).abs()))?;
        Ok(diffs.into_iter().fold(0.0, f64::max))
    }
}

#[derive(Debug, Clone)]
pub struct MorphismReport {
    pub strict: bool,
    pub strict_residual: f64,
    pub conformal: bool,
    /// Largest `|∮ (F*ω′ − ω)|` over the source loops.
    pub period_residual: f64,
    /// Path-independence residual of the reconstructed scaling function.
    pub scaling_residual: f64,
    pub full: bool,
    pub source_lattice: GeneratedGroup,
    pub target_lattice: GeneratedGroup,
    /// `Λ ⊂ Λ′` as computed.
    pub inclusion: bool,
    /// `rank Λ′ − rank Λ`.
    pub rank_decrease: i64,
}

/// Classifies `F: (M, ω) → (M′, ω′)`. Source loops span `H_1(M)` and target
/// loops span `H_1(M′)` (as far as the caller knows).
pub fn classify_morphism(
    f: &SmoothMap,
    omega: &DifferentialForm,
    omega_target: &DifferentialForm,
    source_loops: &[SmoothMap],
    target_loops: &[SmoothMap],
    opts: CheckOptions,
    search: RelationSearch,
) -> Result<MorphismReport, TwistedError> {
    let delta = f.pullback(omega_target)?.sub(omega)?;
    let strict_cert = delta.certify_zero(opts.samples, f64::INFINITY, opts.seed)?;
    let strict = strict_cert.max_residual < opts.tol;
    let mut period_residual = 0.0f64;
    for l in source_loops {
        period_residual = period_residual.max(line_integral(&delta, l, (opts.tol * 1e-2).max(1e-14))?.abs());
    }
    let conformal = strict || period_residual < opts.tol;
    let scaling_residual = if strict {
        0.0
    } else if conformal {
        let domain = omega.domain();
        let base = domain.sample_points(1, opts.seed ^ 0x77)[0].clone();
        let sf = ScalingFunction::new(&delta, base, (opts.tol * 1e-2).max(1e-14))?;
        sf.path_residual(opts.with_samples(opts.samples.min(50)))?
    } else {
        f64::INFINITY
    };
    let source = period_lattice(omega, source_loops, opts, search)?.lattice.unwrap();
    let target = period_lattice(omega_target, target_loops, opts, search)?.lattice.unwrap();
    let inclusion = source.basis.iter().all(|&b| target.contains(b, search));
    let full = conformal && source.same_as(&target, search);
    Ok(MorphismReport {
        strict,
        strict_residual: strict_cert.max_residual,
        conformal,
        period_residual,
        scaling_residual,
        full,
        rank_decrease: target.rank as i64 - source.rank as i64,
        source_lattice: source,
        target_lattice: target,
        inclusion,
    })
}

/// `β ↦ e^{−f} F*β`, after certifying `F*ω′ = ω + df`.
pub fn twisted_pullback(
    f_map: &SmoothMap,
    scaling: &Expr,
    beta: &DifferentialForm,
    omega: &DifferentialForm,
    omega_target: &DifferentialForm,
    opts: CheckOptions,
) -> Result<DifferentialForm, TwistedError> {
    let df = DifferentialForm::scalar(omega.domain(), scaling.clone()).ext_d();
    let mismatch = f_map.pullback(omega_target)?.sub(&omega.add(&df)?)?;
    let cert = mismatch.certify_zero(opts.samples, f64::INFINITY, opts.seed)?;
    if cert.max_residual > opts.tol {
        return Err(TwistedError::ScalingMismatch(cert.max_residual));
    }
    Ok(f_map.pullback(beta)?.scale_by(&scaling.neg().exp()))
}

#[cfg(test)]
mod tests;
