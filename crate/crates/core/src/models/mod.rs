//! Named locally conformal symplectic structures and validators for the
//! first-kind axioms.

mod catalog;
mod jet;
pub mod sphere;

use std::sync::Arc;

use thiserror::Error;

use crate::check::{Check, RankData};
use crate::forms::numeric::{numerical_rank, rank_threshold, sharp_values, top_power_magnitude};
use crate::forms::{CoordinateDomain, DifferentialForm, FormError, VectorField};
use crate::sampling::CheckOptions;
use crate::symexpr::SymError;
use crate::twisted::d_twisted;

pub use catalog::{parse_catalog_ref, CatalogRef};
pub use jet::{jet_structure, model_liouville, model_reduction_universal, momentum, sl_k_action, Liouville, SlAction};
pub use sphere::{model_sphere_circle, model_sphere_circle_lattice, sphere_overlap_checks};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Form(#[from] FormError),
    #[error("structure `{0}` carries no transverse infinitesimal automorphism")]
    MissingB(String),
    #[error("matrix is not unimodular (det = {0})")]
    NotUnimodular(i64),
    #[error("bad parameter: {0}")]
    BadParameter(String),
    #[error("unknown catalog entry `{0}`")]
    UnknownModel(String),
}

impl From<SymError> for ModelError {
    fn from(e: SymError) -> Self {
        ModelError::Form(FormError::Sym(e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StructureKind {
    General,
    Exact,
    FirstKind,
}

/// Structure data on one chart.
#[derive(Debug, Clone)]
pub struct ChartData {
    pub domain: Arc<CoordinateDomain>,
    pub phi: DifferentialForm,
    pub omega: DifferentialForm,
    pub alpha: Option<DifferentialForm>,
    pub b: Option<VectorField>,
    /// Symbolic anti-Lee field when known in closed form; otherwise it is
    /// solved pointwise from `i_E Φ = −ω`.
    pub e: Option<VectorField>,
}

#[derive(Debug, Clone)]
pub struct LcsStructure {
    pub name: String,
    pub kind: StructureKind,
    pub charts: Vec<ChartData>,
}

impl LcsStructure {
    pub fn single(name: &str, kind: StructureKind, chart: ChartData) -> Self {
        LcsStructure {
            name: name.to_string(),
            kind,
            charts: vec![chart],
        }
    }

    /// Anti-Lee field at a point of chart `c`, solved from `i_E Φ = −ω`.
    pub fn anti_lee_at(&self, c: usize, point: &[f64]) -> Result<Vec<f64>, FormError> {
        let ch = &self.charts[c];
        crate::forms::sharp(&ch.phi, &ch.omega.neg(), point)
    }
}

fn chart_prefix(s: &LcsStructure, c: usize) -> String {
    if s.charts.len() == 1 {
        s.name.clone()
    } else {
        format!("{}[{}]", s.name, s.charts[c].domain.name)
    }
}

/// Lee equation, closedness of `ω`, nondegeneracy, and `d_ω α = Φ` when a
/// potential is present.
pub fn validate_lcs(s: &LcsStructure, opts: CheckOptions) -> Result<Vec<Check>, ModelError> {
    let mut out = Vec::new();
    for (c, ch) in s.charts.iter().enumerate() {
        let p = chart_prefix(s, c);
        let lee = ch.phi.ext_d().sub(&ch.omega.wedge(&ch.phi)?)?;
        out.push(Check::form_zero("lee-equation", "dΦ = ω∧Φ", &lee, opts)?.prefixed(&p));
        out.push(Check::form_zero("lee-closed", "dω = 0", &ch.omega.ext_d(), opts)?.prefixed(&p));
        out.push(nondegeneracy_check(ch, opts)?.prefixed(&p));
        if let Some(alpha) = &ch.alpha {
            let pot = d_twisted(&ch.omega, alpha)?;
            out.push(Check::forms_equal("potential", "d_ω α = Φ", &pot, &ch.phi, opts)?.prefixed(&p));
            let twice = d_twisted(&ch.omega, &pot)?;
            out.push(Check::form_zero("twisted-square", "d_ω(d_ω α) = 0", &twice, opts)?.prefixed(&p));
        }
    }
    Ok(out)
}

/// Rank of `Φ` and magnitude of its top wedge power over the samples.
fn nondegeneracy_check(ch: &ChartData, opts: CheckOptions) -> Result<Check, ModelError> {
    let dim = ch.domain.dim();
    let tape = ch.phi.compile()?;
    let points = ch.domain.sample_points(opts.samples, opts.seed);
    let thr = rank_threshold();
    let vals = crate::exec::try_map(&points, |p| {
        tape.eval_skew(p)
            .map(|m| (numerical_rank(&m, thr), top_power_magnitude(&m)))
            .map_err(|source| {
                FormError::Sym(SymError::Eval {
                    source,
                    point: ch.domain.format_point(p),
                })
            })
    })?;
    let min_rank = vals.iter().map(|v| v.0).min().unwrap_or(dim);
    let min_top = vals.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
    let mut check = Check::rank("nondegenerate", "Φ^n ≠ 0", min_rank, dim);
    check.passed = min_rank == dim && min_top > 1e-8;
    check.max_residual = 0.0;
    Ok(check.with_detail(format!("min |Φ^n| coefficient {min_top:.3e}")))
}

/// Every identity of a first-kind structure, each certified separately:
/// `α = −♭(B)`, `ω(B) = 1`, `L_B Φ = 0`, `L_B Φ = (1 − ω(B))Φ`,
/// `i_E Φ = −ω`, `ω(E) = 0`, `[B, E] = 0`, plus [`validate_lcs`].
pub fn validate_first_kind(s: &LcsStructure, opts: CheckOptions) -> Result<Vec<Check>, ModelError> {
    let mut out = validate_lcs(s, opts)?;
    for (c, ch) in s.charts.iter().enumerate() {
        let p = chart_prefix(s, c);
        let b = ch.b.as_ref().ok_or_else(|| ModelError::MissingB(s.name.clone()))?;
        let dom = &ch.domain;
        let ib = ch.phi.interior(b)?;
        if let Some(alpha) = &ch.alpha {
            out.push(Check::form_zero("potential-from-b", "i_B Φ = −α", &ib.add(alpha)?, opts)?.prefixed(&p));
        }
        let wb = DifferentialForm::scalar(dom, ch.omega.pair(b)?.sub(&crate::symexpr::Expr::one()));
        out.push(Check::form_zero("lee-of-b", "ω(B) = 1", &wb, opts)?.prefixed(&p));
        let lb = ch.phi.lie_derivative(b)?;
        out.push(Check::form_zero("b-preserves-phi", "L_B Φ = 0", &lb, opts)?.prefixed(&p));
        let factor = crate::symexpr::Expr::one().sub(&ch.omega.pair(b)?);
        let liouville = lb.sub(&ch.phi.scale_by(&factor))?;
        out.push(Check::form_zero("lie-identity", "L_B Φ = (1 − ω(B))Φ", &liouville, opts)?.prefixed(&p));
        match &ch.e {
            Some(e) => {
                let ie = ch.phi.interior(e)?.add(&ch.omega)?;
                out.push(Check::form_zero("anti-lee", "i_E Φ = −ω", &ie, opts)?.prefixed(&p));
                let we = DifferentialForm::scalar(dom, ch.omega.pair(e)?);
                out.push(Check::form_zero("lee-of-e", "ω(E) = 0", &we, opts)?.prefixed(&p));
                let br = b.bracket(e)?;
                let br_form = DifferentialForm::one_form(dom, br.components().to_vec())?;
                out.push(Check::form_zero("b-e-commute", "[B, E] = 0", &br_form, opts)?.prefixed(&p));
                out.push(anti_lee_agreement(s, c, e, opts)?.prefixed(&p));
            }
            None => out.extend(numeric_anti_lee_checks(s, c, b, opts)?.into_iter().map(|k| k.prefixed(&p))),
        }
    }
    Ok(out)
}

/// The closed-form anti-Lee field agrees with the pointwise solve.
fn anti_lee_agreement(s: &LcsStructure, c: usize, e: &VectorField, opts: CheckOptions) -> Result<Check, ModelError> {
    let ch = &s.charts[c];
    let phi = ch.phi.compile()?;
    let om = ch.omega.compile()?;
    let et = e.compile()?;
    let points = ch.domain.sample_points(opts.samples, opts.seed ^ 0xe);
    let mut worst = 0.0f64;
    let mut min_rank = ch.domain.dim();
    let err = |p: &[f64]| {
        let point = ch.domain.format_point(p);
        move |source| ModelError::Form(FormError::Sym(SymError::Eval { source, point }))
    };
    for p in &points {
        let m = phi.eval_skew(p).map_err(err(p))?;
        let w: Vec<f64> = om.eval_covector(p).map_err(err(p))?.iter().map(|v| -v).collect();
        match sharp_values(&m, &w) {
            Ok(v) => {
                let ev = et.eval(p).map_err(err(p))?;
                worst = worst.max(v.iter().zip(&ev).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
            }
            Err(rank) => min_rank = min_rank.min(rank),
        }
    }
    let mut check = Check::residual("anti-lee-solve", "E = −♭_Φ^{-1}(ω)", worst, opts.tol);
    if min_rank < ch.domain.dim() {
        check.passed = false;
        check.rank = Some(RankData {
            observed: min_rank,
            expected: ch.domain.dim(),
        });
    }
    Ok(check)
}

/// Anti-Lee checks without a closed form: `E` is solved pointwise and the
/// bracket with `B` uses central differences of the solution.
fn numeric_anti_lee_checks(s: &LcsStructure, c: usize, b: &VectorField, opts: CheckOptions) -> Result<Vec<Check>, ModelError> {
    let ch = &s.charts[c];
    let n = ch.domain.dim();
    let om = ch.omega.compile()?;
    let bt = b.compile()?;
    let bjac: Vec<crate::symexpr::Expr> = b.jacobian().into_iter().flatten().collect();
    let bj = crate::symexpr::Tape::compile_in(&bjac, &ch.domain)?;
    let points = ch.domain.sample_points(opts.samples.min(100), opts.seed ^ 0xe);
    let h = 1e-5;
    let (mut w_e, mut br) = (0.0f64, 0.0f64);
    for p in &points {
        let e = s.anti_lee_at(c, p)?;
        let w = om.eval_covector(p).map_err(|x| FormError::Sym(SymError::Eval { source: x, point: ch.domain.format_point(p) }))?;
        w_e = w_e.max(w.iter().zip(&e).map(|(a, b)| a * b).sum::<f64>().abs());
        let bv = bt.eval(p).map_err(|x| FormError::Sym(SymError::Eval { source: x, point: ch.domain.format_point(p) }))?;
        let dbv = bj.eval(p).map_err(|x| FormError::Sym(SymError::Eval { source: x, point: ch.domain.format_point(p) }))?;
        // (DE) B by a central difference along B
        let plus: Vec<f64> = p.iter().zip(&bv).map(|(x, v)| x + h * v).collect();
        let minus: Vec<f64> = p.iter().zip(&bv).map(|(x, v)| x - h * v).collect();
        let ep = s.anti_lee_at(c, &plus)?;
        let em = s.anti_lee_at(c, &minus)?;
        for i in 0..n {
            let de_b = (ep[i] - em[i]) / (2.0 * h);
            let db_e: f64 = (0..n).map(|j| dbv[i * n + j] * e[j]).sum();
            br = br.max((de_b - db_e).abs());
        }
    }
    Ok(vec![
        Check::residual("lee-of-e", "ω(E) = 0", w_e, opts.tol),
        Check::residual("b-e-commute", "[B, E] = 0", br, opts.tol.max(1e-7))
            .with_detail("E solved pointwise; bracket by central differences (h = 1e-5)"),
    ])
}
