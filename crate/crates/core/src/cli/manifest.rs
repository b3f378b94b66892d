//! Manifest schema and its resolution into runnable jobs.
//!
//! Parsing is strict (unknown fields are rejected) and resolution happens
//! before any task runs: every structure is built and every expression is
//! parsed up front, so a manifest either fails as an input error or runs to
//! completion.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Deserialize;

use super::InputError;
use crate::embed::Psi2Variant;
use crate::forms::{Coordinate, CoordinateDomain, DifferentialForm, SmoothMap, VectorField};
use crate::models::{parse_catalog_ref, ChartData, LcsStructure, StructureKind};
use crate::reduce::LeeDecomposition;
use crate::sampling::CheckOptions;
use crate::symexpr::{parse, Expr};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub seed: u64,
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub structures: BTreeMap<String, StructureDecl>,
    #[serde(default)]
    pub tasks: Vec<TaskDecl>,
}

/// Either a catalog reference or an inline single-chart structure, with
/// optional replacement of individual forms or fields.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureDecl {
    #[serde(default)]
    pub catalog: Option<String>,
    #[serde(default)]
    pub inline: Option<InlineChart>,
    #[serde(default, rename = "override")]
    pub overrides: Option<Override>,
}

/// Form coefficients keyed by comma-separated coordinate names, e.g.
/// `{"x,y": "exp(t)"}` for `e^t dx∧dy`.
pub type FormDecl = BTreeMap<String, String>;
/// Vector field components keyed by coordinate name.
pub type FieldDecl = BTreeMap<String, String>;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoordinateDecl {
    pub name: String,
    #[serde(default)]
    pub angular: bool,
    #[serde(default)]
    pub range: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineChart {
    #[serde(default)]
    pub kind: Option<StructureKind>,
    pub coordinates: Vec<CoordinateDecl>,
    pub phi: FormDecl,
    pub omega: FormDecl,
    #[serde(default)]
    pub alpha: Option<FormDecl>,
    #[serde(default)]
    pub b: Option<FieldDecl>,
    #[serde(default)]
    pub e: Option<FieldDecl>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Override {
    /// Chart to modify; all charts when absent.
    #[serde(default)]
    pub chart: Option<usize>,
    #[serde(default)]
    pub phi: Option<FormDecl>,
    #[serde(default)]
    pub omega: Option<FormDecl>,
    #[serde(default)]
    pub alpha: Option<FormDecl>,
    #[serde(default)]
    pub b: Option<FieldDecl>,
    #[serde(default)]
    pub e: Option<FieldDecl>,
}

/// A number or a constant expression such as `"sqrt(2)"`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Lcs,
    #[default]
    FirstKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemName {
    Circle,
    Torus,
    Sphere3,
    SphereCircle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CohomologyMode {
    #[default]
    Betti,
    Obstruction,
    Averaging,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TaskDecl {
    Verify {
        #[serde(default)]
        label: Option<String>,
        structure: String,
        #[serde(default)]
        suite: Suite,
        /// Keep only checks with these names (the part after the last `/`).
        #[serde(default)]
        checks: Vec<String>,
    },
    Embed {
        #[serde(default)]
        label: Option<String>,
        problem: ProblemName,
        #[serde(default)]
        variant: Option<Psi2Variant>,
        #[serde(default)]
        dimension: Option<usize>,
        #[serde(default)]
        rho: Option<f64>,
        /// Required for `sphere-circle`.
        #[serde(default)]
        structure: Option<String>,
        #[serde(default)]
        q: Option<Scalar>,
    },
    ReduceChain {
        #[serde(default)]
        label: Option<String>,
        structure: String,
        /// Defaults to the last chart.
        #[serde(default)]
        chart: Option<usize>,
        mu: Vec<Scalar>,
        #[serde(default)]
        f0: Option<String>,
        omegas: Vec<FormDecl>,
        tau: Vec<String>,
        /// Loop components as expressions in `t ∈ [0, 1]`.
        loops: Vec<Vec<String>>,
        iprime: Vec<String>,
        dimension: usize,
    },
    Cohomology {
        #[serde(default)]
        label: Option<String>,
        n: usize,
        m: usize,
        #[serde(default)]
        mu: Vec<Scalar>,
        #[serde(default)]
        mode: CohomologyMode,
        #[serde(default)]
        refine: bool,
        #[serde(default)]
        expect_betti: Option<Vec<usize>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Verify,
    Embed,
    ReduceChain,
    Cohomology,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Verify => "verify",
            TaskKind::Embed => "embed",
            TaskKind::ReduceChain => "reduce-chain",
            TaskKind::Cohomology => "cohomology",
        }
    }
}

impl TaskDecl {
    pub fn kind(&self) -> TaskKind {
        match self {
            TaskDecl::Verify { .. } => TaskKind::Verify,
            TaskDecl::Embed { .. } => TaskKind::Embed,
            TaskDecl::ReduceChain { .. } => TaskKind::ReduceChain,
            TaskDecl::Cohomology { .. } => TaskKind::Cohomology,
        }
    }
}

/// A resolved task.
#[derive(Debug)]
pub enum Job {
    Verify {
        structure: Arc<LcsStructure>,
        suite: Suite,
        filter: Vec<String>,
    },
    Embed {
        problem: ProblemName,
        variant: Psi2Variant,
        dimension: Option<usize>,
        rho: f64,
        structure: Option<(Arc<LcsStructure>, f64)>,
    },
    ReduceChain {
        chart: ChartData,
        dec: LeeDecomposition,
        iprime: Vec<Expr>,
        dimension: usize,
    },
    Cohomology {
        n: usize,
        m: usize,
        mu: Vec<f64>,
        mode: CohomologyMode,
        refine: bool,
        expect_betti: Option<Vec<usize>>,
    },
}

#[derive(Debug)]
pub struct PreparedTask {
    pub kind: TaskKind,
    pub label: String,
    pub job: Job,
}

#[derive(Debug)]
pub struct Prepared {
    pub seed: u64,
    pub opts: CheckOptions,
    pub tasks: Vec<PreparedTask>,
}

/// Command-line overrides applied on top of the manifest.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub samples: Option<usize>,
    pub single_phi: bool,
    pub only: Option<TaskKind>,
}

/// 1-based line of the `nth` occurrence of `needle` at or after `from`.
fn line_of(src: &str, needle: &str, from: usize, nth: usize) -> Option<usize> {
    let mut pos = from.min(src.len());
    for i in 0..=nth {
        let at = src[pos..].find(needle)? + pos;
        if i == nth {
            return Some(src[..at].matches('\n').count() + 1);
        }
        pos = at + needle.len();
    }
    None
}

struct Locator<'a> {
    src: &'a str,
}

impl Locator<'_> {
    fn structure(&self, name: &str) -> Option<usize> {
        let from = self.src.find("\"structures\"").unwrap_or(0);
        line_of(self.src, &format!("\"{name}\""), from, 0)
    }

    fn task(&self, index: usize) -> Option<usize> {
        let from = self.src.find("\"tasks\"")?;
        line_of(self.src, "\"kind\"", from, index)
    }
}

pub fn parse_manifest(src: &str) -> Result<Manifest, InputError> {
    serde_json::from_str(src).map_err(|e| InputError {
        line: if e.line() > 0 { Some(e.line()) } else { None },
        message: e.to_string(),
    })
}

fn expr(src: &str) -> Result<Expr, String> {
    parse(src).map_err(|e| format!("expression `{src}`: {e}"))
}

fn scalar(s: &Scalar) -> Result<f64, String> {
    match s {
        Scalar::Number(v) => Ok(*v),
        Scalar::Text(t) => expr(t)?.as_const().ok_or_else(|| format!("`{t}` is not a constant")),
    }
}

fn form(domain: &Arc<CoordinateDomain>, degree: usize, decl: &FormDecl) -> Result<DifferentialForm, String> {
    let mut terms = Vec::with_capacity(decl.len());
    for (key, coeff) in decl {
        let names: Vec<&str> = key.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
        if names.len() != degree {
            return Err(format!("form key `{key}` names {} coordinates, expected {degree}", names.len()));
        }
        let idx = names
            .iter()
            .map(|n| domain.index_of(n).ok_or_else(|| format!("unknown coordinate `{n}` in `{key}`")))
            .collect::<Result<Vec<_>, _>>()?;
        terms.push((idx, checked_expr(domain, coeff)?));
    }
    DifferentialForm::from_terms(domain, degree, terms).map_err(|e| e.to_string())
}

fn field(domain: &Arc<CoordinateDomain>, decl: &FieldDecl) -> Result<VectorField, String> {
    let parts = decl
        .iter()
        .map(|(k, v)| Ok((k.as_str(), checked_expr(domain, v)?)))
        .collect::<Result<Vec<_>, String>>()?;
    VectorField::from_named(domain, &parts).map_err(|e| e.to_string())
}

/// Parses and rejects variables outside the chart.
fn checked_expr(domain: &CoordinateDomain, src: &str) -> Result<Expr, String> {
    let e = expr(src)?;
    if let Some(v) = e.variables().into_iter().find(|v| domain.index_of(v).is_none()) {
        return Err(format!("expression `{src}` uses `{v}`, which is not a coordinate of {}", domain.name));
    }
    Ok(e)
}

fn inline_structure(name: &str, c: &InlineChart) -> Result<LcsStructure, String> {
    let coords = c
        .coordinates
        .iter()
        .map(|d| match (d.angular, d.range) {
            (true, None) => Ok(Coordinate::angular(&d.name)),
            (false, Some([lo, hi])) if lo < hi => Ok(Coordinate::linear(&d.name, lo, hi)),
            (false, None) => Ok(Coordinate::linear(&d.name, -1.0, 1.0)),
            _ => Err(format!("coordinate `{}`: give either `angular` or an increasing `range`", d.name)),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let domain = Arc::new(CoordinateDomain::new(name, coords).map_err(|e| e.to_string())?);
    let alpha = c.alpha.as_ref().map(|a| form(&domain, 1, a)).transpose()?;
    let b = c.b.as_ref().map(|b| field(&domain, b)).transpose()?;
    let kind = c.kind.unwrap_or(match (&alpha, &b) {
        (Some(_), Some(_)) => StructureKind::FirstKind,
        (Some(_), None) => StructureKind::Exact,
        _ => StructureKind::General,
    });
    Ok(LcsStructure::single(
        name,
        kind,
        ChartData {
            phi: form(&domain, 2, &c.phi)?,
            omega: form(&domain, 1, &c.omega)?,
            alpha,
            b,
            e: c.e.as_ref().map(|e| field(&domain, e)).transpose()?,
            domain,
        },
    ))
}

fn apply_override(s: &mut LcsStructure, o: &Override) -> Result<(), String> {
    let n = s.charts.len();
    let range = match o.chart {
        Some(c) if c < n => c..c + 1,
        Some(c) => return Err(format!("override chart {c} out of range (structure has {n} charts)")),
        None => 0..n,
    };
    for ch in &mut s.charts[range] {
        let d = ch.domain.clone();
        if let Some(f) = &o.phi {
            ch.phi = form(&d, 2, f)?;
        }
        if let Some(f) = &o.omega {
            ch.omega = form(&d, 1, f)?;
        }
        if let Some(f) = &o.alpha {
            ch.alpha = Some(form(&d, 1, f)?);
        }
        if let Some(f) = &o.b {
            ch.b = Some(field(&d, f)?);
        }
        if let Some(f) = &o.e {
            ch.e = Some(field(&d, f)?);
        }
    }
    Ok(())
}

fn build_structure(name: &str, decl: &StructureDecl) -> Result<LcsStructure, String> {
    let mut s = match (&decl.catalog, &decl.inline) {
        (Some(r), None) => parse_catalog_ref(r).and_then(|r| r.build()).map_err(|e| e.to_string())?,
        (None, Some(c)) => inline_structure(name, c)?,
        _ => return Err("give exactly one of `catalog` or `inline`".into()),
    };
    if let Some(o) = &decl.overrides {
        apply_override(&mut s, o)?;
    }
    Ok(s)
}

fn loop_map(target: &Arc<CoordinateDomain>, comps: &[String]) -> Result<SmoothMap, String> {
    let line = Arc::new(CoordinateDomain::new("loop", vec![Coordinate::linear("t", 0.0, 1.0)]).map_err(|e| e.to_string())?);
    let comps = comps.iter().map(|c| checked_expr(&line, c)).collect::<Result<Vec<_>, _>>()?;
    SmoothMap::new(&line, target, comps).map_err(|e| e.to_string())
}

/// Resolves structures and tasks. Only tasks of kind `only` are kept when
/// it is set; structures are always resolved so a broken declaration is
/// reported regardless of the subcommand.
pub fn prepare(src: &str, m: &Manifest, ov: &Overrides) -> Result<Prepared, InputError> {
    let loc = Locator { src };
    let mut structures: BTreeMap<&str, Arc<LcsStructure>> = BTreeMap::new();
    for (name, decl) in &m.structures {
        let s = build_structure(name, decl).map_err(|message| InputError {
            line: loc.structure(name),
            message: format!("structure `{name}`: {message}"),
        })?;
        structures.insert(name, Arc::new(s));
    }
    let opts = CheckOptions {
        samples: ov.samples.or(m.samples).unwrap_or(200),
        tol: ov.tol.or(m.tolerance).unwrap_or(1e-9),
        seed: ov.seed.unwrap_or(m.seed),
    };
    if opts.samples == 0 || !(opts.tol > 0.0) {
        return Err(InputError {
            line: None,
            message: "samples must be positive and tolerance must be a positive number".into(),
        });
    }
    let lookup = |name: &str| {
        structures
            .get(name)
            .cloned()
            .ok_or_else(|| format!("unknown structure `{name}`"))
    };
    let mut tasks = Vec::new();
    for (i, t) in m.tasks.iter().enumerate() {
        let err = |message: String| InputError {
            line: loc.task(i),
            message: format!("task {} ({}): {message}", i + 1, t.kind().name()),
        };
        let (label, job) = prepare_task(t, &lookup, ov).map_err(err)?;
        if ov.only.map_or(true, |k| k == t.kind()) {
            tasks.push(PreparedTask {
                kind: t.kind(),
                label,
                job,
            });
        }
    }
    Ok(Prepared {
        seed: opts.seed,
        opts,
        tasks,
    })
}

fn prepare_task(
    t: &TaskDecl,
    lookup: &dyn Fn(&str) -> Result<Arc<LcsStructure>, String>,
    ov: &Overrides,
) -> Result<(String, Job), String> {
    match t {
        TaskDecl::Verify {
            label,
            structure,
            suite,
            checks,
        } => Ok((
            label.clone().unwrap_or_else(|| structure.clone()),
            Job::Verify {
                structure: lookup(structure)?,
                suite: *suite,
                filter: checks.clone(),
            },
        )),
        TaskDecl::Embed {
            label,
            problem,
            variant,
            dimension,
            rho,
            structure,
            q,
        } => {
            let rho = rho.unwrap_or(1.2);
            if !(rho > 1.0) {
                return Err(format!("rho must exceed 1, got {rho}"));
            }
            let structure = match (problem, structure) {
                (ProblemName::SphereCircle, Some(s)) => {
                    let q = q.as_ref().map(scalar).transpose()?.unwrap_or(1.0);
                    Some((lookup(s)?, q))
                }
                (ProblemName::SphereCircle, None) => return Err("`sphere-circle` needs a `structure`".into()),
                (_, Some(_)) => return Err("only `sphere-circle` takes a `structure`".into()),
                (_, None) => None,
            };
            let variant = if ov.single_phi {
                Psi2Variant::SinglePhi
            } else {
                variant.unwrap_or(Psi2Variant::DoublePhi)
            };
            let default_label = format!("{problem:?}").to_lowercase();
            Ok((
                label.clone().unwrap_or(default_label),
                Job::Embed {
                    problem: *problem,
                    variant,
                    dimension: *dimension,
                    rho,
                    structure,
                },
            ))
        }
        TaskDecl::ReduceChain {
            label,
            structure,
            chart,
            mu,
            f0,
            omegas,
            tau,
            loops,
            iprime,
            dimension,
        } => {
            let s = lookup(structure)?;
            let c = chart.unwrap_or(s.charts.len() - 1);
            let ch = s
                .charts
                .get(c)
                .ok_or_else(|| format!("chart {c} out of range (structure has {} charts)", s.charts.len()))?
                .clone();
            let d = ch.domain.clone();
            let mu = mu.iter().map(scalar).collect::<Result<Vec<_>, _>>()?;
            let k = mu.len();
            if omegas.len() != k || tau.len() != k || loops.len() != k {
                return Err(format!(
                    "need one omega, tau and loop per period: mu has {k}, got {}, {}, {}",
                    omegas.len(),
                    tau.len(),
                    loops.len()
                ));
            }
            let dec = LeeDecomposition {
                mu,
                f0: f0.as_deref().map(|e| checked_expr(&d, e)).transpose()?.unwrap_or_else(Expr::zero),
                omegas: omegas.iter().map(|w| form(&d, 1, w)).collect::<Result<_, _>>()?,
                tau: tau.iter().map(|e| checked_expr(&d, e)).collect::<Result<_, _>>()?,
                loops: loops.iter().map(|l| loop_map(&d, l)).collect::<Result<_, _>>()?,
            };
            // i′ lives on M₁, whose extra coordinates are vth{j} and r{j}.
            let iprime = iprime.iter().map(|e| expr(e)).collect::<Result<_, _>>()?;
            Ok((
                label.clone().unwrap_or_else(|| format!("{structure}[{}]", d.name)),
                Job::ReduceChain {
                    chart: ch,
                    dec,
                    iprime,
                    dimension: *dimension,
                },
            ))
        }
        TaskDecl::Cohomology {
            label,
            n,
            m,
            mu,
            mode,
            refine,
            expect_betti,
        } => {
            let mu = if mu.is_empty() {
                vec![0.0; *n]
            } else {
                mu.iter().map(scalar).collect::<Result<Vec<_>, _>>()?
            };
            if mu.len() != *n {
                return Err(format!("mu has {} entries for a {n}-torus", mu.len()));
            }
            if let Some(b) = expect_betti {
                if b.len() != n + 1 {
                    return Err(format!("expect_betti needs {} entries", n + 1));
                }
            }
            Ok((
                label.clone().unwrap_or_else(|| match mode {
                    CohomologyMode::Betti => format!("T^{n} m={m} mu={mu:?}"),
                    CohomologyMode::Obstruction => format!("area obstruction T^{n} m={m}"),
                    CohomologyMode::Averaging => format!("averaging T^{n} m={m}"),
                }),
                Job::Cohomology {
                    n: *n,
                    m: *m,
                    mu,
                    mode: *mode,
                    refine: *refine,
                    expect_betti: expect_betti.clone(),
                },
            ))
        }
    }
}
