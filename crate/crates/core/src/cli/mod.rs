//! Manifest-driven front end: resolves a JSON manifest, runs its tasks in
//! order and writes a JSON report.
//!
//! Exit codes: 0 when every check passes, 1 when a check or task fails,
//! 2 for input errors (unreadable or invalid manifest, unwritable report).

pub mod manifest;
pub mod report;


use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};

use crate::check::{all_passed, Check};
use crate::cohomology::{analyze_torus, averaging_checks, ot_obstruction_check, refinement_check, RankOptions};
use crate::embed::{build_lcs_embedding, embed_contact, problem_circle, problem_sphere3, problem_sphere_circle, problem_torus};
use crate::models::{validate_first_kind, validate_lcs};
use crate::reduce::run_reduction_chain;
use crate::sampling::CheckOptions;
use manifest::{CohomologyMode, Job, Overrides, Prepared, ProblemName, Suite, TaskKind};
use report::{Environment, Report, TaskRecord};

pub const EXIT_GREEN: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

/// Manifest problem with the line it was traced to, when known.
#[derive(Debug, Clone, PartialEq)]
pub struct InputError {
    pub line: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for InputError {}

/// Run-time switches that do not change what is checked.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub fail_fast: bool,
}

fn run_job(job: &Job, opts: CheckOptions) -> Result<Vec<Check>, String> {
    match job {
        Job::Verify {
            structure,
            suite,
            filter,
        } => {
            let checks = match suite {
                Suite::Lcs => validate_lcs(structure, opts),
                Suite::FirstKind => validate_first_kind(structure, opts),
            }
            .map_err(|e| e.to_string())?;
            if filter.is_empty() {
                return Ok(checks);
            }
            let kept: Vec<Check> = checks
                .into_iter()
                .filter(|c| filter.iter().any(|f| c.check.rsplit('/').next() == Some(f.as_str())))
                .collect();
            if kept.is_empty() {
                return Err(format!("no check matches {filter:?}"));
            }
            Ok(kept)
        }
        Job::Embed {
            problem,
            variant,
            dimension,
            rho,
            structure,
        } => {
            let err = |e: crate::embed::EmbedError| e.to_string();
            if let Some((s, q)) = structure {
                let (pr, tau) = problem_sphere_circle(s, *q, *rho).map_err(err)?;
                let n = dimension.unwrap_or(10);
                let e = build_lcs_embedding(s, &pr, &tau, n, opts).map_err(err)?;
                return Ok(e.checks.into_iter().map(|c| c.prefixed(&pr.name)).collect());
            }
            let pr = match problem {
                ProblemName::Circle => problem_circle(*rho),
                ProblemName::Torus => problem_torus(*rho),
                ProblemName::Sphere3 => problem_sphere3(*rho),
                ProblemName::SphereCircle => unreachable!("resolved with a structure"),
            }
            .map_err(err)?;
            let s = embed_contact(&pr, *variant, *dimension, opts).map_err(err)?;
            Ok(s.checks.into_iter().map(|c| c.prefixed(&pr.name)).collect())
        }
        Job::ReduceChain {
            chart,
            dec,
            iprime,
            dimension,
        } => {
            let (report, _) = run_reduction_chain(chart, dec, iprime, *dimension, opts).map_err(|e| e.to_string())?;
            Ok(report.checks())
        }
        Job::Cohomology {
            n,
            m,
            mu,
            mode,
            refine,
            expect_betti,
        } => {
            let err = |e: crate::cohomology::CohomologyError| e.to_string();
            let ro = RankOptions::default();
            let mut checks = match mode {
                CohomologyMode::Betti => {
                    let r = analyze_torus(*n, *m, mu, ro).map_err(err)?;
                    let mut checks = r.checks;
                    if let Some(want) = expect_betti {
                        checks.push(Check::flag(
                            "expected-betti",
                            "b(T^n, μ) as declared",
                            &r.betti == want,
                            format!("got {:?}, expected {want:?}", r.betti),
                        ));
                    }
                    checks
                }
                CohomologyMode::Obstruction => ot_obstruction_check(*n, *m).map_err(err)?.checks,
                CohomologyMode::Averaging => averaging_checks(*n, *m, opts.seed).map_err(err)?,
            };
            if *refine {
                checks.push(refinement_check(*n, *m, mu, ro).map_err(err)?);
            }
            Ok(checks)
        }
    }
}

/// Runs the prepared tasks in declaration order.
pub fn execute(prepared: &Prepared, ro: RunOptions) -> Report {
    let started = Instant::now();
    let started_unix_s = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let mut tasks = Vec::with_capacity(prepared.tasks.len());
    let mut stopped = false;
    for (index, t) in prepared.tasks.iter().enumerate() {
        let t0 = Instant::now();
        let (checks, error) = match run_job(&t.job, prepared.opts) {
            Ok(c) => (c, None),
            Err(e) => (vec![], Some(e)),
        };
        let passed = error.is_none() && all_passed(&checks);
        tasks.push(TaskRecord {
            index,
            kind: t.kind,
            label: t.label.clone(),
            passed,
            error,
            wall_time_s: t0.elapsed().as_secs_f64(),
            checks,
        });
        if !passed && ro.fail_fast && index + 1 < prepared.tasks.len() {
            stopped = true;
            break;
        }
    }
    Report {
        tool: "lcskit".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        environment: Environment::current(),
        seed: prepared.seed,
        samples: prepared.opts.samples,
        tolerance: prepared.opts.tol,
        started_unix_s,
        wall_time_s: started.elapsed().as_secs_f64(),
        green: tasks.iter().all(|t| t.passed) && !stopped,
        fail_fast_stopped: stopped,
        tasks,
    }
}

/// Reads, resolves and runs a manifest.
pub fn run_manifest(path: &Path, ov: &Overrides, ro: RunOptions) -> Result<Report, InputError> {
    let src = std::fs::read_to_string(path).map_err(|e| InputError {
        line: None,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    run_manifest_str(&src, ov, ro)
}

pub fn run_manifest_str(src: &str, ov: &Overrides, ro: RunOptions) -> Result<Report, InputError> {
    let m = manifest::parse_manifest(src)?;
    let prepared = manifest::prepare(src, &m, ov)?;
    Ok(execute(&prepared, ro))
}

#[derive(Debug, Parser)]
#[command(name = "lcskit", version, about = "Certified checks for locally conformal symplectic structures")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Override the manifest seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Override the residual tolerance.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Override the number of samples per chart.
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    /// Stop after the first failing task.
    #[arg(long, global = true)]
    pub fail_fast: bool,
    /// Worker threads; 1 runs everything sequentially.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Build embeddings with the (φ, 1) last pair instead of (2φ, 1).
    #[arg(long, global = true)]
    pub single_phi: bool,
    /// Report path (default: the manifest path with extension `report.json`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// List passing checks as well.
    #[arg(long, short, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every task of the manifest.
    Run { manifest: PathBuf },
    /// Run only `verify` tasks.
    Verify { manifest: PathBuf },
    /// Run only `embed` tasks.
    Embed { manifest: PathBuf },
    /// Run only `reduce-chain` tasks.
    ReduceChain { manifest: PathBuf },
    /// Run only `cohomology` tasks.
    Cohomology { manifest: PathBuf },
    /// Pretty-print a report file.
    Report { file: PathBuf },
}

fn configure_threads(threads: Option<usize>) -> Result<(), InputError> {
    match threads {
        None => Ok(()),
        Some(0) => Err(InputError {
            line: None,
            message: "--threads must be at least 1".into(),
        }),
        Some(1) => {
            crate::exec::set_mode(crate::exec::Mode::Sequential);
            Ok(())
        }
        Some(_n) => {
            crate::exec::set_mode(crate::exec::Mode::Parallel);
            // The global pool can only be configured once per process; later
            // requests keep the first size.
            #[cfg(feature = "parallel")]
            let _ = rayon::ThreadPoolBuilder::new().num_threads(_n).build_global();
            Ok(())
        }
    }
}

fn default_report_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("report.json")
}

/// Entry point shared by the binary and the tests; returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_GREEN };
        }
    };
    let g = &cli.global;
    let (path, only) = match &cli.command {
        Command::Report { file } => return print_report(file, g.verbose),
        Command::Run { manifest } => (manifest, None),
        Command::Verify { manifest } => (manifest, Some(TaskKind::Verify)),
        Command::Embed { manifest } => (manifest, Some(TaskKind::Embed)),
        Command::ReduceChain { manifest } => (manifest, Some(TaskKind::ReduceChain)),
        Command::Cohomology { manifest } => (manifest, Some(TaskKind::Cohomology)),
    };
    if let Err(e) = configure_threads(g.threads) {
        eprintln!("error: {e}");
        return EXIT_INPUT;
    }
    let ov = Overrides {
        seed: g.seed,
        tol: g.tol,
        samples: g.samples,
        single_phi: g.single_phi,
        only,
    };
    let report = match run_manifest(path, &ov, RunOptions { fail_fast: g.fail_fast }) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            return EXIT_INPUT;
        }
    };
    let out = g.out.clone().unwrap_or_else(|| default_report_path(path));
    if let Err(e) = report.write_atomic(&out) {
        eprintln!("cannot write report {}: {e}", out.display());
        return EXIT_INPUT;
    }
    print!("{}", report.render(g.verbose));
    println!("report written to {}", out.display());
    if report.green {
        EXIT_GREEN
    } else {
        EXIT_FAILED
    }
}

fn print_report(file: &Path, verbose: bool) -> i32 {
    let parsed = std::fs::read_to_string(file)
        .map_err(|e| e.to_string())
        .and_then(|s| Report::from_json(&s).map_err(|e| e.to_string()));
    match parsed {
        Ok(r) => {
            print!("{}", r.render(verbose));
            EXIT_GREEN
        }
        Err(e) => {
            eprintln!("{}: {e}", file.display());
            EXIT_INPUT
        }
    }
}
