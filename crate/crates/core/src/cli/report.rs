//! Machine-readable run reports.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::manifest::TaskKind;
use crate::check::{lossless_f64, Check};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub os: String,
    pub arch: String,
    pub threads: usize,
    pub parallel: bool,
}

impl Environment {
    pub fn current() -> Self {
        let parallel = crate::exec::mode() == crate::exec::Mode::Parallel;
        #[cfg(feature = "parallel")]
        let threads = if parallel { rayon::current_num_threads() } else { 1 };
        #[cfg(not(feature = "parallel"))]
        let threads = 1;
        Environment {
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
            threads,
            parallel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub index: usize,
    pub kind: TaskKind,
    pub label: String,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(with = "lossless_f64")]
    pub wall_time_s: f64,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub environment: Environment,
    pub seed: u64,
    pub samples: usize,
    #[serde(with = "lossless_f64")]
    pub tolerance: f64,
    /// Seconds since the Unix epoch at start.
    pub started_unix_s: u64,
    #[serde(with = "lossless_f64")]
    pub wall_time_s: f64,
    pub green: bool,
    #[serde(default)]
    pub fail_fast_stopped: bool,
    pub tasks: Vec<TaskRecord>,
}

impl Report {
    /// Copy with every timing field zeroed, for run-to-run comparison.
    pub fn without_timestamps(&self) -> Report {
        let mut r = self.clone();
        r.started_unix_s = 0;
        r.wall_time_s = 0.0;
        for t in &mut r.tasks {
            t.wall_time_s = 0.0;
        }
        r
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(src: &str) -> Result<Report, serde_json::Error> {
        serde_json::from_str(src)
    }

    pub fn failing_checks(&self) -> impl Iterator<Item = (&TaskRecord, &Check)> {
        self.tasks
            .iter()
            .flat_map(|t| t.checks.iter().filter(|c| !c.passed).map(move |c| (t, c)))
    }

    /// Writes to a temporary file in the target directory, then renames it
    /// into place.
    pub fn write_atomic(&self, path: &Path) -> std::io::Result<()> {
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(self.to_json().as_bytes())?;
        tmp.as_file().sync_all()?;
        tmp.persist(path).map_err(|e| e.error)?;
        Ok(())
    }

    /// Human-readable summary. `verbose` lists passing checks too.
    pub fn render(&self, verbose: bool) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} {}  seed {}  samples {}  tol {:e}  {} on {}/{}, {} thread(s)",
            self.tool,
            self.version,
            self.seed,
            self.samples,
            self.tolerance,
            if self.environment.parallel { "parallel" } else { "sequential" },
            self.environment.os,
            self.environment.arch,
            self.environment.threads
        );
        for t in &self.tasks {
            let failed = t.checks.iter().filter(|c| !c.passed).count();
            let _ = writeln!(
                out,
                "[{}] {:<12} {}  ({} checks, {} failed, {:.2} s)",
                if t.passed { "PASS" } else { "FAIL" },
                t.kind.name(),
                t.label,
                t.checks.len(),
                failed,
                t.wall_time_s
            );
            if let Some(e) = &t.error {
                let _ = writeln!(out, "       error: {e}");
            }
            for c in t.checks.iter().filter(|c| verbose || !c.passed) {
                let _ = write!(
                    out,
                    "       {} {}  [{}]",
                    if c.passed { "ok  " } else { "FAIL" },
                    c.check,
                    c.anchor
                );
                match &c.rank {
                    Some(r) => {
                        let _ = write!(out, "  rank {} (expected {})", r.observed, r.expected);
                    }
                    None if c.tolerance > 0.0 => {
                        let _ = write!(out, "  residual {:.3e} (tol {:.1e})", c.max_residual, c.tolerance);
                    }
                    None => {}
                }
                if let Some(d) = &c.detail {
                    let _ = write!(out, "  {d}");
                }
                out.push('\n');
            }
        }
        if self.fail_fast_stopped {
            let _ = writeln!(out, "stopped after the first failing task (--fail-fast)");
        }
        let _ = writeln!(
            out,
            "{}: {} task(s), {} check(s), {} failing, {:.2} s",
            if self.green { "GREEN" } else { "RED" },
            self.tasks.len(),
            self.tasks.iter().map(|t| t.checks.len()).sum::<usize>(),
            self.failing_checks().count(),
            self.wall_time_s
        );
        out
    }
}
