//! Uniform result records for certified identities.

use serde::{Deserialize, Serialize};

use crate::forms::{DifferentialForm, FormError};
use crate::sampling::CheckOptions;

/// Rank information attached to a check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankData {
    pub observed: usize,
    pub expected: usize,
}

/// One certified identity: the largest residual seen over the samples and
/// whether it stayed under tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub check: String,
    /// The mathematical statement being checked, in formula form.
    pub anchor: String,
    #[serde(with = "lossless_f64")]
    pub max_residual: f64,
    #[serde(with = "lossless_f64")]
    pub tolerance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<RankData>,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Check {
    pub fn residual(check: &str, anchor: &str, max_residual: f64, tolerance: f64) -> Self {
        Check {
            check: check.to_string(),
            anchor: anchor.to_string(),
            max_residual,
            tolerance,
            rank: None,
            passed: max_residual < tolerance,
            detail: None,
        }
    }

    pub fn rank(check: &str, anchor: &str, observed: usize, expected: usize) -> Self {
        Check {
            check: check.to_string(),
            anchor: anchor.to_string(),
            max_residual: 0.0,
            tolerance: 0.0,
            rank: Some(RankData { observed, expected }),
            passed: observed == expected,
            detail: None,
        }
    }

    pub fn flag(check: &str, anchor: &str, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            check: check.to_string(),
            anchor: anchor.to_string(),
            max_residual: 0.0,
            tolerance: 0.0,
            rank: None,
            passed,
            detail: Some(detail.into()),
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }

    /// Certifies that `form` vanishes.
    pub fn form_zero(check: &str, anchor: &str, form: &DifferentialForm, opts: CheckOptions) -> Result<Self, FormError> {
        let cert = form.certify_zero(opts.samples, opts.tol, opts.seed)?;
        let mut c = Check::residual(check, anchor, cert.max_residual, opts.tol);
        if !c.passed {
            c.detail = Some(format!("worst point {}", form.domain().format_point(&cert.worst_point)));
        }
        Ok(c)
    }

    /// Certifies `a == b`.
    pub fn forms_equal(
        check: &str,
        anchor: &str,
        a: &DifferentialForm,
        b: &DifferentialForm,
        opts: CheckOptions,
    ) -> Result<Self, FormError> {
        Self::form_zero(check, anchor, &a.sub(b)?, opts)
    }

    pub fn prefixed(mut self, prefix: &str) -> Self {
        self.check = format!("{prefix}/{}", self.check);
        self
    }
}

/// Whether every check passed.
pub fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.passed)
}

/// Largest residual among the checks.
pub fn worst(checks: &[Check]) -> f64 {
    checks.iter().map(|c| c.max_residual).fold(0.0, f64::max)
}

/// JSON has no infinities or NaN; those are written as the strings
/// `"inf"`, `"-inf"` and `"nan"` so that records round-trip.
pub mod lossless_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("expected a number, got `{other}`"))),
            },
        }
    }
}
