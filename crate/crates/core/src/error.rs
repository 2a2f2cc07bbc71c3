use std::path::PathBuf;

use thiserror::Error;

/// Field-level validation problem found while checking a run description.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigIssue {
    /// Dotted path of the offending field, e.g. `grid.k_min`.
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} must be nonnegative, got {value}")]
    Negative { what: &'static str, value: f64 },

    #[error("invalid {what}: {reason}")]
    InvalidArgument { what: &'static str, reason: String },

    #[error("no gain partner: c = {c} exceeds a = {a}")]
    NoPartner { a: f64, c: f64 },

    #[error("triad ({a}, {b}, {c}) is not realizable as k = k1 + k2 (defect {defect:e})")]
    NonRealizable { a: f64, b: f64, c: f64, defect: f64 },

    #[error("root bracket did not converge after {iterations} iterations: s in [{lo}, {hi}], residual {residual:e}")]
    NonConvergence { iterations: usize, lo: f64, hi: f64, residual: f64 },

    #[error("test function support is unbounded on the loss surface; give a finite truncation radius")]
    UnboundedSupport,

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("non-finite summand at node {node} ({surface} entry {entry}, partners {partners:?})")]
    NonFiniteSummand {
        node: usize,
        surface: &'static str,
        entry: usize,
        partners: (f64, f64),
    },

    #[error("positivity could not be restored at t = {time} after {halvings} step halvings")]
    PositivityFailure { time: f64, halvings: u32 },

    #[error("moment M_{exponent} = {value:e} exceeds ceiling {ceiling:e} at t = {time}")]
    MomentCeiling { time: f64, exponent: f64, value: f64, ceiling: f64 },

    #[error("scan band [{lo}, {hi}] must stay a decade inside the grid [{k_min}, {k_max}]")]
    BandTooClose { lo: f64, hi: f64, k_min: f64, k_max: f64 },

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("invalid configuration:\n{}", format_issues(.0))]
    Config(Vec<ConfigIssue>),

    #[error("malformed snapshot file {path}: {reason}")]
    Snapshot { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn format_issues(issues: &[ConfigIssue]) -> String {
    issues
        .iter()
        .map(|i| format!("  - {i}"))
        .collect::<Vec<_>>()
        .join("\n")
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_nonneg(what: &'static str, value: f64) -> Result<()> {
    if value >= 0.0 {
        Ok(())
    } else {
        Err(Error::Negative { what, value })
    }
}
