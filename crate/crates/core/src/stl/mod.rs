//! Signal temporal logic: formulas, text syntax, regions and robustness monitoring.

mod formula;
mod monitor;
mod parser;
mod region;
mod trajectory;

use thiserror::Error;

pub use formula::{Formula, Interval};
pub use monitor::{robustness, robustness_signal, satisfies};
pub use parser::{parse, parse_conjunctive};
pub use region::{Predicates, Region, RegionSet, Shape};
pub use trajectory::Trajectory;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StlError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("invalid interval [{lo},{hi}]{}: lower bound exceeds upper bound", pos.map(|p| format!(" at byte {p}")).unwrap_or_default())]
    InvalidInterval {
        pos: Option<usize>,
        lo: usize,
        hi: usize,
    },
    #[error("unknown operator `{op}` at byte {pos}")]
    UnknownOperator { pos: usize, op: String },
    #[error("formula cannot be put in negation normal form: {0}")]
    NotNormalizable(String),
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("duplicate region label `{0}`")]
    DuplicateRegion(String),
    #[error("invalid region `{label}`: {msg}")]
    InvalidRegion { label: String, msg: String },
    #[error("region `{label}` projects component {index} but the state has dimension {dim}")]
    ProjectionOutOfRange {
        label: String,
        index: usize,
        dim: usize,
    },
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("time {t} is outside the trajectory (last step {last})")]
    TimeOutOfRange { t: usize, last: usize },
    #[error("empty evaluation window at t={t}: the formula looks past the horizon T={horizon}")]
    EmptyWindow { t: usize, horizon: usize },
    #[error("csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for StlError {
    fn from(e: csv::Error) -> Self {
        StlError::Csv(e.to_string())
    }
}
