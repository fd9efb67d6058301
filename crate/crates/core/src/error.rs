use std::path::PathBuf;

use thiserror::Error;

use crate::domain::PlanViolation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("move #{index} ({from} -> {to}, count {count}) references a region outside 0..{n}")]
    MoveOutOfRange {
        index: usize,
        from: usize,
        to: usize,
        count: i64,
        n: usize,
    },

    #[error("structural error: {0}")]
    Structure(String),

    #[error("missing mandatory column `{0}`")]
    MissingColumn(String),

    #[error("cannot read {}: {source}", path.display())]
    Unreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("insufficient history: no training day covers slot-of-day {0}")]
    InsufficientHistory(u32),

    #[error("plan rejected with {} violation(s): {}", .0.len(), summarize(.0))]
    InvalidPlan(Vec<PlanViolation>),

    #[error("schedule error: {0}")]
    Schedule(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

fn summarize(violations: &[PlanViolation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
