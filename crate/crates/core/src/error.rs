use thiserror::Error;

use crate::lp::LpError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Lp(#[from] LpError),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Work with residual deadline zero was left unserved.
    #[error("deadline violation at slot {slot}: {shortfall} units of deadline-0 work unserved")]
    DeadlineViolation { slot: usize, shortfall: f64 },

    /// Cumulative demand exceeds what the fleet can execute.
    #[error("unschedulable instance: {0}")]
    Unschedulable(String),

    #[error("offline program infeasible, first violating slot {slot}: {detail}")]
    OfflineInfeasible { slot: usize, detail: String },

    /// A per-slot program of an online algorithm had no solution.
    #[error("internal consistency error at slot {slot}: {detail}")]
    Consistency { slot: usize, detail: String },

    #[error("schedule violates {constraint} at slot {slot}: {detail}")]
    ScheduleViolation {
        constraint: &'static str,
        slot: usize,
        detail: String,
    },

    #[error("horizon mismatch: {0} vs {1} slots")]
    HorizonMismatch(usize, usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
