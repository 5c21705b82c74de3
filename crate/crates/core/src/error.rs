use thiserror::Error;

use crate::init::ParticleState;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the admissible domain of an operation.
    #[error("rejected input: {0}")]
    InvalidInput(String),

    /// A documented precondition of an operation does not hold.
    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("quadrature did not converge on cell {cell} = [{lo}, {hi}]")]
    Quadrature { cell: usize, lo: f64, hi: f64 },

    /// Particles crossed during a step; the time step cap was not respected.
    #[error("particle ordering violated at t = {time} between particles {left} and {left_plus_one}", left_plus_one = .left + 1)]
    Ordering { time: f64, left: usize },

    #[error("non-finite value encountered at t = {time}")]
    NonFinite {
        time: f64,
        snapshot: Box<ParticleState>,
    },

    /// A collision removed a cell carrying more than the admissible mass.
    #[error("collision at t = {time} discarded mass {discarded} (limit {limit})")]
    CollisionMassLoss {
        time: f64,
        discarded: f64,
        limit: f64,
    },

    #[error("evaluation outside validity window: {0}")]
    OutsideWindow(String),

    #[error("invariant audit failed for run {run}: {detail}")]
    AuditFailed { run: String, detail: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
