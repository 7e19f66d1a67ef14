//! Crate-wide error type.

use crate::trainer::RoundRecord;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid quality pair (q_l={q_l}, q_h={q_h}): {reason}")]
    InvalidQuality { q_l: f64, q_h: f64, reason: &'static str },

    #[error("invalid price quote (p_l={p_l}, p_h={p_h}): prices must satisfy 0 <= p_l <= p_h")]
    InvalidPrices { p_l: f64, p_h: f64 },

    /// Raw demand formulas divide by `q_l` and `q_h - q_l`; callers must fall
    /// back to the degenerate equilibrium when either is below tolerance.
    #[error("degenerate qualities for raw demands (q_l={q_l}, q_h={q_h})")]
    DegenerateQualities { q_l: f64, q_h: f64 },

    #[error("quality-cap function undefined for a={a}, b={b}")]
    CapDomain { a: f64, b: f64 },

    #[error("negative discriminant ({0}) in revenue-preservation root")]
    NegativeDiscriminant(f64),

    #[error("no quality satisfies both no-revenue-loss constraints (u_l0={u_l0}, u_h0={u_h0})")]
    InfeasibleDisagreement { u_l0: f64, u_h0: f64 },

    #[error("invalid loss-model target: {0}")]
    InvalidTarget(String),

    /// A scheme that is supposed to be defection-free produced a revenue drop.
    /// Carries the trace so the failure can be dumped and inspected.
    #[error("defection by the {firm} firm at round {round}")]
    DefectionDetected {
        round: usize,
        firm: &'static str,
        records: Box<Vec<RoundRecord>>,
    },

    #[error("invariant violated{}: {what}", round.map(|r| format!(" at round {r}")).unwrap_or_default())]
    InvariantViolation { round: Option<usize>, what: String },

    #[error("owner loss {value} left [0,1] at round {round}")]
    LossOutOfRange { round: usize, value: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("trace parse error: {0}")]
    TraceParse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
