//! Error types shared across the crate.

use thiserror::Error;

/// Position-tagged failure while parsing a drift/noise expression.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("parse error at byte {position}: {message}")]
pub struct ParseError {
    pub position: usize,
    pub message: String,
}

/// Failure while evaluating an expression, tagged with the offending
/// subexpression in printed form.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{kind} in `{subexpr}`")]
pub struct EvalError {
    pub kind: EvalErrorKind,
    pub subexpr: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum EvalErrorKind {
    #[error("unbound variable")]
    UnboundVariable,
    #[error("division by zero")]
    DivisionByZero,
    #[error("domain error")]
    Domain,
    #[error("non-finite result")]
    NonFinite,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error(transparent)]
    Eval(#[from] EvalError),

    #[error("ill-formed scenario: {0}")]
    Scenario(String),

    #[error("simulation failed at step {step} (t = {time}): {message}")]
    Simulation {
        step: usize,
        time: f64,
        message: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate estimate: {0}")]
    Degenerate(String),

    #[error("infeasible specification: {0}")]
    Infeasible(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
