use thiserror::Error;

use crate::lottery::ApproxFeasibilityCert;

#[derive(Debug, Error)]
pub enum Error {
    /// Unknown ids, mismatched dimensions and similar shape problems.
    #[error("structural error: {0}")]
    Structure(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("parse error: {0}")]
    Parse(String),

    /// The fractional relaxation admits no feasible assignment.
    #[error("instance is infeasible: no fractional assignment satisfies every quota")]
    InfeasibleInstance,

    /// A caller broke an operation's precondition.
    #[error("contract violated: {0}")]
    Contract(String),

    /// Something the mechanisms guarantee did not hold. Always an engine bug.
    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("instance is not laminar")]
    NotLaminar,

    #[error("no feasible flow exists")]
    FlowInfeasible,

    #[error("search too large: {0}")]
    SearchTooLarge(String),

    #[error("allocation is not approximately feasible: {0:?}")]
    ApproxFeasibilityViolated(Box<ApproxFeasibilityCert>),

    #[error("no feasible instance generated within {0} attempts")]
    GenerationFailed(usize),

    #[error(transparent)]
    Lp(#[from] crate::lp::LpError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
