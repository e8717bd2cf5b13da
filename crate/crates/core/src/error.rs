use thiserror::Error;

use crate::solver::SolveReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    Params(String),

    #[error("degenerate box: {0}")]
    Degenerate(String),

    #[error("grid size error: {0}")]
    Size(String),

    #[error("parse error at position {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("evaluation error at position {pos}: {msg}")]
    Eval { pos: usize, msg: String },

    #[error("kernel violates the ellipticity bounds: {0}")]
    Ellipticity(String),

    #[error("grid mismatch: expected {expected} nodes, got {got}")]
    GridMismatch { expected: usize, got: usize },

    #[error("node {0} is not in the domain")]
    NotInterior(usize),

    #[error("infeasible obstacle problem: {0}")]
    Infeasible(String),

    #[error("solver did not converge after {} sweeps (last sweep change {:.3e}, residual {:.3e})",
        .0.iterations, .0.final_sweep_delta, .0.residual_sup)]
    NotConverged(Box<SolveReport>),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("insufficient resolution: {0}")]
    Resolution(String),

    #[error("{0}")]
    Config(String),
}

impl Error {
    /// Short machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Params(_) => "params",
            Error::Degenerate(_) => "degenerate",
            Error::Size(_) => "size",
            Error::Parse { .. } => "parse",
            Error::Eval { .. } => "eval",
            Error::Ellipticity(_) => "ellipticity",
            Error::GridMismatch { .. } => "grid_mismatch",
            Error::NotInterior(_) => "not_interior",
            Error::Infeasible(_) => "infeasible",
            Error::NotConverged(_) => "not_converged",
            Error::Precondition(_) => "precondition",
            Error::Resolution(_) => "resolution",
            Error::Config(_) => "config",
        }
    }

    /// Process exit code: 3 for non-convergence, 4 for resolution failures,
    /// 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NotConverged(_) => 3,
            Error::Resolution(_) => 4,
            _ => 2,
        }
    }
}
