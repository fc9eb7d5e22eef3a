//! Solver-agnostic MILP representation and solvers.
//!
//! [`MilpModel`] stores variables with bounds and binary flags, sparse
//! constraint rows, and a linear minimization objective. On top of it:
//! [`lp_relax_solve`] (bounded-variable revised simplex),
//! [`branch_and_bound`], the exhaustive [`enumerate_solve`] oracle,
//! an MPS writer/reader, and a subprocess backend for external solvers.

mod branch_bound;
mod enumerate;
mod external;
mod model;
mod mps;
mod simplex;

pub use branch_bound::{
    branch_and_bound, solve_complementarity_fastpath, BnbOptions, MipSolution, MipStatus,
    TracePoint,
};
pub use enumerate::enumerate_solve;
pub use external::solve_external;
pub use model::{MilpModel, Row, Sense, Variable};
pub use mps::{parse_mps, parse_mps_str, write_mps, write_mps_string};
pub use simplex::{lp_relax_solve, solve_lp_with_overrides, LpSolution, LpStatus};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MilpError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("numerical failure in LP solve: {0}")]
    NumericalFailure(String),
    #[error("model has {0} binaries, enumeration is capped at {max}", max = enumerate::MAX_ENUM_BINARIES)]
    TooManyBinaries(usize),
    #[error("search limits reached with no feasible incumbent")]
    NoFeasibleFound,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("external backend failed: {0}")]
    BackendFailure(String),
    #[error("parse error: {0}")]
    Parse(String),
}
