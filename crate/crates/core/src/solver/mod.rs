//! Dispatch formulations and the quadratic-programming kernel beneath them.

pub mod dispatch;
pub mod qp;

pub use dispatch::{
    pfr_constraints, solve_ccopf, solve_ccopf_pfr, solve_dcopf, ConstraintValue, Cut, DispatchSolution, Formulation,
    PfrOptions, Status,
};
pub use qp::{solve_qp, QpProblem, QpSolution, QpStatus};
