//! Key-rate optimisation: constraint set, objective, Frank–Wolfe descent and
//! certified lower bound.

pub mod conic;
pub mod frank_wolfe;
pub mod objective;
pub mod problem;

pub use conic::{InteriorPoint, LinearSdp, LinearSdpSolver, SdpSolution, SolverStatus};
pub use frank_wolfe::{certify_lower_bound, solve_primal, solve_primal_with, FwConfig, LowerBoundCert, PrimalIterate};
pub use objective::{objective, objective_and_gradient, zeta, EPS_PERT};
pub use problem::{build_problem, partial_trace_b, KeyRateProblem, MomentBounds};
