//! Arc-search infeasible interior-point methods for smooth nonlinear
//! programs
//!
//! ```text
//! min f(x)  s.t.  h(x) = 0,  g(x) >= 0
//! ```
//!
//! Each iteration factorizes the KKT Jacobian once, solves for the first and
//! second derivatives of the central path, and searches along the ellipse
//! they define instead of a straight line.

pub mod arc;
pub mod kkt;
pub mod linsys;
pub mod model;
pub mod problems;
pub mod solver;
pub mod stepsize;
pub mod text;

pub use arc::RhsMode;
pub use kkt::Iterate;
pub use model::NlpProblem;
pub use problems::{get_problem, BenchmarkEntry};
pub use solver::{init_check, solve, solve_observed, SolveReport, SolveStatus, SolverConfig, StartPoint, Variant};
