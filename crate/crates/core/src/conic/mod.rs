//! Convex per-iteration subproblem: modeling layer, problem assembly,
//! rank-one recovery and the extraction-ratio line search.

pub mod program;
pub mod randomization;
pub mod ratio;
pub mod subproblem;

pub use program::{ConicProgram, ConicSolution, SolverOptions};
pub use randomization::{gaussian_randomization, principal_beam};
pub use ratio::{bisect_extraction_ratio, RATIO_TOL};
pub use subproblem::{
    build_subproblem, mmse_auxiliary_update, solve_subproblem, surrogate_objective, true_objective, Covariances,
    Instance, Iterate, Layout, ObjectiveParts, SubproblemParams, SubproblemSolution,
};
