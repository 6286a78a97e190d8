//! Optimal allocation of a flexible server in a two-station tandem clearing
//! system with dedicated servers and partially collaborative service.
//!
//! The [`solver`] computes exact minimal expected holding costs by backward
//! recursion; [`structure`] derives decision functions and checks the
//! threshold structure of the resulting policies; [`oracle`] and
//! [`simulate`] provide independent cross-checks; [`experiments`] runs
//! seeded batch studies over random instances.

pub mod error;
pub mod experiments;
pub mod io;
pub mod model;
pub mod oracle;
pub mod simulate;
pub mod solver;
pub mod structure;

pub use error::{ExperimentError, IoError, ModelError, OracleError, SimError, SolveError, StructureError};
pub use model::{feasible_allocations, Allocation, FlexAssignment, ServerMode, State, Station, SystemParams};
pub use solver::{
    evaluate_policy, evaluate_with, q_value, solve, solve_with, Policy, SolveOptions, TieBreak, Triangle, ValueTable,
};
