use thiserror::Error;

use crate::model::{State, Station};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("parameter {name} = {value} is not allowed (rates must be finite, mu and h strictly positive)")]
    NonPositiveRate { name: &'static str, value: f64 },
    #[error("collaboration bound violated in station {station}: {reason}")]
    CollaborationBoundViolated { station: Station, reason: String },
    #[error("xi{station} = {xi} but station {station} has no dedicated server to collaborate with")]
    OrphanCollaboration { station: Station, xi: f64 },
    #[error("no action exists in the empty state")]
    EmptySystem,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("n_max must be at least {min}, got {got}")]
    DomainTooSmall { min: u32, got: u32 },
    #[error("value at {0} is needed before it has been computed")]
    DependencyMissing(State),
    #[error("policy action at {state} (rho1 = {rho1}, rho2 = {rho2}) is not feasible")]
    InfeasibleAction { state: State, rho1: f64, rho2: f64 },
    #[error("policy has no action for state {0}")]
    MissingAction(State),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StructureError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("decision functions need n_max >= 2, got {0}")]
    DomainTooSmall(u32),
    #[error("assignment is not threshold shaped in x2 at x1 = {x1}: {detail}")]
    NotThresholdShaped { x1: u32, witness: State, detail: String },
    #[error("idling thresholds require h1 < h2 and a dedicated Station 1 server")]
    IdlingRegimeRequired,
    #[error("switching curves require a non-idling regime (h1 >= h2 or nu1 = 0)")]
    NonIdlingRegimeRequired,
    #[error("identity {0} does not apply to this instance: {1}")]
    HypothesisNotMet(&'static str, String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Structure(#[from] StructureError),
    #[error("regime {regime} not satisfied after {tries} samples")]
    RegimeUnsatisfiable { regime: String, tries: u32 },
    #[error("unknown regime {0}")]
    UnknownRegime(String),
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error("golden mismatch: {0}")]
    GoldenMismatch(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("policy has zero total rate at reachable state {0}")]
    DeadPolicy(State),
    #[error("replications must be at least 1")]
    NoReplications,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("policy space has {size} policies (limit {limit})")]
    SearchSpaceTooLarge { size: f64, limit: f64 },
    #[error("value iteration did not reach span {tol} within {max_iterations} sweeps")]
    MaxIterationsExceeded { tol: f64, max_iterations: u64 },
    #[error("tolerance must be positive")]
    BadTolerance,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IoError {
    #[error("{0}")]
    Io(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error("json: {0}")]
    Json(String),
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

impl From<std::io::Error> for IoError {
    fn from(e: std::io::Error) -> Self {
        IoError::Io(e.to_string())
    }
}

impl From<csv::Error> for IoError {
    fn from(e: csv::Error) -> Self {
        IoError::Csv(e.to_string())
    }
}

impl From<serde_json::Error> for IoError {
    fn from(e: serde_json::Error) -> Self {
        IoError::Json(e.to_string())
    }
}
