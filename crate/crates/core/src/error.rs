use std::path::PathBuf;

use thiserror::Error;

use crate::registry::PhysicianId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("covariance of component {component} is not positive definite")]
    NotPositiveDefinite { component: usize },

    #[error("empty feature set")]
    EmptyFeatureSet,

    #[error("not enough data: {points} points for {components} components")]
    NotEnoughData { points: usize, components: usize },

    #[error("degenerate training data: dimension {dimension} has zero variance")]
    DegenerateData { dimension: usize },

    #[error("ill-posed quotient score: |log p(X|cluster)| = {0:e} is below 1e-300")]
    IllPosedQuotient(f64),

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("non-finite value in field `{field}` of patient `{patient}`")]
    NonFiniteField { patient: String, field: String },

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("invalid population: {0}")]
    InvalidPopulation(String),

    #[error("invalid router config: {0}")]
    InvalidRouterConfig(String),

    #[error(transparent)]
    Registry(#[from] RegistryError),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}, line {line}: {source}")]
    JsonLine {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("cluster {0} has no physicians")]
    EmptyCluster(usize),

    #[error("no such cluster: {0}")]
    UnknownCluster(usize),

    #[error("no such physician: {0}")]
    UnknownPhysician(PhysicianId),

    #[error("cluster {0} is saturated: every physician is at capacity")]
    Saturated(usize),

    #[error("patient `{0}` is already on an accepted list")]
    DuplicatePatient(String),

    #[error("patient `{patient}` is not on the accepted list of {physician}")]
    PatientNotFound {
        physician: PhysicianId,
        patient: String,
    },

    #[error("snapshot does not cover cluster {0}")]
    SnapshotMismatch(usize),

    #[error("invalid registry layout: {0}")]
    InvalidLayout(String),

    #[error("mutation log replay diverged at entry {0}")]
    ReplayDiverged(usize),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
