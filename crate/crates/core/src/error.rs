use std::path::PathBuf;

use thiserror::Error;

use crate::model::Species;

/// Hypothesis failures found while validating a model against its initial data.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum HypothesisError {
    #[error("H1 (ellipticity) violated for d_{species}: bounds lo={lo}, hi={hi} must satisfy 0 < lo <= hi")]
    Ellipticity { species: Species, lo: f64, hi: f64 },
    #[error("H2 (non-negative initial data) violated: u_{species}0 = {value} at cell {cell}")]
    NegativeInitial { species: Species, cell: usize, value: f64 },
    #[error("H4 violated: alpha_11^2 < 4 alpha_21 mu_C / K_C fails, margin = {margin}")]
    ReactionBalance { margin: f64 },
    #[error("taxis smallness violated: (chi_11 + chi_21)^2 < 4 d_C^(0) d_N^(0) fails, margin = {margin}")]
    TaxisSmallness { margin: f64 },
    #[error("coefficient {name} = {value} is out of range ({requirement})")]
    Coefficient { name: &'static str, value: f64, requirement: &'static str },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("initialization error: non-finite value {value} at cell {cell}")]
    Initialization { cell: usize, value: f64 },
    #[error(transparent)]
    Hypothesis(#[from] HypothesisError),
    #[error("d_{species}({x:?}, t={t}) = {value} lies outside the declared bounds [{lo}, {hi}]")]
    DiffusionOutOfBounds { species: Species, x: [f64; 3], t: f64, value: f64, lo: f64, hi: f64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("conjugate gradient did not converge for {species} after {iterations} iterations (relative residual {residual:e})")]
    LinearSolver { species: Species, iterations: usize, residual: f64 },
    #[error("Picard iteration failed to contract: residual history {history:?}")]
    NonContraction { history: Vec<f64> },
    #[error("non-finite value produced for {species} at cell {cell}")]
    NonFinite { species: Species, cell: usize },
    #[error("diagnostic error: {0}")]
    Diagnostic(String),
    #[error("snapshot format error: {0}")]
    Format(String),
    #[error("unsupported snapshot version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },
    #[error("harness misuse: {0}")]
    Harness(String),
    #[error("oracle failure: {0}")]
    Oracle(String),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
