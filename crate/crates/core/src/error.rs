use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, FdiError>;

#[derive(Debug, Error)]
pub enum FdiError {
    #[error("config error in {path}: {message}")]
    Config { path: String, message: String },

    #[error("scenario parse error in {file}{}: {message}", .line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Parse {
        file: PathBuf,
        line: Option<usize>,
        message: String,
    },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("degenerate boundary condition at endpoint {endpoint}: (m, n) = (0, 0)")]
    DegenerateBoundary { endpoint: usize },

    #[error("complex slow spectrum: eigenvalue {index} = {re} + {im}i")]
    ComplexSlowSpectrum { index: usize, re: f64, im: f64 },

    #[error("fast complement unstable: Re(lambda_{index}) = {value} >= 0")]
    FastComplementUnstable { index: usize, value: f64 },

    #[error("simulation diverged at t = {t}: |x| = {value}")]
    SimulationDiverged { t: f64, value: f64 },

    #[error("reaction domain violated at t = {t}, z = {z}: x = {x} <= {limit}")]
    ReactionDomain { t: f64, z: f64, x: f64, limit: f64 },

    #[error("identifier diverged (reduce Gamma or dt){}", context_suffix(.context))]
    IdentifierDiverged { context: String },

    #[error("estimator diverged: {0}")]
    EstimatorDiverged(String),

    #[error("averaging window [{t1}, {t2}] outside history [{start}, {end}]")]
    WindowOutsideHistory { t1: f64, t2: f64, start: f64, end: f64 },

    #[error("fault isolation requested without a prior detection")]
    NotDetected,

    #[error("constant threshold requested for a non-constant similarity bound")]
    NonConstantBound,

    #[error("weight file header mismatch: {}", .fields.join(", "))]
    HeaderMismatch { fields: Vec<String> },

    #[error("weight file format error: {0}")]
    WeightFormat(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn context_suffix(context: &str) -> String {
    if context.is_empty() {
        String::new()
    } else {
        format!(" [{context}]")
    }
}

impl FdiError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        FdiError::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FdiError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by invalid user configuration.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            FdiError::Config { .. }
                | FdiError::Parse { .. }
                | FdiError::HeaderMismatch { .. }
                | FdiError::DegenerateBoundary { .. }
                | FdiError::Dimension { .. }
                | FdiError::Invalid(_)
        )
    }

    /// True for numerical blow-ups during integration.
    pub fn is_divergence(&self) -> bool {
        matches!(
            self,
            FdiError::SimulationDiverged { .. }
                | FdiError::ReactionDomain { .. }
                | FdiError::IdentifierDiverged { .. }
                | FdiError::EstimatorDiverged(_)
        )
    }
}
