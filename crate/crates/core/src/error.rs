use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("N*dt = {product} exceeds the 0.1 branching-step limit")]
    StepTooLarge { product: f64 },

    #[error("initial mass {mass} at density {density} rounds to zero particles")]
    ZeroParticles { mass: f64, density: u64 },

    #[error("operation requires {mode} mode")]
    WrongMode { mode: &'static str },

    #[error("bin width {requested} is not an integer multiple of the trajectory grid {grid}")]
    IncompatibleGrid { requested: f64, grid: f64 },

    #[error("profile has no support above threshold {threshold}")]
    NoSupport { threshold: f64 },

    #[error("empty window: {0}")]
    EmptyWindow(String),

    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("non-positive coordinate at point {index}: ({x}, {y})")]
    NonPositive { index: usize, x: f64, y: f64 },

    #[error("threshold 2^-{n} is below the mass resolution 1/{density}")]
    BelowResolution { n: u32, density: u64 },

    #[error("ladder never reached zero mass")]
    NoZeroLevel,

    #[error("shooting bracket [{lo}, {hi}] does not straddle the boundary value")]
    ShootingBracket { lo: f64, hi: f64 },

    #[error("{what} not settled by t_max = {t_max}")]
    NotSettled { what: &'static str, t_max: f64 },

    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
