use thiserror::Error;

/// Errors raised by scene construction, channel synthesis, beamforming and
/// the analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("split ratio {0} outside (0, 0.5)")]
    InvalidSplit(f64),

    #[error("panel {panel} would receive {count} elements")]
    EmptyPanel { panel: &'static str, count: i64 },

    #[error("element grid {h}x{v} does not hold {count} elements")]
    GridMismatch { h: usize, v: usize, count: usize },

    #[error("points coincide; direction undefined")]
    CoincidentPoints,

    #[error("direction is not unit length (norm {0})")]
    NonUnitDirection(f64),

    #[error("the direct S-D link is not modeled")]
    DirectLinkExcluded,

    #[error("link endpoints must differ")]
    SelfLink,

    #[error("zero-magnitude channel entry at index {0}; phase undefined")]
    ZeroMagnitude(usize),

    #[error("matrix is not rank one (relative second singular value {0:e})")]
    NotRankOne(f64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("exhaustive search over {size} profiles exceeds the guard of {limit}")]
    SearchTooLarge { size: f64, limit: u64 },

    #[error("negative Rician factor {0}")]
    NegativeRicianFactor(f64),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
