use thiserror::Error;

/// Errors raised by the construction and measurement routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),

    #[error("no Whitney cube of level <= {max_level} fits inside the domain")]
    EmptyDecomposition { max_level: u32 },

    #[error("cube id {id} out of range (decomposition has {len} cubes)")]
    IdOutOfRange { id: usize, len: usize },

    #[error("center ({x}, {y}) does not lie in any Whitney cube")]
    CenterNotCovered { x: f64, y: f64 },

    #[error("face-neighbor graph is disconnected; component sizes {component_sizes:?}")]
    Disconnected { component_sizes: Vec<usize> },

    #[error("structure error: {0}")]
    Structure(String),

    #[error("covering estimate is degenerate: {0}")]
    DegenerateFit(String),

    #[error("empty mask: no grid cell lies in the domain")]
    EmptyMask,

    #[error("total weight is zero")]
    ZeroWeight,

    #[error("input does not have zero mean: |mean| = {mean:e}, allowed {allowed:e}")]
    NonZeroMean { mean: f64, allowed: f64 },

    #[error("cell {cell} is not covered by exactly one Whitney cube")]
    CellAssignment { cell: usize },

    #[error("zero denominator in ratio")]
    ZeroDenominator,

    #[error("incompatible local data: {0}")]
    Compatibility(String),

    #[error("iterative solver stagnated after {iterations} iterations, relative residual {residual:e}")]
    Convergence { iterations: usize, residual: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
