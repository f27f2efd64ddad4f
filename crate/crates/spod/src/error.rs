use thiserror::Error;

/// Errors produced by construction, validation, and the numerical kernels.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("matrix shape {rows}x{cols} does not match expected {expected_rows}x{expected_cols}")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        expected_rows: usize,
        expected_cols: usize,
    },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("path length {got} does not match snapshot count {expected}")]
    PathLength { got: usize, expected: usize },

    #[error("exact shift mode requires integer cell offsets; column {col} has offset {cells} cells")]
    NonIntegerShift { col: usize, cells: f64 },

    #[error("rank {rank} out of range for a {rows}x{cols} frame")]
    RankOutOfRange { rank: usize, rows: usize, cols: usize },

    #[error("decomposition has no frames")]
    EmptyDecomposition,

    #[error("decomposition has {frames} frames but {expected} {what}")]
    FrameCountMismatch {
        frames: usize,
        expected: usize,
        what: &'static str,
    },

    #[error("frame {frame} has zero Frobenius norm")]
    ZeroNormFrame { frame: usize },

    #[error("full spectrum requested for {rows}x{cols} matrix, above the cap of {cap}")]
    SpectrumCapExceeded { rows: usize, cols: usize, cap: usize },

    #[error("singular value decomposition did not converge")]
    SvdFailed,

    #[error("front detection failed: {0}")]
    DetectionFailed(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
