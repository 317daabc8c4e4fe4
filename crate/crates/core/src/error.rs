use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("unknown constellation `{0}`")]
    UnknownConstellation(String),

    /// Too many effective-symbol entries fell under the division guard.
    #[error("degenerate effective symbols: {erased} of {total} entries erased")]
    DegenerateSymbols { erased: usize, total: usize },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    /// The beampattern requirement exceeds what the power budget can deliver.
    #[error("sensing gain requirement {required:.4e} exceeds the achievable maximum {max_achievable:.4e}")]
    GainInfeasible { required: f64, max_achievable: f64 },

    #[error("CFAR window {window} does not fit a {rows}x{cols} map")]
    Window { window: usize, rows: usize, cols: usize },

    #[error("parse error at `{field}`: {msg}")]
    Parse { field: String, msg: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
