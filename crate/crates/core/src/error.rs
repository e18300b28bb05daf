use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix entries must be finite: found {value} at ({row}, {col})")]
    NonFinite { row: usize, col: usize, value: f64 },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("SVD failed to converge for a {rows}x{cols} matrix")]
    SvdNonConvergence { rows: usize, cols: usize },

    #[error("scaled condition number is undefined for the all-zero matrix")]
    ZeroMatrix,

    #[error("rank {rank} out of range for a {rows}x{cols} matrix")]
    RankOutOfRange {
        rank: usize,
        rows: usize,
        cols: usize,
    },

    #[error("empty input in {0}")]
    EmptyInput(&'static str),

    #[error("row {0} of the system has zero norm; its projection is undefined")]
    ZeroRow(usize),

    #[error("index out of range: {context} {index} not in [0, {len})")]
    IndexOutOfRange {
        context: &'static str,
        index: usize,
        len: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unsupported record format: {0}")]
    RecordFormat(String),

    #[error("i/o error while {context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit code for the CLI: 1 for configuration problems, 2 for
    /// numerical or runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
