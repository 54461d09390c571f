use thiserror::Error;

/// Errors produced by validation, simulation, and I/O across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left}x{left} vs {right}x{right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("spin index {index} out of range for {n_spins} spins")]
    SpinIndexOutOfRange { index: usize, n_spins: usize },

    #[error("matrix is not Hermitian: max |H - H'| = {deviation:.3e}")]
    NotHermitian { deviation: f64 },

    #[error("matrix is not unitary: max |U'U - 1| = {deviation:.3e}")]
    NotUnitary { deviation: f64 },

    #[error("invalid molecule spec `{name}`: {reason}")]
    InvalidMolecule { name: String, reason: String },

    #[error("invalid protocol parameters: {0}")]
    InvalidParams(String),

    #[error("invalid field context: {0}")]
    InvalidField(String),

    #[error("invalid pulse sequence `{name}`: {reason}")]
    InvalidSequence { name: String, reason: String },

    #[error("config error in {path}: {reason}")]
    Config { path: String, reason: String },

    #[error("malformed CSV {path}: line {line}: {reason}")]
    Csv {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("unknown built-in `{0}`")]
    UnknownBuiltin(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
