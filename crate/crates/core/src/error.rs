use thiserror::Error;

/// Errors raised by pmx operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("system name clash: {0}")]
    NameClash(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("operator is not Hermitian (deviation {0:e})")]
    NotHermitian(f64),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("map is not completely positive (min eigenvalue {0:e})")]
    NotCp(f64),
    #[error("not a valid process matrix: {0}")]
    NotAProcess(String),
    #[error("invalid group: {0}")]
    InvalidGroup(String),
    #[error("solver failed: {0}")]
    SolverFailed(String),
    #[error("search failed: {0}")]
    SearchFailed(String),
    #[error("fixture corrupt: {0}")]
    FixtureCorrupt(String),
    #[error("imaginary residue {0:e} exceeds tolerance")]
    ImaginaryResidue(f64),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Shape(msg.into()))
}
