use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("index error: {0}")]
    Index(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    /// The RDE state left the admissible region; `last_good` is the last node
    /// with a finite, in-bounds state.
    #[error("solver error after node {last_good}: {message}")]
    Solver { last_good: usize, message: String },

    #[error("optimizer error: {0}")]
    Optimizer(String),

    #[error("degenerate problem: {0}")]
    Degenerate(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Format(_) => 2,
            Error::InsufficientData(_) => 4,
            _ => 3,
        }
    }
}
