use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("exact diagonalization supports at most {cap} atoms (requested {requested}; 3^{requested} basis states would need about {bytes} bytes per state vector)")]
    TooManyAtoms {
        requested: usize,
        cap: usize,
        bytes: u128,
    },

    #[error("fit did not converge after {iterations} iterations (final residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("fitted curve has no interior minimum: {0}")]
    NoInteriorMinimum(String),

    #[error("degenerate problem: {0}")]
    Degenerate(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for errors caused by bad user input rather than numerics.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::TooManyAtoms { .. }
                | Error::Config { .. }
                | Error::Csv(_)
                | Error::Json(_)
                | Error::Io(_)
        )
    }
}
