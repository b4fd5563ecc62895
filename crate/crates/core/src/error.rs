use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is singular: |det| = {det:e} is below the threshold {threshold:e}")]
    SingularMatrix { det: f64, threshold: f64 },

    #[error("matrix is not Hermitian: anti-Hermitian part reaches {0:e}")]
    NotHermitian(f64),

    #[error("matrix has a negative eigenvalue {0:e}")]
    NegativeEigenvalue(f64),

    #[error("parameters too close to an exceptional point: |eta - D0| = {0:e}")]
    TooCloseToEp(f64),

    #[error("no sign change of the coalescence residual inside the search box")]
    NoBracket,

    #[error("measurement matrix is ill-conditioned: inversion residual {0:e}")]
    IllConditioned(f64),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("compiled sequence deviates from its target by {0:e}")]
    ConventionMismatch(f64),

    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by a numerical guard (EP proximity, singular or
    /// ill-conditioned matrices) as opposed to bad input or I/O.
    pub fn is_numerical_guard(&self) -> bool {
        matches!(
            self,
            Error::SingularMatrix { .. }
                | Error::TooCloseToEp(_)
                | Error::IllConditioned(_)
                | Error::NegativeEigenvalue(_)
                | Error::NotHermitian(_)
                | Error::NoBracket
                | Error::ConventionMismatch(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
