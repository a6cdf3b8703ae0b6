use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("SVD did not converge for a {rows}x{cols} matrix")]
    SvdFailure { rows: usize, cols: usize },

    #[error("numerical rank is {found}, expected {expected}")]
    RankMismatch { expected: usize, found: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix `{0}` contains non-finite entries")]
    NonFinite(&'static str),

    #[error("affine constraint ZΘ = X is inconsistent (relative residual floor {0:.3e})")]
    Infeasible(f64),

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dims(what: impl Into<String>) -> Self {
        Error::DimensionMismatch(what.into())
    }

    pub(crate) fn invalid(what: impl Into<String>) -> Self {
        Error::InvalidArgument(what.into())
    }

    /// True for failures of the numerical machinery itself (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SvdFailure { .. } | Error::NonFinite(_) | Error::Infeasible(_)
        )
    }
}
