use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unsupported domain: {0}")]
    Domain(String),
    #[error("input too large: {0}")]
    TooLarge(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("point {0} is a dyadic endpoint at the working resolution")]
    DyadicEndpoint(f64),
    #[error("linearization is ambiguous at grid point {0}")]
    Ambiguous(usize),
    #[error("distance oracle failed: {0}")]
    Oracle(String),
    #[error("logarithm outside the principal branch: {0}")]
    BranchCut(String),
    #[error("postcondition violated: {0}")]
    Postcondition(String),
}

impl Error {
    /// Stable machine-readable tag for error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Domain(_) => "domain",
            Error::TooLarge(_) => "too_large",
            Error::Degenerate(_) => "degenerate",
            Error::DyadicEndpoint(_) => "dyadic_endpoint",
            Error::Ambiguous(_) => "ambiguous",
            Error::Oracle(_) => "oracle",
            Error::BranchCut(_) => "branch_cut",
            Error::Postcondition(_) => "postcondition",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
