use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad category of an [`Error`], used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("design matrix is rank deficient (condition number {condition:.3e}); drop or regularize features")]
    RankDeficient { condition: f64 },
    #[error("underdetermined system: n = {n} but {columns} fitted columns; use the sparse multi-site Lasso instead")]
    Underdetermined { n: usize, columns: usize },
    #[error("zero residual degrees of freedom: the fit interpolates the data, noise level is undefined")]
    DegenerateDf { beta_hat: Vec<f64> },
    #[error("confound covariance is singular (condition number {condition:.3e})")]
    SingularConfoundCovariance { condition: f64 },
    #[error("site covariance is singular or not positive definite: {0}")]
    SingularSiteCovariance(String),
    #[error("site {site} has zero estimated noise")]
    ZeroNoise { site: usize },
    #[error("incompatible summaries: {0}")]
    IncompatibleSummaries(String),
    #[error("series or root search did not converge: {0}")]
    NonConvergent(String),
    #[error("no site-active features found at any site")]
    EmptyActiveSets,
    #[error("sample split degenerate after {attempts} attempts: {reason}")]
    DegenerateSplit { attempts: usize, reason: String },
    #[error("shared support of size {support} leaves too few observations (min site n {min_n}, margin {margin}); raise lambda")]
    SupportTooLarge { support: usize, min_n: usize, margin: usize },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("checksum mismatch: stored {stored}, computed {computed}")]
    ChecksumMismatch { stored: String, computed: String },
    #[error("unsupported schema version {0}")]
    SchemaVersionUnsupported(String),
    #[error("invalid summary: {0}")]
    InvalidSummary(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::RankDeficient { .. }
            | Error::DegenerateDf { .. }
            | Error::SingularConfoundCovariance { .. }
            | Error::SingularSiteCovariance(_)
            | Error::ZeroNoise { .. }
            | Error::NonConvergent(_)
            | Error::DegenerateSplit { .. }
            | Error::SupportTooLarge { .. } => ErrorKind::Numerical,
            _ => ErrorKind::Data,
        }
    }
}
