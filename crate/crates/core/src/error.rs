use thiserror::Error;

/// Everything that can go wrong between data generation and the validation report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {index} = {pivot:e})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate cross-tabulation cell (p00={p00}, p01={p01}, p10={p10}, p11={p11})")]
    DegenerateCell { p00: f64, p01: f64, p10: f64, p11: f64 },

    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("imputation target x{target} has no observed values")]
    EmptyTrainingSet { target: usize },

    #[error("Cox information matrix is singular")]
    SingularInformation,
    #[error("Cox model did not converge: {0}")]
    NonConvergence(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("censoring survival estimate is zero at t={time}")]
    ZeroWeight { time: f64 },
    #[error("no cases observed before the horizon")]
    NoCases,
    #[error("no controls observed beyond the horizon")]
    NoControls,
    #[error("apparent performance equals the no-information value")]
    DegenerateNoInformation,

    #[error("analysis model could not be fitted: {0}")]
    AnalysisModelFailure(Box<Error>),
    #[error("all {0} bootstrap iterations failed")]
    AllBootstrapsFailed(usize),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// True for errors that mean the survival model itself could not be fitted
    /// or scored, as opposed to bad input.
    pub fn is_model_failure(&self) -> bool {
        matches!(
            self,
            Error::SingularInformation
                | Error::NonConvergence(_)
                | Error::InsufficientData(_)
                | Error::ZeroWeight { .. }
                | Error::NoCases
                | Error::NoControls
                | Error::AnalysisModelFailure(_)
                | Error::AllBootstrapsFailed(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
