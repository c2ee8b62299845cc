use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("representation error: {0}")]
    Representation(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not positive semidefinite (eigenvalue {eigenvalue:.6e})")]
    NotPsd { eigenvalue: f64 },

    #[error("invalid operator basis: {0}")]
    InvalidBasis(String),

    #[error("operator bases differ ({left} vs {right}); change basis explicitly first")]
    BasisMismatch { left: String, right: String },

    #[error("ill-conditioned state basis (condition number {0:.3e})")]
    IllConditioned(f64),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("process matrix has zero trace")]
    ZeroTrace,

    #[error("process matrix trace {0} is not 1; use the non trace-preserving fidelity")]
    TraceNotUnit(f64),

    #[error("analyzer set is not informationally complete: {0}")]
    IncompleteAnalyzers(String),

    #[error("prepared input states do not span the operator space (rank {rank} < {needed})")]
    RankDeficientInputs { rank: usize, needed: usize },

    #[error("count table is malformed: {0}")]
    TableShape(String),

    #[error("output for input {0:?} has zero trace and cannot be normalized")]
    DarkInput(String),

    #[error("probability operator has eigenvalue {0:.6} above 1")]
    Unphysical(f64),

    #[error("fit did not improve on its seed (seed objective {seed}, best {best})")]
    DegenerateFit { seed: f64, best: f64 },

    #[error("penalty continuation exhausted after {stages} stages; constraint residual {residual:.3e}")]
    PenaltyExhausted { stages: usize, residual: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors caused by bad caller-supplied values rather than data or
    /// numerics.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::InvalidParameter(_) | Error::BasisMismatch { .. })
    }

    /// Errors caused by malformed or inconsistent input data.
    pub fn is_data(&self) -> bool {
        matches!(
            self,
            Error::TableShape(_)
                | Error::Json(_)
                | Error::Representation(_)
                | Error::DimensionMismatch { .. }
                | Error::InvalidBasis(_)
                | Error::IncompleteAnalyzers(_)
                | Error::DarkInput(_)
                | Error::Unphysical(_)
                | Error::TraceNotUnit(_)
        )
    }
}
