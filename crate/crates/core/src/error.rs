use crate::imageops::Shape;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: Shape, actual: Shape },

    /// The attack mask selects no pixel, so every `u` direction is zero.
    #[error("empty attack region")]
    EmptyAttackRegion,

    #[error("degenerate v direction")]
    DegenerateDirection,

    /// The anchor sits on the box face in the direction of `u_hat`.
    #[error("projection collapsed")]
    ProjectionCollapsed,

    #[error("v collapsed")]
    VCollapsed,

    #[error("query budget of {budget} exhausted")]
    BudgetExceeded { budget: u64 },

    #[error("oracle unavailable: {0}")]
    OracleUnavailable(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("campaign failed: {failed} of {total} images failed")]
    CampaignFailed { failed: usize, total: usize },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Errors that end an attack early but still leave a usable outcome.
    pub fn is_oracle_stop(&self) -> bool {
        matches!(self, Error::BudgetExceeded { .. } | Error::OracleUnavailable(_))
    }
}
