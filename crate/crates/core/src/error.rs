use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("capability: {0}")]
    Capability(String),

    /// Newton failed to converge; the numerical analogue of leaving the small-data ball.
    #[error("small-data regime left at step {step} (t = {t:.4}): residual {residual:.3e}")]
    SmallData { step: usize, t: f64, residual: f64 },

    #[error("linear solver: {0}")]
    Solver(String),

    #[error("range: {0}")]
    Range(String),

    #[error("refused: {0}")]
    Refused(String),

    #[error("rank-deficient sample set: rank {rank}, null-space dimension {nullity}")]
    RankDeficient { rank: usize, nullity: usize },

    #[error("stagnation: {0}")]
    Stagnation(String),

    #[error("solve at corner {corner:?} failed: {source}")]
    Corner {
        corner: Vec<u8>,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
