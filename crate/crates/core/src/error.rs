use thiserror::Error;

/// Errors raised by path construction, rough integration, solvers and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value in {what} at sample {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("partition point t={time} is not on the master grid")]
    PartitionNotInGrid { time: f64 },

    #[error("singular input at t={time}: {detail}")]
    Singular { time: f64, detail: String },

    #[error("determinant floor violated at t={time} (state {state:?}): |det| = {det:e} < {floor:e}")]
    DetFloor {
        time: f64,
        state: Vec<f64>,
        det: f64,
        floor: f64,
    },

    #[error("state diverged at step {step} (t={time})")]
    Diverged { step: usize, time: f64 },

    #[error("positivity lost at t={time}")]
    Positivity { time: f64 },

    #[error("bracket jump check failed at sample {index}: {detail}")]
    BracketJump { index: usize, detail: String },

    #[error("insufficient refinement: master level {master} must be at least {required}")]
    InsufficientRefinement { master: u32, required: u32 },

    #[error("unknown kind: {0}")]
    UnknownKind(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Tagged {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wraps the error with a context label such as a sweep point tag.
    pub fn tagged(self, context: impl Into<String>) -> Self {
        Error::Tagged {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
