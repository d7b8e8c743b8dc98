use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("class {class} has no examples in the evaluation split")]
    MissingClassSupport { class: usize },

    #[error("rank depth {requested} exceeds the {available} ranks stored in the log")]
    RankDepthExceeded { requested: usize, available: usize },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: bad schema: {message}")]
    Schema { path: PathBuf, message: String },

    #[error("invalid data: {0}")]
    Invalid(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("training diverged for model {model} at step {step} (loss = {loss})")]
    Divergence {
        model: usize,
        step: usize,
        loss: f64,
    },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("sample lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("sample of size {size} is too small; at least {min} values are required")]
    SampleTooSmall { size: usize, min: usize },

    #[error("sample contains a non-finite value")]
    NonFiniteInput,

    #[error("empty sample")]
    EmptySample,

    #[error("prediction logs cover different example sets")]
    ExampleSetMismatch,

    #[error("no votes to take a mode over")]
    EmptyVotes,

    #[error("PIE set is empty")]
    EmptyPieSet,

    #[error("pixelate needs a 2D feature layout (height x width)")]
    LayoutRequired,

    #[error("baseline accuracy must be positive, got {0}")]
    ZeroBaseline(f64),

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps the error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code: 2 for data or validation problems, 3 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Divergence { .. } | Error::NonFiniteInput => 3,
            _ => 2,
        }
    }
}
