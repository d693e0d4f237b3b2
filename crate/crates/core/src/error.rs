use thiserror::Error;

use crate::transport::SolverResult;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("factor {factor}: distance {distance} is within the cut-locus guard {guard:e} of the antipode")]
    CutLocus {
        factor: usize,
        distance: f64,
        guard: f64,
    },

    #[error("factor {factor}: covector norm {norm} exceeds the c-exponential domain radius {limit}")]
    Domain { factor: usize, norm: f64, limit: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{what} did not converge within {iterations} iterations")]
    Convergence { what: String, iterations: usize },

    #[error("semi-discrete solver stalled after {iterations} iterations (max residual {max_residual:e})")]
    SolverStalled {
        iterations: usize,
        max_residual: f64,
        best: Box<SolverResult>,
    },

    #[error("degenerate body: {0}")]
    DegenerateBody(String),

    #[error("section escapes the chart: {0}")]
    SectionEscapesChart(String),

    #[error("precondition violated in {diagnostic}: {message}")]
    Precondition { diagnostic: String, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("{stage} stage: {source}")]
    Stage { stage: String, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn in_stage(self, stage: &str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage: stage.to_string(),
                source: Box::new(e),
            },
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn precondition(diagnostic: &str, message: impl Into<String>) -> Self {
        Error::Precondition {
            diagnostic: diagnostic.to_string(),
            message: message.into(),
        }
    }
}
