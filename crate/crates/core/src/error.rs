use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("degenerate task: {0}")]
    DegenerateTask(String),
    #[error("task too degenerate: {valid} valid nodes, need at least {required}")]
    TaskTooDegenerate { valid: usize, required: usize },
    #[error("non-finite activation in layer {layer}")]
    NumericFailure { layer: usize },
    #[error("subset {0} is empty")]
    EmptySubset(&'static str),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("controller received a non-finite gap at epoch {epoch}")]
    NonFiniteGap { epoch: usize },
    #[error("sweep has no runs for beta = {beta}")]
    MissingBeta { beta: f64 },
    #[error("run failed for seed {seed}: {source}")]
    Run {
        seed: u64,
        #[source]
        source: alloc::boxed::Box<Error>,
    },
}

impl Error {
    /// Short stable identifier used in machine-readable error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyGraph => "empty_graph",
            Error::InvalidParams(_) => "invalid_params",
            Error::DegenerateTask(_) => "degenerate_task",
            Error::TaskTooDegenerate { .. } => "task_too_degenerate",
            Error::NumericFailure { .. } => "numeric_failure",
            Error::EmptySubset(_) => "empty_subset",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::NonFiniteGap { .. } => "non_finite_gap",
            Error::MissingBeta { .. } => "missing_beta",
            Error::Run { source, .. } => source.kind(),
        }
    }
}
