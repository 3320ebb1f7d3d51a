use thiserror::Error;

/// Errors produced by graph construction, solvers, samplers and experiments.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate undirected edge ({u}, {v})")]
    DuplicateEdge { u: usize, v: usize },

    #[error("self-loop at vertex {0}")]
    SelfLoop(usize),

    #[error("edge ({u}, {v}) has nonpositive weight {weight}")]
    NonPositiveWeight { u: usize, v: usize, weight: f64 },

    #[error("vertex id {vertex} out of range for {n} vertices")]
    VertexOutOfRange { vertex: usize, n: usize },

    #[error("vertex ids are not dense: vertex {0} has no incident edge")]
    VertexGap(usize),

    #[error("graph is disconnected: {components} connected components")]
    Disconnected { components: usize },

    #[error("graph has no vertices")]
    EmptyGraph,

    #[error("invalid parameters: {0}")]
    InvalidParameter(String),

    #[error("could not generate a connected graph after {attempts} attempts")]
    ConnectivityNotAchieved { attempts: usize },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("problem size {n} exceeds the limit {limit} for {operation}")]
    SizeExceeded {
        operation: &'static str,
        n: usize,
        limit: usize,
    },

    #[error("conjugate gradient did not converge in {iterations} iterations (relative residual {residual:e})")]
    CgNotConverged { iterations: usize, residual: f64 },

    #[error("forest sampler exceeded its step budget of {budget} walk steps")]
    StepBudgetExceeded { budget: u64 },

    #[error("dense factorization failed: {0}")]
    Factorization(String),
}

impl Error {
    /// True for failures of a numerical procedure, as opposed to bad input data.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::CgNotConverged { .. } | Error::StepBudgetExceeded { .. } | Error::Factorization(_)
        )
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
