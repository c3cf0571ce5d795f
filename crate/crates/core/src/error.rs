use thiserror::Error;

/// Errors produced anywhere in the synthesis and simulation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("expected a square matrix, got {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("linear system is inconsistent (relative residual {residual:.3e})")]
    Inconsistent { residual: f64 },

    #[error("eigenvalue iteration did not converge for a {0}x{0} matrix")]
    NoConvergence(usize),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("node 0 receives edges; the exosystem row of the Laplacian must be zero")]
    NonzeroLeaderRow,

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("system pencil is degenerate (identically rank deficient)")]
    DegeneratePencil,

    #[error("regulator equations have no solution for agent {agent} (relative residual {residual:.3e})")]
    A3Violation { agent: usize, residual: f64 },

    #[error("eigenvector matrix is singular (condition number {condition:.3e})")]
    SingularV { condition: f64 },

    #[error("closed-loop matrix is defective or has repeated eigenvalues")]
    DefectiveClosedLoop,

    #[error("closed-loop eigenvalue {re}{im:+}i is not real")]
    NonRealEigenvalue { re: f64, im: f64 },

    #[error("no nonovershooting feedback found after {candidates} candidate sets; failing outputs of best candidate: {failing_outputs:?}")]
    SearchFailed {
        candidates: usize,
        failing_outputs: Vec<usize>,
        best_eigenvalues: Vec<f64>,
    },

    #[error("observer placement failed: {0}")]
    PlacementFailed(String),

    #[error("no coupling gain satisfies the observer bound: {0}")]
    Infeasible(String),

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wraps `self` with the name of the pipeline stage that raised it.
    pub fn in_stage(self, stage: impl Into<String>) -> Error {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, looking through stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    /// True for file-system and parse failures, as opposed to domain failures.
    pub fn is_io(&self) -> bool {
        matches!(self.root(), Error::Io(_) | Error::Json(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
