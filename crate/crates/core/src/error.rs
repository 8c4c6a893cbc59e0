use thiserror::Error;

pub type Result<T> = std::result::Result<T, FlatError>;

#[derive(Debug, Error)]
pub enum FlatError {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("non-finite value {value} at node {node} ({context})")]
    Evaluation {
        node: usize,
        value: f64,
        context: &'static str,
    },

    #[error("eigen-iteration did not converge after {} sweeps (last residual {:.3e})", .history.len(), .history.last().copied().unwrap_or(f64::NAN))]
    EigenNonConvergence { history: Vec<f64> },

    #[error("eigenvalues {first} and {second} form a degenerate cluster; multiple eigenvalues are not supported")]
    DegenerateEigenvalues { first: f64, second: f64 },

    #[error("eigenvalue {eigenvalue} lies within {margin:.3e} of interval endpoint {endpoint}")]
    Resonance {
        eigenvalue: f64,
        endpoint: f64,
        margin: f64,
    },

    #[error("largest computed eigenvalue {largest} does not exceed the interval end {upper}; compute more eigenpairs")]
    NeedsMoreEigenvalues { largest: f64, upper: f64 },

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),

    #[error("singular operator (condition estimate {condition:.3e})")]
    SingularOperator { condition: f64 },

    #[error("newton iteration did not converge in {iterations} steps (residual {residual:.3e})")]
    MaxIterations { iterations: usize, residual: f64 },

    #[error("continuation exhausted at depth {depth} (segment [{t0}, {t1}])")]
    ContinuationExhausted { depth: usize, t0: f64, t1: f64 },

    #[error("horizontal solve failed: {0}")]
    SolveFailed(String),

    #[error("bisection stagnated on bracket [{lo}, {hi}]")]
    BisectionStagnation { lo: f64, hi: f64 },

    #[error("fiber trace aborted after {} of {requested} samples: {source}", .partial.len())]
    TraceAborted {
        partial: Box<crate::explorer::FiberTrace>,
        requested: usize,
        #[source]
        source: Box<FlatError>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("expression error at column {column}: {message}")]
    Expression { column: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
