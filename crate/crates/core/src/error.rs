use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("map not invertible: |grad lambda| = {grad_norm:.4} exceeds {limit} (t = {time})")]
    NotInvertible {
        grad_norm: f64,
        limit: f64,
        time: f64,
    },

    #[error("no convergence after {iterations} iterations (last residual {last_residual:.3e})")]
    NoConvergence {
        iterations: usize,
        last_residual: f64,
        residuals: Vec<f64>,
    },

    #[error(
        "remap required at t = {time}: |grad ell| = {grad_norm:.4} exceeds threshold {threshold}; \
         restart from u(t) as new initial data or shorten t_final"
    )]
    RemapRequired {
        time: f64,
        step: usize,
        grad_norm: f64,
        threshold: f64,
    },

    #[error("displacement left the contraction ball at t = {time}: |grad ell| = {grad_norm:.4}")]
    BallExit {
        time: f64,
        step: usize,
        grad_norm: f64,
    },

    #[error("singular matrix at node {node} (det = {det:.3e})")]
    SingularMatrix { node: usize, det: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("CFL violation: courant number {courant:.3} exceeds {limit}")]
    Cfl { courant: f64, limit: f64 },

    #[error("{failed} of {total} sample paths failed: {first}")]
    PathFailures {
        failed: usize,
        total: usize,
        first: String,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("snapshot format: {0}")]
    Format(String),

    #[error("config line {line}: {msg}")]
    ConfigParse { line: usize, msg: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
