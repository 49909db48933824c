use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point is not on the manifold: {0}")]
    NotOnManifold(String),

    #[error("tangent vectors anchored at different points")]
    AnchorMismatch,

    #[error("retraction step is degenerate (singular QR input)")]
    DegenerateStep,

    #[error("points are outside the injectivity region (residual {residual:e})")]
    OutOfInjectivity { residual: f64 },

    #[error("differentiated retraction vanishes along the transport direction")]
    DegenerateDirection,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid quadratic subproblem input: {0}")]
    QpInput(String),

    #[error("line search stalled after {iterations} trials with bracket [{t_a:e}, {t_u:e}]")]
    LineSearchStall { t_a: f64, t_u: f64, iterations: usize },

    #[error("oracle failure: {0}")]
    Oracle(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed input: {0}")]
    Parse(String),
}
