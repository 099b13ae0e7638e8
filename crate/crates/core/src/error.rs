use thiserror::Error;

/// Errors raised across the laboratory.
#[derive(Debug, Error)]
pub enum KppError {
    #[error("invalid medium parameter: {0}")]
    InvalidMedium(String),

    #[error("smoothing width {eps} is unresolved on spacing {h} (need eps >= 4h)")]
    UnresolvedSmoothing { eps: f64, h: f64 },

    #[error("window length {x} is not an integral multiple of spacing {h}")]
    NonIntegralGrid { x: f64, h: f64 },

    #[error("rescaling factor must be positive, got {0}")]
    InvalidScale(f64),

    #[error("grids do not match: {0}")]
    GridMismatch(String),

    #[error("off-diagonal positivity violated at row {row} for p = {p}, h = {h}")]
    PositivityViolation { p: f64, h: f64, row: usize },

    #[error("eigen solver did not converge in {iters} iterations (last residual {residual:e})")]
    NoConvergence { iters: usize, residual: f64 },

    #[error("numerical breakdown: {0}")]
    Breakdown(String),

    #[error("bracket search failed: {0}")]
    BracketFailure(String),

    #[error("gamma = {gamma} is below the admissible threshold {threshold}")]
    GammaBelowThreshold { gamma: f64, threshold: f64 },

    #[error("ODE step {step} too coarse near x = {x}")]
    StepTooCoarse { step: f64, x: f64 },

    #[error("principal eigenvalue is degenerate at p = {p}: k_p - k_0 = {gap:e}")]
    DegenerateTilt { p: f64, gap: f64 },

    #[error("front escaped the guard band at t = {0}")]
    FrontEscaped(f64),

    #[error("time step {dt} violates the reaction bound {bound}")]
    CflViolation { dt: f64, bound: f64 },

    #[error("only {found} snapshots in the fit window (need 10)")]
    TooFewSnapshots { found: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown {kind} `{name}`")]
    UnknownStrategy { kind: &'static str, name: String },

    #[error("malformed container: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl KppError {
    /// True for failures of a numerical routine (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            KppError::NoConvergence { .. }
                | KppError::Breakdown(_)
                | KppError::BracketFailure(_)
                | KppError::StepTooCoarse { .. }
                | KppError::FrontEscaped(_)
                | KppError::DegenerateTilt { .. }
                | KppError::PositivityViolation { .. }
                | KppError::GammaBelowThreshold { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, KppError>;
