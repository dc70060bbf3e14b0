use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no admissible auxiliary exponent r: {0}")]
    NoAdmissibleR(String),
    #[error("empty admissible interval: {0}")]
    EmptyInterval(String),
    #[error("delta {delta} too large (delta0 = {delta0})")]
    DeltaTooLarge { delta: f64, delta0: f64 },
    #[error("field lives on a different grid")]
    GridMismatch,
    #[error("pair (p, q) = ({p}, {q}) is not admissible")]
    InadmissiblePair { p: f64, q: f64 },
    #[error("Picard iteration did not converge (contraction factor {factor:.4}, distance {distance:.3e})")]
    NoConvergence { factor: f64, distance: f64 },
    #[error("grid under-resolved: {0}")]
    GridUnderresolved(String),
    #[error("smallness gate failed: {reason} (statistic {statistic:.6e})")]
    SmallnessGateFailed { statistic: f64, reason: String },
    #[error("no blow-up detected before T = {0}")]
    NoBlowupDetected(f64),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("exponent chain violated: {0}")]
    ChainViolated(String),
    #[error("gate failed: {0}")]
    GateFailed(String),
    #[error("fit window too short: {0}")]
    WindowTooShort(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
