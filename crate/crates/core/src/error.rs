use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Reflection requested against a vanishing gradient.
    #[error("reflection against a zero gradient (norm {norm:e})")]
    ZeroGradient { norm: f64 },

    #[error("degenerate start: zero inertia with no descent direction after reflection")]
    DegenerateStart,

    #[error("root bracket failure: {0}")]
    RootBracketFailure(String),

    #[error("event storm: more than {limit} events in one trajectory")]
    EventStorm { limit: usize },

    #[error("line restriction is not convex (curvature {curvature:e} at t = {t:e})")]
    NotLogConcave { curvature: f64, t: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("infeasible position: constraint {index} violated by {violation:e}")]
    Infeasible { index: usize, violation: f64 },

    #[error("matrix is not positive semi-definite (Rayleigh quotient {0:e})")]
    NotPsd(f64),

    #[error("degenerate series: variance {0:e}")]
    DegenerateSeries(f64),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("empty file")]
    EmptyFile,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Stable short name of the error variant, used in CLI diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ZeroGradient { .. } => "ZeroGradient",
            Error::DegenerateStart => "DegenerateStart",
            Error::RootBracketFailure(_) => "RootBracketFailure",
            Error::EventStorm { .. } => "EventStorm",
            Error::NotLogConcave { .. } => "NotLogConcave",
            Error::Unsupported(_) => "Unsupported",
            Error::Infeasible { .. } => "Infeasible",
            Error::NotPsd(_) => "NotPSD",
            Error::DegenerateSeries(_) => "DegenerateSeries",
            Error::Parse { .. } => "ParseError",
            Error::EmptyFile => "EmptyFile",
            Error::InvalidInput(_) => "InvalidInput",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::Io(_) => "Io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
