use thiserror::Error;

/// Errors raised across the simulation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),

    #[error("matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("operation requires a {expected} state")]
    WrongSpace { expected: &'static str },

    #[error("singular detuning in term {index}")]
    SingularDetuning { index: usize },

    #[error("unsupported frame transformation {from:?} -> {to:?}")]
    UnsupportedFrame {
        from: crate::qops::Frame,
        to: crate::qops::Frame,
    },

    #[error("step size underflow at t = {t} ns (h = {h:e}); problem is stiff or misconfigured")]
    Stiffness { t: f64, h: f64 },

    #[error("positivity violated at t = {t} ns (min eigenvalue {min_eigenvalue:e})")]
    Positivity { t: f64, min_eigenvalue: f64 },

    #[error("post-selection probability {0:e} too small to normalize")]
    ZeroProbability(f64),

    #[error("Fock truncation {fock_dim} insufficient (tail mass {tail:e})")]
    TruncationInsufficient { fock_dim: usize, tail: f64 },

    #[error("degenerate state: {0}")]
    DegenerateState(String),

    #[error("field point lies on a current segment")]
    OnWire,

    #[error("sphere intersects a current segment")]
    WireIntersection,

    #[error("value must be positive, got {0}")]
    NonPositive(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("at sweep point {point}: {source}")]
    SweepPoint {
        point: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Whether this error stems from a numerical failure (as opposed to input validation).
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::Stiffness { .. }
            | Error::Positivity { .. }
            | Error::NotPsd(_)
            | Error::ZeroProbability(_)
            | Error::TruncationInsufficient { .. } => true,
            Error::SweepPoint { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
