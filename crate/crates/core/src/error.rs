use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{what} = {value} is outside [{lo}, {hi}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("invalid quantum object: {0}")]
    InvalidQuantum(String),

    #[error("expectation value has imaginary part {0:e}; operator is not Hermitian")]
    NonHermitian(f64),

    #[error("observable is not projective (O^2 != I within {tol:e})")]
    NonProjective { tol: f64 },

    #[error("invalid behavior: {0}")]
    InvalidBehavior(String),

    #[error("alphabet mismatch: {0}")]
    AlphabetMismatch(String),

    #[error("behavior is signalling: discrepancy {residual:e} on dropped inputs")]
    Signalling { residual: f64 },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("setting cell (x={x}, y={y}) has no trials")]
    EmptyCell { x: u8, y: u8 },

    #[error("invalid trial data: {0}")]
    InvalidTrials(String),

    #[error("onset unreachable: true score {0} does not exceed the local bound 2")]
    OnsetUnreachable(f64),

    #[error("linear program error: {0}")]
    Lp(#[from] crate::extlp::LpError),

    #[error("scenario not supported: {0}")]
    Unsupported(String),

    #[error("SDP error: {0}")]
    Sdp(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_range(what: &'static str, value: f64, lo: f64, hi: f64) -> Result<f64> {
    if value.is_finite() && value >= lo && value <= hi {
        Ok(value)
    } else {
        Err(Error::OutOfRange { what, value, lo, hi })
    }
}
