use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("integral diverges for generator {generator}: {detail}")]
    DivergentIntegral { generator: usize, detail: String },

    #[error("survival function increases by {increase:e} near t = {at}")]
    MonotonicityViolation { at: f64, increase: f64 },

    #[error("test function violates its declared class at x = {at}: {detail}")]
    ConstantViolation { at: f64, detail: String },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("reachable state count exceeds cap of {cap}")]
    StateExplosion { cap: usize },

    #[error("instance too large for exhaustive enumeration: {0}")]
    SizeGuard(String),

    #[error("generator {generator} is not samplable")]
    Unsamplable { generator: usize },

    #[error("generator {generator} is not a discrete law")]
    NotDiscrete { generator: usize },

    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
