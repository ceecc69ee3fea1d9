use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A commanded angle maps outside the servo tick range.
    #[error("{joint}: angle {angle_rad:.6} rad maps to tick {tick} outside [{min}, {max}]")]
    OutOfRange {
        joint: String,
        angle_rad: f64,
        tick: i64,
        min: i64,
        max: i64,
    },

    #[error("wrist command rejected: {limit}")]
    RomViolation { limit: String },

    #[error("{origin}: {message}")]
    Parse { origin: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn parse(origin: impl Into<String>, message: impl std::fmt::Display) -> Self {
        Error::Parse {
            origin: origin.into(),
            message: message.to_string(),
        }
    }
}
