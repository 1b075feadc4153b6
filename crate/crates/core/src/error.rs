use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("{path}: {message}")]
    Parse { path: String, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short diagnostic category, printed by the CLI next to the message.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Config(_) | Error::Parse { .. } => "config",
            Error::Geometry(_) => "geometry",
            Error::Contract(_) => "contract",
            Error::Format(_) => "format",
            Error::Io(_) | Error::Csv(_) => "io",
        }
    }

    /// Process exit code for this error category.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parse { .. } => 2,
            Error::Geometry(_) => 3,
            Error::Contract(_) => 4,
            Error::Format(_) => 5,
            Error::Io(_) | Error::Csv(_) => 6,
        }
    }
}
