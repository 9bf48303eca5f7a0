use thiserror::Error;

/// Errors produced by the core pipeline stages.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("insufficient calibration data: {0}")]
    InsufficientCalibration(String),
    #[error("degenerate training stream {0}: no negative jerk")]
    DegenerateTraining(usize),
    #[error("singular calibration: {0}")]
    SingularCalibration(String),
    #[error("encoding overflow: {0}")]
    EncodingOverflow(String),
    #[error("decode error: {0}")]
    Decode(String),
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("trace failed validation: {0}")]
    InvalidTrace(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
