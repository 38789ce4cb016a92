use thiserror::Error;

/// Errors produced by the registration stages and their IO helpers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected_width}x{expected_height}, got {width}x{height}")]
    DimensionMismatch {
        expected_width: usize,
        expected_height: usize,
        width: usize,
        height: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("nothing to register")]
    NothingToRegister,

    #[error("no support for guide fit")]
    NoGuideSupport,

    #[error("image of {width}x{height} is too small for {scales} scales (need at least {min_side} per side)")]
    ImageTooSmall {
        width: usize,
        height: usize,
        scales: usize,
        min_side: usize,
    },

    #[error("malformed file {path}: {reason}")]
    Format { path: String, reason: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("image codec error: {0}")]
    Codec(#[from] image::ImageError),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn dims(expected: (usize, usize), got: (usize, usize)) -> Self {
        Error::DimensionMismatch {
            expected_width: expected.0,
            expected_height: expected.1,
            width: got.0,
            height: got.1,
        }
    }

    /// True for failures caused by the file system or a codec rather than by bad values.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_) | Error::Codec(_) | Error::Format { .. })
    }

    /// True for failures caused by invalid parameters, inputs, or configuration.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch { .. }
                | Error::InvalidParameter(_)
                | Error::InvalidInput(_)
                | Error::NothingToRegister
                | Error::NoGuideSupport
                | Error::ImageTooSmall { .. }
                | Error::Config(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
