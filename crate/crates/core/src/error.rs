use alloc::string::String;

/// Errors produced by the change-detection pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Raster below the minimum size a three-level pyramid needs.
    #[error("image is {height}x{width}, minimum is {min}x{min}")]
    Size { height: usize, width: usize, min: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("configuration error: {0}")]
    Config(String),
    /// Failure reported by a model adapter, carrying the adapter's own message.
    #[error("inference error in {adapter}: {message}")]
    Inference { adapter: String, message: String },
    /// OTSU has nothing to separate: all values are zero or equal.
    #[error("degenerate input for thresholding: fewer than two distinct non-zero values")]
    Degenerate,
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub fn inference(adapter: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Inference {
            adapter: adapter.into(),
            message: message.into(),
        }
    }
}
