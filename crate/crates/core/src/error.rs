use thiserror::Error;

/// Errors produced by the reconstruction library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite gradient in tensor `{0}`")]
    NonFiniteGradient(String),

    #[error("point is behind the camera (depth {depth})")]
    BehindCamera { depth: f64 },

    #[error("triangulation is degenerate for keypoint {keypoint}")]
    DegenerateTriangulation { keypoint: usize },

    #[error("bone frame is degenerate for bone {bone}: defining points are collinear")]
    DegenerateFrame { bone: usize },

    #[error("alignment is degenerate: {0}")]
    DegenerateAlignment(String),

    #[error("invalid template: {0}")]
    InvalidTemplate(String),

    #[error("bone {bone} holds {count} vertices, more than the output width {capacity}")]
    Capacity {
        bone: usize,
        count: usize,
        capacity: usize,
    },

    #[error("need at least {required} views, got {actual}")]
    TooFewViews { required: usize, actual: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        loss: f64,
    },

    #[error("locked parameter tensor `{0}` changed during fusion training")]
    LockedDrift(String),

    #[error("format error in `{field}`: {reason}")]
    Format { field: String, reason: String },

    #[error("incompatible weights: `{field}` expected {expected}, found {found}")]
    Incompatible {
        field: String,
        expected: String,
        found: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(context: impl Into<String>, expected: usize, actual: usize) -> Self {
        Error::Shape {
            context: context.into(),
            expected,
            actual,
        }
    }

    pub(crate) fn format(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Format {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
