use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid keypoints: {0}")]
    InvalidKeypoints(String),

    #[error("palm keypoints are degenerate (zero-area hull or zero-size square)")]
    DegenerateKeypoints,

    #[error("ROI square does not intersect the image")]
    EmptyIntersection,

    #[error("palm mask is empty after refinement with the hand segment")]
    EmptyMask,

    #[error("size mismatch: expected {expected:?}, got {actual:?}")]
    SizeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("ROI has no orientation signal")]
    BadRoi,

    #[error("no shift yields overlapping valid cells")]
    NoOverlap,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("gallery has no enrollee for label {0}")]
    EmptyGallery(u32),

    #[error("embedding dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("cannot fuse an empty embedding list")]
    EmptyList,

    #[error("interpolation factor {0} outside [0, 1]")]
    AlphaOutOfRange(f64),

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("both distributions have zero spread")]
    DegenerateDistribution,

    #[error("genuine and imposter means coincide; DIR undefined")]
    DegenerateReference,

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("JSON error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn image(path: &Path, source: image::ImageError) -> Self {
        Error::Image {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn json(path: &Path, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.to_path_buf(),
            source,
        }
    }

    /// True for failures of the filesystem or codecs rather than of the inputs'
    /// content.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Image { .. })
    }
}
