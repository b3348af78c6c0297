use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot decode image: {0}")]
    Decode(String),
    #[error("unsupported bit depth: {0}")]
    UnsupportedBitDepth(String),
    #[error("malformed PFM: {0}")]
    Pfm(String),
    #[error("image has a zero dimension")]
    EmptyImage,
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("degenerate mask: {0}")]
    DegenerateMask(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("solver failed: {0}")]
    Solver(String),
    #[error("light source {0} coincides with a surface point")]
    LightCoincident(usize),
    #[error("degenerate coarse basis")]
    DegenerateCoarseBasis,
    #[error("insufficient corpus: {0}")]
    InsufficientCorpus(String),
    #[error("malformed light record: {0}")]
    LightRecord(String),
    #[error("depth map is missing {missing} of {total} object pixels")]
    DepthHoles { missing: usize, total: usize },
    #[error("empty triangulation")]
    EmptyTriangulation,
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("malformed record: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Tags an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    pub fn mismatch(what: impl Into<String>) -> Self {
        Error::DimensionMismatch(what.into())
    }
}
