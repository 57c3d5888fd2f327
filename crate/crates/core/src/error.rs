use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty image: no patches")]
    EmptyImage,

    #[error("invalid scene `{image_id}`: {reason}")]
    InvalidScene { image_id: String, reason: String },

    #[error("raster parse error in {field}: {reason}")]
    RasterParse { field: &'static str, reason: String },

    #[error("range error: {0}")]
    Range(String),

    #[error("rescale error: {0}")]
    Rescale(String),

    #[error("tiling consistency error: {0}")]
    Consistency(String),

    #[error("replay miss: no entry for patch key `{0}`")]
    ReplayMiss(String),

    #[error("malformed patch key `{0}`")]
    BadPatchKey(String),

    #[error("replay file line {line}: {reason}")]
    ReplayParse { line: usize, reason: String },

    #[error("labeling error: no external label for image `{0}`")]
    MissingLabel(String),

    #[error("dataset generation exhausted its attempt budget; shortfall per class: {shortfall}")]
    Shortfall { shortfall: String },

    #[error("gini impurity undefined for an empty histogram")]
    EmptyHistogram,

    #[error("empty training data")]
    EmptyDataset,

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("metric input error: {0}")]
    MetricInput(String),

    #[error("MNAE undefined for zero ground truth")]
    ZeroGroundTruth,

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
