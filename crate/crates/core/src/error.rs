use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("time interval [{start}, {end}] s is outside the gyro track span [{track_start}, {track_end}] s")]
    OutOfRange {
        start: f64,
        end: f64,
        track_start: f64,
        track_end: f64,
    },

    #[error("blur trail needs a kernel radius of {required} px but the maximum is {max} px")]
    OversizedBlur { required: usize, max: usize },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Codec {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("file sets differ; only in predictions: {only_pred:?}; only in references: {only_ref:?}")]
    UnmatchedFiles {
        only_pred: Vec<String>,
        only_ref: Vec<String>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
