use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("line {line}: {msg}")]
    Row { line: usize, msg: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("fit error: {0}")]
    Fit(String),
    #[error("collision overflow: more than {capacity} items share prefix {prefix:?}")]
    CollisionOverflow { prefix: Vec<u32>, capacity: usize },
    #[error("lookup error: {0}")]
    Lookup(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("checksum mismatch for {path}: expected {expected}, found {found}")]
    Checksum {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("missing artifact {path}; produce it with `{producer}`")]
    MissingArtifact { path: PathBuf, producer: String },
    #[error("{0}")]
    Format(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
