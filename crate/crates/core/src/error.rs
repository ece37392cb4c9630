//! Error type shared by every pipeline stage.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("ragged row {row} in {path}: expected {expected} cells, found {found}")]
    RaggedRow {
        path: PathBuf,
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("dictionary row {row}: {message}")]
    Dictionary { row: usize, message: String },

    #[error("duplicate variable name `{0}`")]
    Duplicate(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("no columns retained after merge")]
    EmptySchema,

    #[error("empty table: {0}")]
    EmptyTable(String),

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("`{name}` is in category {category}, not Repayment; refusing to use it as the target")]
    LeakageGuard { name: String, category: String },

    #[error("target has zero variance")]
    DegenerateTarget,

    #[error("value {value} at index {index} is outside [0, 1]")]
    Domain { index: usize, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("design matrix is rank deficient: column {index} ({name}) is linearly dependent on earlier columns")]
    Rank { index: usize, name: String },

    #[error("elastic net with alpha = 0 has no finite zeroing penalty")]
    Unbounded,

    #[error("coordinate descent did not converge at lambda index {lambda_index} (max coefficient change {max_change:e})")]
    Convergence { lambda_index: usize, max_change: f64 },

    #[error("fold error: {0}")]
    Fold(String),

    #[error("fold {fold}: {source}")]
    InFold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("invalid configuration: {}", .0.join("; "))]
    ConfigInvalid(Vec<String>),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
