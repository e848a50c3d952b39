use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("index out of range: {0}")]
    Range(String),

    #[error("malformed spike file: {0}")]
    Format(String),

    #[error("length mismatch: expected {expected} bytes, found {found}")]
    Length { expected: usize, found: usize },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("distribution fit failed: {0}")]
    Fit(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Every reconstructor in a registry failed; carries `(method, cause)` pairs.
    #[error("all reconstructors failed: {}", format_causes(.0))]
    Pipeline(Vec<(String, String)>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec: {0}")]
    Image(#[from] image::ImageError),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag for the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Range(_) => "range",
            Error::Format(_) => "format",
            Error::Length { .. } => "length",
            Error::Shape(_) => "shape",
            Error::Parameter(_) => "parameter",
            Error::Fit(_) => "fit",
            Error::Numeric(_) => "numeric",
            Error::Pipeline(_) => "pipeline",
            Error::Io { .. } => "io",
            Error::Image(_) => "image",
            Error::Json(_) => "json",
        }
    }
}

fn format_causes(causes: &[(String, String)]) -> String {
    causes
        .iter()
        .map(|(name, cause)| format!("{name}: {cause}"))
        .collect::<Vec<_>>()
        .join("; ")
}
