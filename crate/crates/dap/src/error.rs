use thiserror::Error;

/// Crate-wide error type.
#[derive(Error, Debug)]
pub enum Error {
    #[error("shape mismatch: {0} vs {1}")]
    Shape(String, String),
    #[error("size error: {0}")]
    Size(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("numeric divergence: {0}")]
    NumericDivergence(String),
    #[error("optimizer state error: {0}")]
    State(String),
    #[error("empty crop: no container points survived score cropping")]
    EmptyCrop,
    #[error("insufficient matches: got {0}, need at least 3")]
    InsufficientMatches(usize),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("degenerate demonstration: {0}")]
    DegenerateDemo(String),
    #[error("no candidate survived; failures: [{0}]")]
    NoCandidates(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
