use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("consumer profit is not concave: p1 = {p1} must exceed 1/alpha = {inv_alpha}")]
    Concavity { p1: f64, inv_alpha: f64 },
    #[error("singular pasting system (pivot ratio {ratio:.3e})")]
    Singular { ratio: f64 },
    #[error("no {what}: {detail}")]
    NoSolution { what: &'static str, detail: String },
    #[error("evaluation error: {0}")]
    Eval(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn no_solution(what: &'static str, detail: impl Into<String>) -> Self {
        Error::NoSolution {
            what,
            detail: detail.into(),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
