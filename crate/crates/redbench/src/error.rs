//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("trace schema error: column `{column}`: {detail}")]
    TraceSchema { column: String, detail: String },

    #[error("trace row error at line {line}: {detail}")]
    TraceRow { line: u64, detail: String },

    #[error("no .sql files under {root}")]
    EmptyPool { root: PathBuf },

    #[error("pool file {path}: {detail}")]
    PoolFile { path: PathBuf, detail: String },

    #[error("template rule `{pattern}` does not match file stem `{file}`")]
    TemplateRule { file: String, pattern: String },

    #[error("SQL analysis error near `{span}`: {detail}")]
    SqlAnalysis { span: String, detail: String },

    #[error("pool validation failed: {count} template(s) with inconsistent join counts: {templates:?} (use quarantine mode to drop them)")]
    PoolInvalid {
        count: usize,
        templates: Vec<String>,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("infeasible synthesis spec: {0}")]
    SynthSpec(String),

    #[error("no users survive prefiltering")]
    NoUsersSurvive,

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

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
