use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: invalid `{field}`: {message}")]
    Parse {
        path: String,
        line: usize,
        field: String,
        message: String,
    },

    #[error("duplicate doc_id `{0}`")]
    DuplicateDocument(String),

    #[error("empty token sequence in `{0}`")]
    EmptyTokens(String),

    #[error("seed node {0} is not in the graph")]
    MissingSeedNode(String),

    #[error("unresolved sentence reference (document {doc}, sentence {sentence})")]
    UnresolvedSentence { doc: usize, sentence: usize },

    #[error("invalid query: {0}")]
    Query(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("missing artifact for stage `{stage}`; run `{run_first}` first")]
    MissingArtifact { stage: String, run_first: String },

    #[error("output directory {0} is locked by another run")]
    Locked(PathBuf),

    #[error("config: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl std::fmt::Display, line: usize, field: &str, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.to_string(),
            line,
            field: field.to_string(),
            message: message.into(),
        }
    }

    /// Short stable identifier used in machine-readable CLI errors.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::DuplicateDocument(_) => "duplicate-document",
            Error::EmptyTokens(_) => "empty-tokens",
            Error::MissingSeedNode(_) => "missing-seed-node",
            Error::UnresolvedSentence { .. } => "unresolved-sentence",
            Error::Query(_) => "query",
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::MissingArtifact { .. } => "missing-artifact",
            Error::Locked(_) => "locked",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }
}
