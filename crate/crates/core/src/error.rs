use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::llm::template::TemplateError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("knowledge graph file contains no triples")]
    EmptyGraph,

    #[error("unknown topic entity `{0}`")]
    UnknownEntity(String),

    #[error("no plans for question `{0}`")]
    MissingPlans(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Template(#[from] TemplateError),

    #[error("could not parse model reply: {0}")]
    Reply(String),

    #[error("endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },

    #[error("endpoint request failed: {0}")]
    Transport(String),

    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

/// Broad failure class, used by the command line to choose an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Endpoint,
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Template(_) => ErrorKind::Config,
            Error::Status { .. } | Error::Transport(_) | Error::Reply(_) => ErrorKind::Endpoint,
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::EmptyGraph
            | Error::UnknownEntity(_)
            | Error::MissingPlans(_)
            | Error::Json(_) => ErrorKind::Data,
        }
    }
}
