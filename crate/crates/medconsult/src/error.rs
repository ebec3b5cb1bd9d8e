use std::path::PathBuf;

use medconsult_core::corpus::CorpusError;
use medconsult_core::eicl::EiclError;
use medconsult_core::genbackend::BackendError;
use medconsult_core::metrics::MetricError;
use medconsult_core::pipeline::PipelineError;
use medconsult_core::retrieval::RetrievalError;
use medconsult_core::sentiment::SentimentError;
use medconsult_core::terminology::TermError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {reason}")]
    Parse { path: PathBuf, line: usize, reason: String },
    #[error("{path}:{line}: duplicate id `{id}`")]
    DuplicateId { path: PathBuf, line: usize, id: String },
    #[error("{path}:{line}: line matches personal-identifier pattern `{pattern}`")]
    PersonalIdentifier { path: PathBuf, line: usize, pattern: String },
    #[error("invalid pattern `{pattern}`: {reason}")]
    Pattern { pattern: String, reason: String },
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("unknown trace `{0}`")]
    UnknownTrace(String),
    #[error("storage failure: {0}")]
    Storage(String),
    #[error("{0}")]
    Validation(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Terms(#[from] TermError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Sentiment(#[from] SentimentError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

impl From<EiclError> for Error {
    fn from(e: EiclError) -> Self {
        Error::Pipeline(PipelineError::Generation(e))
    }
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, reason: impl Into<String>) -> Self {
        Error::Parse { path: path.into(), line, reason: reason.into() }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
