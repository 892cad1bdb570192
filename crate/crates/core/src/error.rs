use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("{0} must not be empty")]
    Empty(&'static str),
    #[error("unknown feature kind `{0}`")]
    UnknownKind(String),
    #[error("feature kind `{expected}` expected, got `{actual}`")]
    KindMismatch { expected: String, actual: String },
    #[error("unknown parameter group `{0}`")]
    UnknownGroup(String),
    #[error("average precision is undefined without positive labels")]
    NoPositives,
    #[error("no trainable group")]
    NoTrainableGroup,
    #[error("missing `{kind}` features for example `{id}`")]
    MissingFeatures { kind: String, id: String },
    #[error("no feature bank for kind `{0}`")]
    MissingBank(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid format: {0}")]
    Format(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Wire(#[from] crate::proto::WireError),
    #[error("server answered with status {0}")]
    Status(u8),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn shape(context: &'static str, expected: usize, actual: usize) -> Self {
        Error::Shape {
            context,
            expected,
            actual,
        }
    }

    /// True for errors caused by bad input data rather than the runtime.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Format(_)
                | Error::MissingFeatures { .. }
                | Error::MissingBank(_)
                | Error::UnknownKind(_)
                | Error::KindMismatch { .. }
                | Error::Shape { .. }
                | Error::NonFinite(_)
        )
    }
}
