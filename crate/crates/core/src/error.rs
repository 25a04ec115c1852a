//! Crate-level error type and the machine-readable categories the CLI reports.

use std::path::PathBuf;

use thiserror::Error;

use crate::data::DataError;
use crate::evaluation::EvalError;
use crate::model::ModelError;
use crate::training::TrainError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Input {
        path: PathBuf,
        #[source]
        source: DataError,
    },
    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable category name printed by the CLI as `error[<category>]`.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Data(DataError::Parse { .. }) => "parse",
            Error::Data(DataError::Io(_)) => "io",
            Error::Data(_) => "data",
            Error::Model(ModelError::ShapeMismatch { .. }) => "shape",
            Error::Model(ModelError::Io(_)) => "io",
            Error::Model(ModelError::Checkpoint(_)) => "checkpoint",
            Error::Model(_) => "model",
            Error::Train(_) => "training",
            Error::Eval(EvalError::Model(ModelError::ShapeMismatch { .. })) => "shape",
            Error::Eval(_) => "evaluation",
            Error::Io { .. } => "io",
            Error::Input {
                source: DataError::Parse { .. },
                ..
            } => "parse",
            Error::Input {
                source: DataError::Io(_),
                ..
            } => "io",
            Error::Input { .. } => "data",
            Error::Config(_) => "config",
        }
    }

    /// Process exit code for this category.
    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "config" => 2,
            "io" => 3,
            "parse" => 4,
            "data" => 5,
            "model" | "checkpoint" => 6,
            "shape" => 7,
            "training" => 8,
            "evaluation" => 9,
            _ => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
