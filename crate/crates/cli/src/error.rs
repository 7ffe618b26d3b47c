use std::fmt;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

/// Usage errors exit with 2, data errors with 1 and a JSON object on stderr.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(DataError),
}

#[derive(Debug, Serialize)]
pub struct DataError {
    pub error: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn data(kind: impl Into<String>, msg: impl fmt::Display) -> Self {
        CliError::Data(DataError {
            error: kind.into(),
            message: msg.to_string(),
            path: None,
        })
    }

    /// Attaches the file the error is about, unless one is already set.
    pub fn at(mut self, path: &Path) -> Self {
        if let CliError::Data(d) = &mut self {
            d.path.get_or_insert_with(|| path.to_path_buf());
        }
        self
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 1,
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::data("Io", e)
    }
}

impl From<blecte::dataset_io::ParseError> for CliError {
    fn from(e: blecte::dataset_io::ParseError) -> Self {
        CliError::data(e.kind(), &e)
    }
}

impl From<blecte::dataset_io::ReassemblyError> for CliError {
    fn from(e: blecte::dataset_io::ReassemblyError) -> Self {
        CliError::data("Reassembly", e)
    }
}

impl From<blecte::aoa::AoaError> for CliError {
    fn from(e: blecte::aoa::AoaError) -> Self {
        CliError::data("Aoa", e)
    }
}

impl From<blecte::metrics::MetricsError> for CliError {
    fn from(e: blecte::metrics::MetricsError) -> Self {
        CliError::data("Metrics", e)
    }
}

impl From<blecte::ranging::RangingError> for CliError {
    fn from(e: blecte::ranging::RangingError) -> Self {
        CliError::data("Ranging", e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::data("Csv", e)
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Adds a path to errors raised while handling a file.
pub trait Context<T> {
    fn at(self, path: &Path) -> Result<T>;
}

impl<T, E: Into<CliError>> Context<T> for std::result::Result<T, E> {
    fn at(self, path: &Path) -> Result<T> {
        self.map_err(|e| e.into().at(path))
    }
}
