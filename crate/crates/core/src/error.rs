use std::path::PathBuf;

use thiserror::Error;

use crate::netlist::ParseError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Inconsistent or missing configuration (unknown port, missing key, ...).
    #[error("configuration error: {0}")]
    Config(String),
    /// The connection graph is not a well-formed feed-forward network.
    #[error("topology error: {0}")]
    Topology(String),
    /// A ring with self-coupling times round-trip amplitude equal to one.
    #[error("singular ring response: {0}")]
    Singular(String),
    /// A measurement could not be extracted from a response.
    #[error("analysis error: {0}")]
    Analysis(String),
    #[error("{} parse error(s):\n{}", .0.len(), render_parse_errors(.0))]
    Parse(Vec<ParseError>),
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn topology(msg: impl Into<String>) -> Self {
        Error::Topology(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

fn render_parse_errors(errs: &[ParseError]) -> String {
    errs.iter()
        .map(|e| format!("  {e}"))
        .collect::<Vec<_>>()
        .join("\n")
}
