//! File formats, reports and subcommands behind the `auction-calib` binary.

pub mod click_log;
pub mod commands;
pub mod instance_file;
pub mod report;

use auction_calib_core::Error;

/// A malformed instance file, click log or value list. `line` is 1-based;
/// 0 means the problem is not tied to one line.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{}{message}", if *line > 0 { format!("line {line}: ") } else { String::new() })]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, unreadable or malformed input. Exit code 2.
    #[error("{0}")]
    Usage(String),
    /// The input is well formed but the operation has no answer. Exit code 1.
    #[error("{0}")]
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain(_) => 1,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::MapLength { .. }
            | Error::MapValueOutOfRange(_)
            | Error::UnknownQuery(_)
            | Error::UnknownAd(_)
            | Error::MalformedConfig(_)
            | Error::UnknownFixture(_)
            | Error::InvalidArgument(_)
            | Error::ParseRational(_) => CliError::Usage(e.to_string()),
            _ => CliError::Domain(e.to_string()),
        }
    }
}

impl From<ParseError> for CliError {
    fn from(e: ParseError) -> Self {
        CliError::Usage(e.to_string())
    }
}
