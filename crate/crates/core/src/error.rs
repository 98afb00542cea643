use std::io;

use thiserror::Error;

/// Every failure the codec can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("resource limit: {0}")]
    ResourceLimit(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("training error{}: {reason}", cell_suffix(.cells))]
    Training { cells: Vec<(u8, u8)>, reason: String },

    #[error("corrupt stream{}: {reason}", grid_suffix(*.grid))]
    CorruptStream { grid: Option<u8>, reason: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("model mismatch: {0}")]
    Model(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

fn grid_suffix(grid: Option<u8>) -> String {
    match grid {
        Some(n) => format!(" in grid G_{n}"),
        None => String::new(),
    }
}

fn cell_suffix(cells: &[(u8, u8)]) -> String {
    if cells.is_empty() {
        return String::new();
    }
    let names: Vec<String> = cells.iter().map(|(n, m)| format!("C_{n},{m}")).collect();
    format!(" for {}", names.join(", "))
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

pub(crate) fn corrupt(grid: Option<u8>, reason: impl Into<String>) -> Error {
    Error::CorruptStream {
        grid,
        reason: reason.into(),
    }
}
