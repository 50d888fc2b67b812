//! Error type shared across the simulation crates.

use std::fmt;

/// Errors surfaced by the simulation library.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An input had the wrong size or shape.
    InvalidInput(String),
    /// A parameter violated a documented constraint.
    InvalidParameter(String),
    /// The linear model is degenerate (e.g. a zero column) and the
    /// detector cannot proceed.
    DegenerateModel(String),
    /// A numerical routine failed (singular factorization, non-finite values).
    Numerical(String),
    /// Configuration file could not be read or parsed.
    Config(String),
    /// A requested result is missing from the data (e.g. no detector ran).
    MissingData(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::DegenerateModel(msg) => write!(f, "degenerate model: {msg}"),
            Error::Numerical(msg) => write!(f, "numerical error: {msg}"),
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::MissingData(msg) => write!(f, "missing data: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
