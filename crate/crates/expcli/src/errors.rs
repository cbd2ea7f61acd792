//! Error classes mapped to distinct exit codes.
//!
//! 2 = configuration (bad flags, bad config file, missing parameters),
//! 3 = precondition (referenced files missing or malformed, operation
//!     constraints violated), 4 = numeric failure (divergence, singular or
//!     non-convergent solves), 1 = I/O while writing results.

use std::fmt;

use catgeo::bounds::BoundError;
use catgeo::density::DensityError;
use catgeo::fisher::FisherError;
use catgeo::learn::LearnError;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Precondition(String),
    Numeric(String),
    Io(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Precondition(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    pub fn class(&self) -> &'static str {
        match self {
            CliError::Io(_) => "io error",
            CliError::Config(_) => "config error",
            CliError::Precondition(_) => "precondition error",
            CliError::Numeric(_) => "numeric error",
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = match self {
            CliError::Io(m) | CliError::Config(m) | CliError::Precondition(m) | CliError::Numeric(m) => m,
        };
        write!(f, "{}: {}", self.class(), msg)
    }
}

pub fn precondition<E: fmt::Display>(e: E) -> CliError {
    CliError::Precondition(e.to_string())
}

pub fn numeric<E: fmt::Display>(e: E) -> CliError {
    CliError::Numeric(e.to_string())
}

pub fn io<E: fmt::Display>(e: E) -> CliError {
    CliError::Io(e.to_string())
}

/// Reading a referenced input file is a precondition of the run.
pub fn input_file(path: &str, e: std::io::Error) -> CliError {
    CliError::Precondition(format!("{path}: {e}"))
}

pub fn from_fisher(e: FisherError) -> CliError {
    match e {
        FisherError::NonConvergence(_) => numeric(e),
        _ => precondition(e),
    }
}

pub fn from_learn(e: LearnError) -> CliError {
    match e {
        LearnError::Diverged { .. } => numeric(e),
        _ => precondition(e),
    }
}

pub fn from_bound(e: BoundError) -> CliError {
    match e {
        BoundError::FitSingular => numeric(e),
        _ => precondition(e),
    }
}

pub fn from_density(e: DensityError) -> CliError {
    precondition(e)
}
