//! Errors of a CLI run and their exit codes.

use lavc::Error;
use lavc_sim::SimError;

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_CONFIG: u8 = 4;

#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("input error: {0}")]
    Input(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("configuration error: {0}")]
    Config(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Input(_) => EXIT_INPUT,
            Failure::Numerical(_) => EXIT_NUMERICAL,
            Failure::Config(_) => EXIT_CONFIG,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Failure::Config(msg.into())
    }

    pub fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        Failure::Input(format!("{}: {e}", path.display()))
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::MissingColumn(_)
            | Error::NonNumericCell { .. }
            | Error::EmptyData
            | Error::InvalidData(_)
            | Error::TooFewRows { .. }
            | Error::Io(_) => Failure::Input(msg),
            Error::InvalidParameter(_) | Error::GroupTooSmall { .. } | Error::OutOfRange { .. } => {
                Failure::Config(msg)
            }
            Error::SingularGroup { .. }
            | Error::SingularSchur
            | Error::EmptyWindow(_)
            | Error::RankDeficientWindow { .. }
            | Error::DegenerateVariance
            | Error::ZeroRss1
            | Error::NonNested { .. } => Failure::Numerical(msg),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(msg) => Failure::Config(msg),
            SimError::Io(err) => Failure::Input(err.to_string()),
            SimError::Serialize(msg) => Failure::Input(msg),
            SimError::Estimation(err) => err.into(),
            SimError::Replication { ref source, .. } => {
                let msg = e.to_string();
                match Failure::from(source.clone()) {
                    Failure::Input(_) => Failure::Input(msg),
                    Failure::Numerical(_) => Failure::Numerical(msg),
                    Failure::Config(_) => Failure::Config(msg),
                }
            }
        }
    }
}
