//! Process exit codes and the error classes that map onto them.

use std::fmt;

use crsnet_core::Error;

pub const OK: u8 = 0;
pub const OTHER: u8 = 1;
pub const CONFIG: u8 = 2;
pub const DATA: u8 = 3;
/// The command completed and wrote its reports, but at least one metric is
/// undefined (e.g. AUC on a single-class cohort).
pub const UNDEFINED_METRIC: u8 = 4;

/// Invalid or incomplete configuration.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "configuration error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Missing or unusable input data.
#[derive(Debug)]
pub struct DataError(pub String);

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "data error: {}", self.0)
    }
}

impl std::error::Error for DataError {}

pub fn code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return CONFIG;
        }
        if cause.is::<DataError>() || cause.is::<std::io::Error>() {
            return DATA;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Config(_) | Error::InvalidWindow(_) => CONFIG,
                Error::AllResamplesUndefined(_) => UNDEFINED_METRIC,
                _ => DATA,
            };
        }
    }
    OTHER
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification() {
        assert_eq!(code_for(&ConfigError("x".into()).into()), CONFIG);
        assert_eq!(code_for(&Error::Config("x".into()).into()), CONFIG);
        assert_eq!(code_for(&Error::EmptyMask.into()), DATA);
        assert_eq!(code_for(&anyhow::Error::from(DataError("x".into())).context("while training")), DATA);
        assert_eq!(code_for(&anyhow::anyhow!("boom")), OTHER);
    }
}
