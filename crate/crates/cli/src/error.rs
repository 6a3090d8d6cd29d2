//! Exit codes and the one-line diagnostic written to stderr.

use std::fmt;

/// Successful run.
pub const EXIT_OK: u8 = 0;
/// Invalid configuration or command line.
pub const EXIT_CONFIG: u8 = 2;
/// Unreadable, malformed or unusable data.
pub const EXIT_DATA: u8 = 3;
/// Numerical failure.
pub const EXIT_NUMERIC: u8 = 4;
/// Integration or simulation budget exhausted.
pub const EXIT_BUDGET: u8 = 5;
/// An experiment ran but at least one verdict failed.
pub const EXIT_VERDICT: u8 = 6;

/// Failure of a run, carrying its exit code and a stable tag.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: u8,
    pub tag: String,
    pub message: String,
}

impl CliError {
    pub fn new(code: u8, tag: &str, message: impl Into<String>) -> Self {
        CliError { code, tag: tag.into(), message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(EXIT_CONFIG, "ConfigError", message)
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self::new(EXIT_DATA, "DataError", message)
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self::new(EXIT_DATA, "IoError", message)
    }

    /// `blockg: error tag=<Tag> exit=<code>: <message>` on a single line.
    pub fn line(&self) -> String {
        let msg: String =
            self.message.chars().map(|c| if c == '\n' || c == '\r' { ' ' } else { c }).collect();
        format!("blockg: error tag={} exit={}: {}", self.tag, self.code, msg)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.line())
    }
}

impl std::error::Error for CliError {}

impl From<blockg_core::Error> for CliError {
    fn from(e: blockg_core::Error) -> Self {
        use blockg_core::Error as E;
        let code = match e {
            E::PreconditionViolated(_) | E::EmptyModelList => EXIT_CONFIG,
            E::DimensionMismatch(_) | E::RankDeficient(_) => EXIT_DATA,
            E::DomainError(_)
            | E::NoConvergence(_)
            | E::NotBlockOrthogonal(_)
            | E::IntegralDiverges(_)
            | E::OutOfInterior(_) => EXIT_NUMERIC,
            E::BudgetExceeded(_) | E::SimulationBudgetExceeded(_) => EXIT_BUDGET,
        };
        CliError::new(code, e.tag(), e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn library_errors_map_to_exit_codes() {
        let cases = [
            (blockg_core::Error::PreconditionViolated("x".into()), EXIT_CONFIG),
            (blockg_core::Error::RankDeficient("x".into()), EXIT_DATA),
            (blockg_core::Error::NotBlockOrthogonal("x".into()), EXIT_NUMERIC),
            (blockg_core::Error::BudgetExceeded("x".into()), EXIT_BUDGET),
            (blockg_core::Error::SimulationBudgetExceeded("x".into()), EXIT_BUDGET),
        ];
        for (e, code) in cases {
            let tag = e.tag();
            let c = CliError::from(e);
            assert_eq!(c.code, code);
            assert!(c.line().contains(&format!("tag={tag}")));
        }
    }

    #[test]
    fn diagnostic_is_one_line() {
        let e = CliError::data("first\nsecond");
        assert_eq!(e.line().lines().count(), 1);
        assert!(e.line().starts_with("blockg: error tag=DataError exit=3:"));
    }
}
