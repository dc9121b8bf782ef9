use soqn::Error;

pub const EXIT_OK: u8 = 0;
pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_INVALID_INPUT: u8 = 2;
pub const EXIT_UNSTABLE: u8 = 3;
pub const EXIT_INFEASIBLE: u8 = 4;

/// A diagnostic and the exit code it maps to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn input(message: impl Into<String>) -> Self {
        Self { code: EXIT_INVALID_INPUT, message: message.into() }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self { code: EXIT_RUNTIME, message: message.into() }
    }

    pub fn context(self, prefix: &str) -> Self {
        Self { code: self.code, message: format!("{prefix}: {}", self.message) }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Unstable { .. } => EXIT_UNSTABLE,
            Error::NonStochasticRow { .. }
            | Error::Reducible { .. }
            | Error::NonPositiveRate { .. }
            | Error::PoolSelfLoop { .. }
            | Error::InvalidModel(_)
            | Error::NotConstantRate(_)
            | Error::UnsupportedN(_)
            | Error::UnknownNode(_) => EXIT_INVALID_INPUT,
            Error::SingularSystem | Error::StateSpaceTooLarge { .. } | Error::NoConvergence { .. } => EXIT_RUNTIME,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::runtime(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Self::runtime(e.to_string())
    }
}
