use thiserror::Error;

/// Errors raised by the objects, the executor and the checkers.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// A bounded max register was asked to hold a value it cannot represent.
    #[error("capacity exceeded: value {value} does not fit a max register of capacity {capacity}")]
    Capacity { value: u64, capacity: u64 },

    /// A request was refused because it exceeds a configured size bound.
    #[error("refused: {what} is {count}, bound is {bound}")]
    Refusal {
        what: &'static str,
        count: u128,
        bound: u128,
    },

    /// A history or records file could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Instrumentation produced inconsistent data (for example duplicate tickets).
    #[error("instrumentation corrupted: {0}")]
    Corruption(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::ContractViolation(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }
}
