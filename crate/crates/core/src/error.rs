use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} = {value} is out of range {lo}..={hi}")]
    Range {
        what: &'static str,
        value: i64,
        lo: i64,
        hi: i64,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empirical CDF is undefined at t=0")]
    EmptySequence,

    #[error("no observations")]
    NoObservations,

    #[error("invalid parameter `{field}`: {reason}")]
    Parameter { field: &'static str, reason: String },

    #[error("construction error: {0}")]
    Construction(String),

    /// An algorithm or adversary broke the round protocol.
    #[error("protocol error at round {round}: {offender} {detail}")]
    Protocol {
        round: usize,
        offender: &'static str,
        detail: String,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("run {run}: {source}")]
    Run {
        run: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn param(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            field,
            reason: reason.into(),
        }
    }

    /// True for errors raised while a game was being played, as opposed to
    /// validation of inputs before any compute.
    pub fn is_protocol(&self) -> bool {
        match self {
            Error::Protocol { .. } | Error::Contract(_) => true,
            Error::Run { source, .. } => source.is_protocol(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
