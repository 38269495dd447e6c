use thiserror::Error;

use crate::dataset::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid support: {0}")]
    InvalidSupport(String),

    #[error("point {0:?} is not in the covariate support")]
    UnknownPoint(Vec<f64>),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dataset failed validation with {} violation(s)", .0.len())]
    Validation(Vec<Violation>),

    #[error("linear program error: {0}")]
    Lp(#[from] crate::linprog::LpError),

    #[error("group {group}: marginals are inconsistent with the support (minimal slack {slack:.3e})")]
    EmptyFeasibleSet { group: String, slack: f64 },

    #[error("group {group}: no joint distribution admits conditional means satisfying the restrictions")]
    EmptyIdentifiedSet { group: String },

    #[error("group {group}: {source}")]
    Group {
        group: String,
        #[source]
        source: Box<Error>,
    },

    #[error("outcome is not declared binary")]
    NotBinary,

    #[error("missing {what} for group {group}")]
    MissingData { group: String, what: String },

    #[error("instance too large for enumeration: {0}")]
    TooLarge(String),

    #[error("internal consistency failure: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn in_group(self, group: &str) -> Error {
        match self {
            e @ (Error::Group { .. }
            | Error::EmptyFeasibleSet { .. }
            | Error::EmptyIdentifiedSet { .. }
            | Error::MissingData { .. }) => e,
            other => Error::Group {
                group: group.to_string(),
                source: Box::new(other),
            },
        }
    }
}
