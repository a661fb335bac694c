use alloc::string::String;

use crate::model::Mechanism;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    #[error("prediction map has {found} values, instance has {expected} buckets")]
    MapLength { expected: usize, found: usize },
    #[error("prediction value {0} is outside [0, 1]")]
    MapValueOutOfRange(String),
    #[error("unknown query `{0}`")]
    UnknownQuery(String),
    #[error("unknown ad `{0}`")]
    UnknownAd(String),
    #[error("instance has no ads")]
    NoAds,
    #[error("no ad is shown under this prediction map")]
    EmptySelection,
    #[error("operation requires mechanism {expected}")]
    WrongMechanism { expected: Mechanism },
    #[error("operation requires a single-query instance, found {0} queries")]
    MultipleQueries(usize),
    #[error("configuration search exceeded its budget of {budget} nodes")]
    BudgetExceeded { budget: usize },
    #[error("{what} of size {size} exceeds the supported maximum {max}")]
    TooLarge {
        what: &'static str,
        size: usize,
        max: usize,
    },
    #[error("malformed winner configuration: {0}")]
    MalformedConfig(String),
    #[error("unknown fixture `{0}`")]
    UnknownFixture(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("cannot parse rational `{0}`")]
    ParseRational(String),
}
