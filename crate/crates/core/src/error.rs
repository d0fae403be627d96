use thiserror::Error;

use crate::ingest::MedId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unsupported document format `{found}` (expected `{expected}`)")]
    Format { expected: &'static str, found: String },

    #[error("corrupt document: {0}")]
    Corrupt(String),

    #[error("unknown medicine id {0}")]
    UnknownMedicine(MedId),

    #[error("unknown medicines: {0:?}")]
    UnknownMedicines(Vec<String>),

    #[error("foreign itemset: references medicine {0} outside the catalog")]
    ForeignItemset(MedId),

    #[error("unknown medicine in stop list: {0}")]
    UnknownStopMedicine(MedId),

    #[error("conflicting stop-list overrides for medicine {0}")]
    ConflictingOverride(MedId),

    #[error("invalid ATC code `{0}`")]
    InvalidAtcCode(String),

    #[error("ATC table has no valid rows")]
    EmptyAtcTable,

    #[error("partition does not cover node {0}")]
    PartitionMismatch(MedId),

    #[error("label sets differ: {0}")]
    LabelMismatch(String),

    #[error("candidate {0} is not in the recommendation pool for this query")]
    NotInPool(MedId),

    #[error("empty tagged sample")]
    EmptySample,

    #[error("pipeline degenerate: {0}")]
    Degenerate(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
