use thiserror::Error;

#[derive(Debug, Error)]
pub enum CloudError {
    #[error("SumEqualityCom: no branch applies (sum bounds precondition violated)")]
    InconsistentSumProbe,
    #[error("malformed encoded cell {0:?}")]
    MalformedCell(String),
    #[error("no such table {0}")]
    MissingTable(String),
    #[error("no such column {0}")]
    MissingColumn(String),
    #[error("no such relation {0}")]
    MissingRelation(String),
    #[error("relation {0} already exists")]
    DuplicateRelation(String),
    #[error("set operation arity mismatch: {left} vs {right} columns")]
    ArityMismatch { left: usize, right: usize },
    #[error("scalar subquery {0} returned {1} rows")]
    ScalarRows(String, usize),
    #[error("scalar subquery {0} must return exactly one column")]
    ScalarColumns(String),
    #[error("slot type mismatch in {0}")]
    SlotType(String),
    #[error("group of {count} rows exceeds the sum comparison limit of {limit}")]
    SumGroupTooLarge { count: u64, limit: u64 },
    #[error("temp object {0} was not dropped")]
    LeakedTemp(String),
    #[error("plan mutates the store but was executed read-only")]
    ReadOnly,
    #[error("store format: {0}")]
    Format(String),
    #[error("store version mismatch: found {found}, expected {expected}")]
    VersionMismatch { found: String, expected: String },
    #[error("manifest mismatch: {0}")]
    ManifestMismatch(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
