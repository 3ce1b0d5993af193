//! The untrusted side of the encrypted database.
//!
//! Everything here operates on ciphertexts only: stored tables, the two
//! comparison UDFs, the `Split` helper for fuzzy-encoded strings and an
//! interpreter for [`CipherPlan`]s. Nothing in this crate can see key
//! material; plans carry only anonymized names, ciphertexts, equality
//! thresholds and precomputed partition boundaries.

mod cell;
mod error;
mod exec;
mod plan;
mod serde_dec;
mod store;
mod udf;

pub use cell::{CipherCell, Slot, StorageKind};
pub use error::CloudError;
pub use exec::{execute_plan, execute_read, EncryptedResultSet, ExecOutcome};
pub use plan::{
    AggFunc, AggSpec, AssignValue, CipherPlan, CmpKind, CountOperand, InsertSource, JoinKind,
    MatchAtom, MatchProgram, MatchSegment, Operand, PlanOutput, Pred, SegmentAnchor, SetOpKind,
    SortKey, Step, SumTarget, SumTargets, Test,
};
pub use store::{load_store, save_store, ColumnDef, EncryptedStore, EncryptedTable};
pub use udf::{compare_cells, equality_com, split_encoded, sum_equality_com, FUZZY_DELIMITER};

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, CloudError>;
