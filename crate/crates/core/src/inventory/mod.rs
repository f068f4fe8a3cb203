//! Durable state: report portions and execution records, exported reports,
//! and the storage registry that carries manual input between executions.

mod registry;
mod report;
mod store;

pub use registry::{
    EffectiveStorage, EntryOrigin, EntryStatus, Overrides, Reconciled, Registry, RegistryEntry, RegistryError,
    Repository, REACTIVATED_NOTE,
};
pub use report::{
    summarize, CollectionSummary, DiscoveryReport, FailureSummary, ReportSummary, StorageState, StorageSummary,
    REPORT_SCHEMA,
};
pub use store::{
    check_payload, new_execution_id, AppendOutcome, ExecutionRecord, ExecutionState, InventoryStore, PortionStatus,
    ReportPortion, Stage, StoreError, Trigger,
};
