//! Update model, synthetic workloads and white-data screening at aggregators.
//!
//! White data is anything shipped that cannot change a receiver's state:
//! re-delivered content, transactions whose reads were already stale, and
//! updates with nothing to write.

mod filter;
mod update;
mod workload;

pub use filter::{aggregate_and_filter, classify, passthrough_stats, AggregatorState, Class, FilterStats};
pub(crate) use update::digest64;
pub use update::{read_jsonl, write_jsonl, Update, WriteEntry, BASE_VERSION};
pub use workload::{write_version, PayloadDist, WorkloadConfig, WorkloadGenerator};

#[derive(Debug, thiserror::Error)]
pub enum FilterError {
    #[error("update from epoch {update} offered to aggregator in epoch {state}")]
    EpochMismatch { update: u64, state: u64 },
    #[error("content hash of txn {0} does not match its write set")]
    HashMismatch(u64),
    #[error("null flag of txn {0} does not match its write set")]
    NullFlagMismatch(u64),
    #[error("workload line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("invalid workload config: {0}")]
    Config(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FilterError>;
