//! Round-based replay of flat all-to-all against grouped synchronization.
//!
//! A grouped round has three barrier stages: members send to their
//! aggregator, aggregators screen and exchange with each other, and
//! aggregators send the merged result back. Each node keeps a replica that
//! closes epochs with [`crate::crdt`], so every run also checks that the
//! replicas converge.

mod config;
mod round;
mod run;

pub use config::{Failure, FailureEvent, Mode, SimConfig};
pub use round::{baseline_round, grouped_round, LinkStat, RoundKind, RoundResult, StageTimes};
pub use run::{
    run_simulation, EpochDigest, MakespanSummary, PlanRecord, SimReport, Totals, Visibility, VisibilitySample,
};

use crate::crdt::CrdtError;
use crate::planner::PlanError;
use crate::sync_filter::FilterError;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Plan(PlanError),
    #[error(transparent)]
    Workload(FilterError),
    #[error(transparent)]
    Partition(CrdtError),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T> = std::result::Result<T, SimError>;
