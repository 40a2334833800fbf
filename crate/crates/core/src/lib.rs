//! Planning and simulation toolkit for synchronization in geo-distributed
//! replicated databases.
//!
//! The crate is organized bottom-up:
//!
//! - [`topology`]: latency matrices, traces, PCHIP trace synthesis, TIV scan
//! - [`coords`]: Vivaldi network coordinates for large-N latency estimation
//! - [`planner`]: latency-aware grouping (exact and K-center), group-count
//!   guidance and re-group damping
//! - [`routing`]: single-relay detours between aggregators
//! - [`sync_filter`]: updates, workloads and white-data filtering
//! - [`crdt`]: epoch-scoped last-writer-wins merge with carryover
//! - [`simulator`]: deterministic baseline vs. grouped round simulation
//! - [`metrics`]: percentiles, CDFs, heatmaps and report comparison

pub mod coords;
pub mod crdt;
pub mod metrics;
pub mod planner;
pub mod rng;
pub mod routing;
pub mod simulator;
pub mod sync_filter;
pub mod topology;

#[cfg(any(test, feature = "oracles"))]
pub mod oracles;

pub use topology::{LatencyMatrix, LatencyTrace};
