//! Latency-aware group planning.
//!
//! A [`GroupPlan`] splits the nodes into `k` groups, each with one aggregator.
//! Plans are scored with [`objective_t`]: the worst member-to-aggregator
//! latency plus the worst aggregator-to-aggregator latency. [`solve_exact`]
//! finds the optimum for small clusters, [`solve_kcenter`] is the
//! farthest-point heuristic for large ones, and [`auto_plan`] searches the
//! recommended group counts around [`k_star`].

mod cost;
mod damping;
mod exact;
mod kcenter;
mod plan;

pub use cost::{cost_model, k_star, CostBreakdown, KStar};
pub use damping::{should_regroup, Observation, PairSample, RegroupMonitor};
pub use exact::solve_exact;
pub use kcenter::{kcenter_radius, solve_kcenter, symmetric_distance};
pub use plan::{objective_t, pair_cost, GroupPlan, GroupSpec};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::LatencyMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("group count {k} out of range for {n} nodes")]
    KOutOfRange { k: usize, n: usize },
    #[error("{n} nodes exceed the exact solver limit of {max}; use the k-center solver")]
    TooLargeForExact { n: usize, max: usize },
    #[error("plan covers {plan} nodes but the matrix has {matrix}")]
    SizeMismatch { plan: usize, matrix: usize },
    #[error("invalid plan: {0}")]
    Invalid(String),
    #[error("k* needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("invalid planner config: {0}")]
    Config(&'static str),
}

pub type Result<T> = std::result::Result<T, PlanError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KMode {
    Fixed(usize),
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Exact,
    Kcenter,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub k_mode: KMode,
    pub solver: Solver,
    pub max_exact_n: usize,
    /// Relative latency deviation that counts towards re-grouping.
    pub damping_threshold: f64,
    /// Consecutive observations the deviation must persist for.
    pub damping_window: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            k_mode: KMode::Auto,
            solver: Solver::Exact,
            max_exact_n: 12,
            damping_threshold: 0.20,
            damping_window: 5,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_exact_n < 2 {
            return Err(PlanError::Config("max_exact_n must be at least 2"));
        }
        if self.damping_threshold.is_nan() || self.damping_threshold <= 0.0 {
            return Err(PlanError::Config("damping_threshold must be positive"));
        }
        if self.damping_window == 0 {
            return Err(PlanError::Config("damping_window must be at least 1"));
        }
        Ok(())
    }
}

/// Plans with exactly `k` groups using the configured solver; the exact
/// solver hands over to k-center above `max_exact_n` nodes.
pub fn solve(m: &LatencyMatrix, k: usize, config: &PlannerConfig) -> Result<GroupPlan> {
    match config.solver {
        Solver::Exact if m.n() <= config.max_exact_n => solve_exact(m, k, config),
        _ => solve_kcenter(m, k),
    }
}

/// Tries every group count in the recommended range and keeps the plan with
/// the lowest objective, preferring fewer groups on ties.
pub fn auto_plan(m: &LatencyMatrix, config: &PlannerConfig) -> Result<GroupPlan> {
    config.validate()?;
    let n = m.n();
    if n < 2 {
        return solve(m, 1, config);
    }
    let ks = k_star(n)?;
    let mut best: Option<GroupPlan> = None;
    for k in ks.range.clone() {
        let plan = solve(m, k, config)?;
        if best.as_ref().is_none_or(|b| plan.objective_ms < b.objective_ms) {
            best = Some(plan);
        }
    }
    Ok(best.expect("search range is never empty"))
}

/// Honors `config.k_mode`.
pub fn make_plan(m: &LatencyMatrix, config: &PlannerConfig) -> Result<GroupPlan> {
    config.validate()?;
    match config.k_mode {
        KMode::Fixed(k) => solve(m, k, config),
        KMode::Auto => auto_plan(m, config),
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use crate::topology::LatencyMatrix;

    /// Two tight pairs {0,1} and {2,3}: intra 5 ms, cross links 100/250/280/300.
    pub fn clustered4() -> LatencyMatrix {
        LatencyMatrix::new(vec![
            vec![0.0, 5.0, 100.0, 250.0],
            vec![5.0, 0.0, 280.0, 300.0],
            vec![100.0, 280.0, 0.0, 5.0],
            vec![250.0, 300.0, 5.0, 0.0],
        ])
        .unwrap()
    }
}
