use serde::{Deserialize, Serialize};

use super::{Result, SimError};
use crate::planner::{GroupPlan, PlannerConfig};
use crate::routing::DEFAULT_MIN_GAIN;
use crate::sync_filter::WorkloadConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Baseline,
    Grouped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Failure {
    /// The node stops aggregating for one round; its group's traffic goes
    /// direct and the next round re-plans.
    AggregatorCrash {
        node: usize,
    },
    /// The node is down for one round: it originates nothing and receives its
    /// copies a round late.
    NodeCrash {
        node: usize,
    },
    /// Traffic between different groups is held back until a heal.
    Partition {
        groups: Vec<Vec<usize>>,
    },
    Heal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureEvent {
    pub round: usize,
    #[serde(flatten)]
    pub failure: Failure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub rounds: usize,
    pub round_interval_ms: u64,
    pub mode: Mode,
    pub planner: PlannerConfig,
    /// Starting plan; when absent the planner builds one from the first matrix.
    pub plan: Option<GroupPlan>,
    pub min_gain: f64,
    /// Relay inter-aggregator traffic over single-hop detours.
    pub tiv_routing: bool,
    /// Screen white data at aggregators; otherwise they forward everything.
    pub filter: bool,
    /// Re-plan on sustained latency drift.
    pub regroup: bool,
    pub workload: WorkloadConfig,
    /// Probability that a transaction's first transmission is lost and only
    /// arrives through a retransmission, missing its epoch.
    pub loss_rate: f64,
    pub retransmit_timeout_ms: f64,
    pub failures: Vec<FailureEvent>,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            rounds: 100,
            round_interval_ms: 10,
            mode: Mode::Grouped,
            planner: PlannerConfig::default(),
            plan: None,
            min_gain: DEFAULT_MIN_GAIN,
            tiv_routing: true,
            filter: true,
            regroup: true,
            workload: WorkloadConfig::default(),
            loss_rate: 0.0,
            retransmit_timeout_ms: 200.0,
            failures: Vec::new(),
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |msg: String| Err(SimError::Config(msg));
        if self.rounds == 0 {
            return bad("rounds must be at least 1".into());
        }
        if n < 2 {
            return bad(format!("need at least 2 nodes, trace has {n}"));
        }
        if !(0.0..1.0).contains(&self.min_gain) {
            return bad("min_gain must lie in [0, 1)".into());
        }
        if !(0.0..=1.0).contains(&self.loss_rate) {
            return bad("loss_rate must lie in [0, 1]".into());
        }
        if !self.retransmit_timeout_ms.is_finite() || self.retransmit_timeout_ms < 0.0 {
            return bad("retransmit timeout must be finite and non-negative".into());
        }
        self.planner.validate().map_err(SimError::Plan)?;
        self.workload.validate().map_err(SimError::Workload)?;
        if let Some(p) = &self.plan {
            if p.n() != n {
                return bad(format!("plan covers {} nodes, trace has {n}", p.n()));
            }
        }
        for ev in &self.failures {
            match &ev.failure {
                Failure::AggregatorCrash { node } | Failure::NodeCrash { node } if *node >= n => {
                    return bad(format!("failure at round {} names node {node} of {n}", ev.round));
                }
                Failure::Partition { groups } if groups.iter().flatten().any(|&i| i >= n) => {
                    return bad(format!("partition at round {} names a node outside 0..{n}", ev.round));
                }
                _ => {}
            }
        }
        Ok(())
    }
}
