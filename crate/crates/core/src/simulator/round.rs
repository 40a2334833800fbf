use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Result, SimError};
use crate::planner::GroupPlan;
use crate::routing::RoutePlan;
use crate::sync_filter::{aggregate_and_filter, passthrough_stats, AggregatorState, FilterStats, Update};
use crate::topology::LatencyMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundKind {
    Baseline,
    Grouped,
    /// Grouped mode that fell back to direct exchange after an aggregator failure.
    Fallback,
    /// Direct exchange inside each side of a partition.
    Partitioned,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub gather_ms: f64,
    pub inter_ms: f64,
    pub scatter_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkStat {
    pub src: usize,
    pub dst: usize,
    pub msgs: u64,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundResult {
    pub round: usize,
    pub t_ms: u64,
    pub kind: RoundKind,
    pub makespan_ms: f64,
    pub stage_ms: StageTimes,
    /// Planner objective of the plan in use, scored on this round's matrix.
    pub objective_ms: Option<f64>,
    /// Messages sent plus received per node.
    pub per_node_msgs: Vec<u64>,
    /// Logical links; relayed traffic is booked on its endpoints.
    pub links: Vec<LinkStat>,
    pub bytes: u64,
    /// Bytes on aggregator-to-aggregator links, or on every link when the
    /// round is exchanged directly.
    pub inter_bytes: u64,
    pub filter: FilterStats,
    /// Index into the report's plan list.
    pub plan_index: Option<usize>,
    pub relayed_routes: usize,
    pub late_updates: usize,
    pub events: Vec<String>,
}

impl RoundResult {
    pub fn total_msgs(&self) -> u64 {
        self.links.iter().map(|l| l.msgs).sum()
    }
}

#[derive(Debug, Default)]
pub(crate) struct Traffic {
    per_node: Vec<u64>,
    links: BTreeMap<(usize, usize), (u64, u64)>,
    inter_bytes: u64,
}

impl Traffic {
    pub(crate) fn new(n: usize) -> Self {
        Traffic { per_node: vec![0; n], ..Default::default() }
    }

    fn send(&mut self, src: usize, dst: usize, bytes: u64, inter: bool) {
        self.per_node[src] += 1;
        self.per_node[dst] += 1;
        let slot = self.links.entry((src, dst)).or_default();
        slot.0 += 1;
        slot.1 += bytes;
        if inter {
            self.inter_bytes += bytes;
        }
    }

    pub(crate) fn into_result(self, kind: RoundKind, stage_ms: StageTimes, filter: FilterStats) -> RoundResult {
        let links: Vec<LinkStat> =
            self.links.into_iter().map(|((src, dst), (msgs, bytes))| LinkStat { src, dst, msgs, bytes }).collect();
        RoundResult {
            round: 0,
            t_ms: 0,
            kind,
            makespan_ms: stage_ms.gather_ms + stage_ms.inter_ms + stage_ms.scatter_ms,
            stage_ms,
            objective_ms: None,
            per_node_msgs: self.per_node,
            bytes: links.iter().map(|l| l.bytes).sum(),
            links,
            inter_bytes: self.inter_bytes,
            filter,
            plan_index: None,
            relayed_routes: 0,
            late_updates: 0,
            events: Vec::new(),
        }
    }
}

pub(crate) fn payload(batch: &[Update]) -> u64 {
    batch.iter().map(Update::payload_bytes).sum()
}

/// Every node in `nodes` sends its batch straight to every other; returns the
/// slowest transfer.
pub(crate) fn flat_exchange(m: &LatencyMatrix, nodes: &[usize], node_bytes: &[u64], t: &mut Traffic) -> f64 {
    let mut makespan = 0.0f64;
    for &i in nodes {
        for &j in nodes {
            if i != j {
                makespan = makespan.max(m.get(i, j));
                t.send(i, j, node_bytes[i], true);
            }
        }
    }
    makespan
}

/// Flat all-to-all: one direct message per ordered pair, no screening.
pub fn baseline_round(m: &LatencyMatrix, batches: &[Vec<Update>]) -> Result<RoundResult> {
    let n = m.n();
    if n < 2 {
        return Err(SimError::Config(format!("need at least 2 nodes, got {n}")));
    }
    if batches.len() != n {
        return Err(SimError::Config(format!("{} batches for {n} nodes", batches.len())));
    }
    let bytes: Vec<u64> = batches.iter().map(|b| payload(b)).collect();
    let nodes: Vec<usize> = (0..n).collect();
    let mut t = Traffic::new(n);
    let inter = flat_exchange(m, &nodes, &bytes, &mut t);
    Ok(t.into_result(RoundKind::Baseline, StageTimes { inter_ms: inter, ..Default::default() }, FilterStats::default()))
}

/// Gather at aggregators, screen, exchange between aggregators over `routes`,
/// scatter back. `states` holds one screening state per group; `None`
/// forwards everything.
pub fn grouped_round(
    m: &LatencyMatrix,
    plan: &GroupPlan,
    routes: &RoutePlan,
    batches: &[Vec<Update>],
    states: Option<&mut [AggregatorState]>,
) -> Result<(RoundResult, Vec<Vec<Update>>)> {
    let live = vec![true; m.n()];
    grouped_exchange(m, plan, routes, batches, &live, states)
}

pub(crate) fn grouped_exchange(
    m: &LatencyMatrix,
    plan: &GroupPlan,
    routes: &RoutePlan,
    batches: &[Vec<Update>],
    live: &[bool],
    mut states: Option<&mut [AggregatorState]>,
) -> Result<(RoundResult, Vec<Vec<Update>>)> {
    let n = m.n();
    if plan.n() != n || batches.len() != n {
        return Err(SimError::Config(format!("plan has {} nodes, matrix {n}, batches {}", plan.n(), batches.len())));
    }
    if states.as_ref().is_some_and(|s| s.len() != plan.k) {
        return Err(SimError::Config("one aggregator state per group required".into()));
    }
    let groups: Vec<Vec<usize>> = (0..plan.k).map(|g| plan.members(g)).collect();
    let mut t = Traffic::new(n);
    let mut stages = StageTimes::default();
    let mut stats = FilterStats::default();
    let mut kept = Vec::with_capacity(plan.k);

    for (g, members) in groups.iter().enumerate() {
        let agg = plan.aggregators[g];
        let mut input = Vec::new();
        for &i in members {
            if !live[i] {
                continue;
            }
            if i != agg {
                stages.gather_ms = stages.gather_ms.max(m.get(i, agg));
                t.send(i, agg, payload(&batches[i]), false);
            }
            input.extend(batches[i].iter().cloned());
        }
        let (out, s) = match states.as_deref_mut() {
            Some(states) => aggregate_and_filter(&input, &mut states[g]).map_err(SimError::Workload)?,
            None => {
                let s = passthrough_stats(&input);
                (input, s)
            }
        };
        stats += s;
        kept.push(out);
    }

    let kept_bytes: Vec<u64> = kept.iter().map(|k| payload(k)).collect();
    for (ga, &a) in plan.aggregators.iter().enumerate() {
        for &b in &plan.aggregators {
            if a == b {
                continue;
            }
            let route =
                routes.get(a, b).ok_or_else(|| SimError::Config(format!("route plan has no entry for {a}->{b}")))?;
            stages.inter_ms = stages.inter_ms.max(route.effective_ms);
            t.send(a, b, kept_bytes[ga], true);
        }
    }

    let all_kept: u64 = kept_bytes.iter().sum();
    for (g, members) in groups.iter().enumerate() {
        let agg = plan.aggregators[g];
        for &i in members {
            if i == agg || !live[i] {
                continue;
            }
            stages.scatter_ms = stages.scatter_ms.max(m.get(agg, i));
            let own: u64 = kept[g].iter().filter(|u| u.origin == i).map(Update::payload_bytes).sum();
            t.send(agg, i, all_kept - own, false);
        }
    }

    Ok((t.into_result(RoundKind::Grouped, stages, stats), kept))
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;
    use crate::planner::fixtures::clustered4;
    use crate::routing::{build_route_plan, direct_route_plan, DEFAULT_MIN_GAIN};
    use crate::sync_filter::{WorkloadConfig, WorkloadGenerator};

    fn empty(n: usize) -> Vec<Vec<Update>> {
        vec![Vec::new(); n]
    }

    #[test]
    fn baseline_clustered() {
        let r = baseline_round(&clustered4(), &empty(4)).unwrap();
        assert_eq!(r.makespan_ms, 300.0);
        assert_eq!(r.stage_ms, StageTimes { gather_ms: 0.0, inter_ms: 300.0, scatter_ms: 0.0 });
        assert_eq!(r.per_node_msgs, vec![6; 4]);
        assert_eq!(r.total_msgs(), 12);
    }

    #[test]
    fn baseline_two_nodes_and_uniform() {
        let m = LatencyMatrix::uniform(2, 10.0).unwrap();
        let r = baseline_round(&m, &empty(2)).unwrap();
        assert_eq!((r.makespan_ms, r.per_node_msgs.clone()), (10.0, vec![2, 2]));
        let m = LatencyMatrix::uniform(6, 42.0).unwrap();
        assert_eq!(baseline_round(&m, &empty(6)).unwrap().makespan_ms, 42.0);
        assert!(baseline_round(&LatencyMatrix::uniform(1, 0.0).unwrap(), &empty(1)).is_err());
    }

    #[test]
    fn grouped_clustered_is_110() {
        let m = clustered4();
        let plan = GroupPlan::from_parts(vec![0, 0, 1, 1], vec![0, 2]).unwrap();
        let routes = build_route_plan(&m, &plan, DEFAULT_MIN_GAIN);
        let (r, _) = grouped_round(&m, &plan, &routes, &empty(4), None).unwrap();
        assert_eq!(r.stage_ms, StageTimes { gather_ms: 5.0, inter_ms: 100.0, scatter_ms: 5.0 });
        assert_eq!(r.makespan_ms, 110.0);
        assert_eq!(r.per_node_msgs, vec![4, 2, 4, 2]);
    }

    #[test]
    fn five_nodes_in_groups_of_three_and_two() {
        let m = LatencyMatrix::uniform(5, 10.0).unwrap();
        let plan = GroupPlan::from_parts(vec![0, 0, 0, 1, 1], vec![0, 3]).unwrap();
        let routes = direct_route_plan(&m, &plan);
        let (r, _) = grouped_round(&m, &plan, &routes, &empty(5), None).unwrap();
        assert_eq!(r.per_node_msgs, vec![6, 2, 2, 4, 2]);
        assert!(r.per_node_msgs.iter().all(|&c| c <= 8));
    }

    #[test]
    fn singleton_groups_degenerate_to_direct_exchange() {
        let m = clustered4();
        let plan = GroupPlan::from_owner_map(&[0, 1, 2, 3]).unwrap();
        let (r, _) = grouped_round(&m, &plan, &direct_route_plan(&m, &plan), &empty(4), None).unwrap();
        assert_eq!((r.stage_ms.gather_ms, r.stage_ms.scatter_ms), (0.0, 0.0));
        assert_eq!(r.makespan_ms, baseline_round(&m, &empty(4)).unwrap().makespan_ms);
    }

    #[test]
    fn screening_cuts_inter_bytes_only() {
        let m = clustered4();
        let plan = GroupPlan::from_parts(vec![0, 0, 1, 1], vec![0, 2]).unwrap();
        let routes = direct_route_plan(&m, &plan);
        let cfg = WorkloadConfig { conflict_ratio: 0.25, dup_ratio: 0.1, ..Default::default() };
        let mut g = WorkloadGenerator::new(cfg, 4).unwrap();
        let all = g.generate_epoch(0, &[0, 1, 2, 3]);
        let mut batches = empty(4);
        for u in all {
            batches[u.origin].push(u);
        }
        let mut states = vec![AggregatorState::new(0, HashMap::new()); 2];
        let (filtered, kept) = grouped_round(&m, &plan, &routes, &batches, Some(&mut states)).unwrap();
        let (plain, _) = grouped_round(&m, &plan, &routes, &batches, None).unwrap();
        let base = baseline_round(&m, &batches).unwrap();
        assert!(filtered.inter_bytes < plain.inter_bytes);
        assert!(plain.inter_bytes <= base.inter_bytes);
        assert_eq!(filtered.filter.bytes_out, kept.iter().map(|k| payload(k)).sum::<u64>());
        assert_eq!(filtered.filter.conflicting, 10);
        assert_eq!(filtered.filter.redundant, 4);
    }
}
