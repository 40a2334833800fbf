use std::collections::{BTreeSet, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::round::{flat_exchange, grouped_exchange, payload, RoundKind, RoundResult, StageTimes, Traffic};
use super::{Failure, Mode, Result, SimConfig, SimError};
use crate::crdt::{visibility_delay_bound, Delivery, PartitionBuffer, Replica};
use crate::metrics;
use crate::planner::{make_plan, objective_t, GroupPlan, PairSample, RegroupMonitor};
use crate::rng::{self, Purpose};
use crate::routing::{build_route_plan, direct_route_plan, RoutePlan};
use crate::sync_filter::{AggregatorState, FilterStats, Update, WorkloadGenerator};
use crate::topology::{LatencyMatrix, LatencyTrace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub round: usize,
    pub reason: String,
    pub plan: GroupPlan,
    /// Routes as computed when the plan was adopted; later rounds re-route
    /// against their own matrix.
    pub routes: RoutePlan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochDigest {
    pub epoch: u64,
    /// Common digest once every replica closed the epoch.
    pub digest: Option<u64>,
    pub replicas_closed: usize,
    pub closed_in_round: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisibilitySample {
    pub epoch: u64,
    pub txn_id: u64,
    pub extra_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Visibility {
    pub tau_ms: f64,
    /// Largest round makespan seen in the run.
    pub delta_wan_ms: f64,
    pub bound_ms: f64,
    pub max_extra_ms: f64,
    pub violations: usize,
    pub samples: Vec<VisibilitySample>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub bytes: u64,
    pub inter_bytes: u64,
    pub msgs: u64,
    pub filtered_bytes: u64,
    pub filter: FilterStats,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MakespanSummary {
    pub mean: f64,
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub n: usize,
    pub config: SimConfig,
    pub plans: Vec<PlanRecord>,
    pub rounds: Vec<RoundResult>,
    pub totals: Totals,
    pub makespan: MakespanSummary,
    pub epochs: Vec<EpochDigest>,
    /// Digest shared by every replica at the end of the run, if they agree.
    pub final_digest: Option<u64>,
    /// Rounds that ended with some replica holding an unclosed epoch.
    pub stalled_rounds: usize,
    /// Most epochs any replica still had open at the end.
    pub withheld_epochs: usize,
    pub regroups: usize,
    pub visibility: Visibility,
}

impl SimReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn makespans(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.makespan_ms).collect()
    }

    /// One row per round.
    pub fn rounds_csv(&self) -> String {
        let mut out =
            String::from("round,kind,makespan_ms,gather_ms,inter_ms,scatter_ms,msgs,bytes_in,bytes_out,inter_bytes\n");
        for r in &self.rounds {
            let kind = serde_json::to_value(r.kind).expect("kind serializes");
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.round,
                kind.as_str().unwrap_or_default(),
                r.makespan_ms,
                r.stage_ms.gather_ms,
                r.stage_ms.inter_ms,
                r.stage_ms.scatter_ms,
                r.total_msgs(),
                r.filter.bytes_in,
                r.filter.bytes_out,
                r.inter_bytes
            ));
        }
        out
    }
}

struct ActivePlan {
    plan: GroupPlan,
    reference: LatencyMatrix,
    index: usize,
}

struct Sim<'a> {
    cfg: &'a SimConfig,
    n: usize,
    replicas: Vec<Replica>,
    partition: Option<PartitionBuffer>,
    /// Deliveries for nodes that were down, released next round.
    crashed_inbox: Vec<(usize, Delivery)>,
    epochs: Vec<EpochDigest>,
    digests: Vec<Vec<Option<u64>>>,
    plans: Vec<PlanRecord>,
    active: Option<ActivePlan>,
    monitor: RegroupMonitor,
    regroups: usize,
}

/// Replays `trace` round by round. Round `r` is epoch `r`, starts at
/// `r * round_interval_ms` and uses the trace matrix in force at that time.
pub fn run_simulation(trace: &LatencyTrace, cfg: &SimConfig) -> Result<SimReport> {
    let n = trace.n();
    cfg.validate(n)?;
    let mut gen = WorkloadGenerator::new(cfg.workload.clone(), cfg.seed).map_err(SimError::Workload)?;
    let mut sim = Sim {
        cfg,
        n,
        replicas: vec![Replica::new(); n],
        partition: None,
        crashed_inbox: Vec::new(),
        epochs: Vec::new(),
        digests: Vec::new(),
        plans: Vec::new(),
        active: None,
        monitor: RegroupMonitor::new(cfg.planner.damping_threshold, cfg.planner.damping_window),
        regroups: 0,
    };
    let mut rounds = Vec::with_capacity(cfg.rounds);
    let mut late_by_epoch: Vec<Vec<u64>> = Vec::with_capacity(cfg.rounds);
    let mut stalled_rounds = 0;
    let mut force_replan: Option<&'static str> = None;

    for r in 0..cfg.rounds {
        let t_ms = r as u64 * cfg.round_interval_ms;
        let m = trace.at(t_ms);
        let mut events = Vec::new();
        let mut crashed = BTreeSet::new();
        let mut failed_aggregator = None;

        for (to, d) in std::mem::take(&mut sim.crashed_inbox) {
            sim.replicas[to].deliver(d);
        }
        for ev in cfg.failures.iter().filter(|e| e.round == r) {
            match &ev.failure {
                Failure::Heal => {
                    sim.heal();
                    events.push("heal".to_string());
                }
                Failure::Partition { groups } => {
                    sim.heal();
                    sim.partition = Some(PartitionBuffer::new(n, groups).map_err(SimError::Partition)?);
                    events.push(format!("partition {groups:?}"));
                }
                Failure::NodeCrash { node } => {
                    crashed.insert(*node);
                    events.push(format!("node_crash {node}"));
                }
                Failure::AggregatorCrash { node } => {
                    failed_aggregator = Some(*node);
                    events.push(format!("aggregator_crash {node}"));
                }
            }
        }

        let origins: Vec<usize> = (0..n).filter(|i| !crashed.contains(i)).collect();
        let live: Vec<bool> = (0..n).map(|i| !crashed.contains(&i)).collect();
        let mut batches: Vec<Vec<Update>> = vec![Vec::new(); n];
        for u in gen.generate_epoch(r as u64, &origins) {
            batches[u.origin].push(u);
        }
        let late: Vec<BTreeSet<u64>> = batches
            .iter()
            .map(|b| {
                let mut ids = BTreeSet::new();
                for u in b {
                    if cfg.loss_rate > 0.0
                        && rng::stream(cfg.seed, Purpose::Loss, u.txn_id).random::<f64>() < cfg.loss_rate
                    {
                        ids.insert(u.txn_id);
                    }
                }
                ids
            })
            .collect();
        late_by_epoch.push(late.iter().flatten().copied().collect());
        let expected: Vec<usize> = (0..n).filter(|&i| !batches[i].is_empty()).collect();
        for rep in &mut sim.replicas {
            rep.expect(r as u64, expected.iter().copied());
        }

        let mut result = if sim.partition.is_some() {
            sim.partitioned_round(m, r, &batches, &late, &live)
        } else if cfg.mode == Mode::Baseline {
            sim.direct_round(m, r, &batches, &late, &live, RoundKind::Baseline)
        } else {
            let reason = force_replan.take();
            sim.ensure_plan(m, r, reason, &mut events)?;
            let active = sim.active.as_ref().expect("plan ensured");
            let plan = active.plan.clone();
            let plan_index = active.index;
            let aggregator_down = failed_aggregator.is_some_and(|a| plan.is_aggregator(a))
                || crashed.iter().any(|&c| plan.is_aggregator(c));
            if let Some(a) = failed_aggregator.filter(|&a| !plan.is_aggregator(a)) {
                events.push(format!("node {a} is not an aggregator, ignored"));
            }
            let mut res = if aggregator_down {
                events.push("fallback to direct exchange".to_string());
                force_replan = Some("failover");
                sim.direct_round(m, r, &batches, &late, &live, RoundKind::Fallback)
            } else {
                if !crashed.is_empty() {
                    force_replan = Some("node_crash");
                }
                let mut routes = if cfg.tiv_routing {
                    build_route_plan(m, &plan, cfg.min_gain)
                } else {
                    direct_route_plan(m, &plan)
                };
                for &c in &crashed {
                    routes = routes.without_relay(m, c);
                }
                sim.grouped(m, r, &plan, &routes, &batches, &late, &live)?
            };
            res.plan_index = Some(plan_index);
            res.objective_ms = Some(objective_t(m, &plan).map_err(SimError::Plan)?);
            res
        };

        let limit = 2 * (n as u64 - 1);
        if let Some(i) = result.per_node_msgs.iter().position(|&c| c > limit) {
            return Err(SimError::Invariant(format!(
                "round {r}: node {i} handled {} messages, limit {limit}",
                result.per_node_msgs[i]
            )));
        }
        if result.filter.bytes_out > result.filter.bytes_in {
            return Err(SimError::Invariant(format!("round {r}: screening produced bytes")));
        }

        sim.close_epochs(r)?;
        if sim.replicas.iter().any(|rep| rep.withheld() > 0) {
            stalled_rounds += 1;
        }
        result.round = r;
        result.t_ms = t_ms;
        result.late_updates = late.iter().map(BTreeSet::len).sum();
        result.events = events;
        rounds.push(result);
    }

    // nodes that were down in the last round still catch up
    for (to, d) in std::mem::take(&mut sim.crashed_inbox) {
        sim.replicas[to].deliver(d);
    }
    sim.close_epochs(cfg.rounds)?;

    let visibility = visibility(cfg, &rounds, &sim.epochs, &late_by_epoch)?;
    let finals: BTreeSet<u64> = sim.replicas.iter().map(|rep| rep.state().digest()).collect();
    let withheld_epochs = sim.replicas.iter().map(Replica::withheld).max().unwrap_or(0);
    let makespans: Vec<f64> = rounds.iter().map(|r| r.makespan_ms).collect();
    let mut totals = Totals::default();
    for r in &rounds {
        totals.bytes += r.bytes;
        totals.inter_bytes += r.inter_bytes;
        totals.msgs += r.total_msgs();
        totals.filter += r.filter;
    }
    totals.filtered_bytes = totals.filter.bytes_in - totals.filter.bytes_out;

    Ok(SimReport {
        n,
        config: cfg.clone(),
        plans: sim.plans,
        makespan: summarize(&makespans),
        rounds,
        totals,
        epochs: sim.epochs,
        final_digest: (finals.len() == 1).then(|| *finals.first().expect("one digest")),
        stalled_rounds,
        withheld_epochs,
        regroups: sim.regroups,
        visibility,
    })
}

fn summarize(makespans: &[f64]) -> MakespanSummary {
    let p = |q| metrics::percentile(makespans, q).expect("at least one round");
    MakespanSummary {
        mean: makespans.iter().sum::<f64>() / makespans.len() as f64,
        p50: p(0.5),
        p90: p(0.9),
        p99: p(0.99),
        max: makespans.iter().copied().fold(0.0, f64::max),
    }
}

/// Epoch `e` closes once its round completes, the last replica has closed it,
/// the previous epoch has closed, and every retransmission it waits for has
/// landed. An update that missed epoch `e` becomes visible when `e + 1`
/// closes; its extra delay is the gap between the two closes.
fn visibility(
    cfg: &SimConfig,
    rounds: &[RoundResult],
    epochs: &[EpochDigest],
    late: &[Vec<u64>],
) -> Result<Visibility> {
    let tau = cfg.retransmit_timeout_ms;
    let delta = rounds.iter().map(|r| r.makespan_ms).fold(0.0, f64::max);
    let bound = visibility_delay_bound(tau, delta).map_err(SimError::Partition)?;
    let finish = |r: usize| r as f64 * cfg.round_interval_ms as f64 + rounds[r].makespan_ms;

    let mut close: Vec<Option<f64>> = Vec::with_capacity(epochs.len());
    for (e, ep) in epochs.iter().enumerate() {
        let prev = if e == 0 { Some(0.0) } else { close[e - 1] };
        let value = match (prev, ep.closed_in_round) {
            (Some(prev), Some(cr)) => {
                let mut t = finish(e).max(prev);
                if cr > e && cr < rounds.len() {
                    t = t.max(finish(cr));
                }
                if e > 0 && !late[e - 1].is_empty() {
                    t = t.max(finish(e - 1) + tau);
                }
                Some(t)
            }
            _ => None,
        };
        close.push(value);
    }

    let mut samples = Vec::new();
    for (e, ids) in late.iter().enumerate() {
        if let (Some(Some(a)), Some(Some(b))) = (close.get(e), close.get(e + 1)) {
            samples.extend(ids.iter().map(|&txn_id| VisibilitySample { epoch: e as u64, txn_id, extra_ms: b - a }));
        }
    }
    let max_extra_ms = samples.iter().map(|s| s.extra_ms).fold(0.0, f64::max);
    let violations = samples.iter().filter(|s| s.extra_ms > bound + 1e-9).count();
    Ok(Visibility { tau_ms: tau, delta_wan_ms: delta, bound_ms: bound, max_extra_ms, violations, samples })
}

impl Sim<'_> {
    fn heal(&mut self) {
        if let Some(p) = self.partition.take() {
            for (to, d) in p.heal() {
                self.replicas[to].deliver(d);
            }
        }
    }

    /// Hands `d` from `from` to every replica, honoring partitions and
    /// crashed receivers.
    fn broadcast(&mut self, from: usize, d: Delivery, live: &[bool]) {
        for (to, &up) in live.iter().enumerate().take(self.n) {
            let copy = match self.partition.as_mut() {
                Some(p) => p.admit(from, to, d.clone()),
                None => Some(d.clone()),
            };
            if let Some(copy) = copy {
                if up {
                    self.replicas[to].deliver(copy);
                } else {
                    self.crashed_inbox.push((to, copy));
                }
            }
        }
    }

    fn deliver_direct(&mut self, r: usize, batches: &[Vec<Update>], late: &[BTreeSet<u64>], live: &[bool]) {
        for o in 0..self.n {
            if batches[o].is_empty() {
                continue;
            }
            let (late_u, on_time): (Vec<Update>, Vec<Update>) =
                batches[o].iter().cloned().partition(|u| late[o].contains(&u.txn_id));
            let d = Delivery { epoch: r as u64, origins: vec![o], updates: on_time, late: late_u };
            self.broadcast(o, d, live);
        }
    }

    fn direct_round(
        &mut self,
        m: &LatencyMatrix,
        r: usize,
        batches: &[Vec<Update>],
        late: &[BTreeSet<u64>],
        live: &[bool],
        kind: RoundKind,
    ) -> RoundResult {
        let nodes: Vec<usize> = (0..self.n).filter(|&i| live[i]).collect();
        let bytes: Vec<u64> = batches.iter().map(|b| payload(b)).collect();
        let mut t = Traffic::new(self.n);
        let makespan = flat_exchange(m, &nodes, &bytes, &mut t);
        self.deliver_direct(r, batches, late, live);
        t.into_result(kind, StageTimes { inter_ms: makespan, ..Default::default() }, FilterStats::default())
    }

    fn partitioned_round(
        &mut self,
        m: &LatencyMatrix,
        r: usize,
        batches: &[Vec<Update>],
        late: &[BTreeSet<u64>],
        live: &[bool],
    ) -> RoundResult {
        let p = self.partition.as_ref().expect("partition active");
        let mut sides: Vec<Vec<usize>> = Vec::new();
        for i in 0..self.n {
            if live[i] && !sides.iter().any(|s| s.contains(&i)) {
                sides.push(p.side_of(i).into_iter().filter(|&j| live[j]).collect());
            }
        }
        let bytes: Vec<u64> = batches.iter().map(|b| payload(b)).collect();
        let mut t = Traffic::new(self.n);
        let makespan = sides.iter().map(|s| flat_exchange(m, s, &bytes, &mut t)).fold(0.0, f64::max);
        self.deliver_direct(r, batches, late, live);
        t.into_result(
            RoundKind::Partitioned,
            StageTimes { inter_ms: makespan, ..Default::default() },
            FilterStats::default(),
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn grouped(
        &mut self,
        m: &LatencyMatrix,
        r: usize,
        plan: &GroupPlan,
        routes: &RoutePlan,
        batches: &[Vec<Update>],
        late: &[BTreeSet<u64>],
        live: &[bool],
    ) -> Result<RoundResult> {
        let mut states: Vec<AggregatorState> = plan
            .aggregators
            .iter()
            .map(|&a| AggregatorState::new(r as u64, self.replicas[a].state().versions().collect::<HashMap<_, _>>()))
            .collect();
        let states = self.cfg.filter.then_some(states.as_mut_slice());
        let (mut res, kept) = grouped_exchange(m, plan, routes, batches, live, states)?;
        for (g, kept) in kept.into_iter().enumerate() {
            let origins: Vec<usize> = plan.members(g).into_iter().filter(|&i| !batches[i].is_empty()).collect();
            if origins.is_empty() {
                continue;
            }
            let (late_u, on_time): (Vec<Update>, Vec<Update>) =
                kept.into_iter().partition(|u| late[u.origin].contains(&u.txn_id));
            let d = Delivery { epoch: r as u64, origins, updates: on_time, late: late_u };
            self.broadcast(plan.aggregators[g], d, live);
        }
        res.relayed_routes = routes.relayed();
        Ok(res)
    }

    fn ensure_plan(
        &mut self,
        m: &LatencyMatrix,
        r: usize,
        forced: Option<&'static str>,
        events: &mut Vec<String>,
    ) -> Result<()> {
        let reason = match (&self.active, forced) {
            (None, _) => Some("initial"),
            (Some(_), Some(why)) => Some(why),
            (Some(active), None) if self.cfg.regroup => {
                let obs = plan_link_samples(&active.plan, &active.reference, m);
                self.monitor.observe(obs).then_some("regroup")
            }
            _ => None,
        };
        let Some(reason) = reason else { return Ok(()) };
        let plan = match (&self.cfg.plan, reason) {
            (Some(p), "initial") => p.clone().scored(m).map_err(SimError::Plan)?,
            _ => make_plan(m, &self.cfg.planner).map_err(SimError::Plan)?,
        };
        if reason == "regroup" {
            self.regroups += 1;
        }
        if reason != "initial" {
            events.push(format!("replan ({reason})"));
        }
        let routes = if self.cfg.tiv_routing {
            build_route_plan(m, &plan, self.cfg.min_gain)
        } else {
            direct_route_plan(m, &plan)
        };
        let index = self.plans.len();
        self.plans.push(PlanRecord { round: r, reason: reason.to_string(), plan: plan.clone(), routes });
        self.active = Some(ActivePlan { plan, reference: m.clone(), index });
        self.monitor.reset();
        Ok(())
    }

    fn close_epochs(&mut self, r: usize) -> Result<()> {
        for (i, rep) in self.replicas.iter_mut().enumerate() {
            for out in rep.close_ready() {
                let e = out.epoch as usize;
                while self.epochs.len() <= e {
                    let epoch = self.epochs.len() as u64;
                    self.epochs.push(EpochDigest { epoch, digest: None, replicas_closed: 0, closed_in_round: None });
                    self.digests.push(vec![None; self.n]);
                }
                self.digests[e][i] = Some(out.digest);
                let rec = &mut self.epochs[e];
                rec.replicas_closed += 1;
                if rec.replicas_closed == self.n {
                    rec.closed_in_round = Some(r);
                    let distinct: BTreeSet<u64> = self.digests[e].iter().flatten().copied().collect();
                    if distinct.len() != 1 {
                        return Err(SimError::Invariant(format!("replicas disagree on the snapshot of epoch {e}")));
                    }
                    rec.digest = distinct.first().copied();
                }
            }
        }
        Ok(())
    }
}

/// Current vs. reference latency on every link the plan uses.
fn plan_link_samples(plan: &GroupPlan, reference: &LatencyMatrix, m: &LatencyMatrix) -> Vec<PairSample> {
    let mut out = Vec::new();
    let mut push = |src: usize, dst: usize| {
        out.push(PairSample { src, dst, baseline_ms: reference.get(src, dst), observed_ms: m.get(src, dst) });
    };
    for i in 0..plan.n() {
        let a = plan.aggregator_of(i);
        if a != i {
            push(i, a);
            push(a, i);
        }
    }
    for &a in &plan.aggregators {
        for &b in &plan.aggregators {
            if a != b {
                push(a, b);
            }
        }
    }
    out
}
