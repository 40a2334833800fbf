//! Single-relay detours between aggregators.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::planner::GroupPlan;
use crate::topology::tiv::best_relay;
use crate::topology::LatencyMatrix;

pub const DEFAULT_MIN_GAIN: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Path {
    Direct,
    Via(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub src: usize,
    pub dst: usize,
    pub path: Path,
    pub effective_ms: f64,
}

impl Route {
    pub fn relay(&self) -> Option<usize> {
        match self.path {
            Path::Direct => None,
            Path::Via(r) => Some(r),
        }
    }
}

/// Routes for every ordered aggregator pair.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RoutePlan {
    routes: BTreeMap<(usize, usize), Route>,
}

impl RoutePlan {
    pub fn get(&self, src: usize, dst: usize) -> Option<&Route> {
        self.routes.get(&(src, dst))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Route> {
        self.routes.values()
    }

    pub fn len(&self) -> usize {
        self.routes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.routes.is_empty()
    }

    pub fn relayed(&self) -> usize {
        self.routes.values().filter(|r| r.path != Path::Direct).count()
    }

    /// Largest effective latency over all routes, 0 when there are none.
    pub fn max_effective_ms(&self) -> f64 {
        self.routes.values().map(|r| r.effective_ms).fold(0.0, f64::max)
    }
}

impl Serialize for RoutePlan {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.routes.values())
    }
}

impl<'de> Deserialize<'de> for RoutePlan {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let list = Vec::<Route>::deserialize(d)?;
        Ok(RoutePlan { routes: list.into_iter().map(|r| ((r.src, r.dst), r)).collect() })
    }
}

/// Picks the cheapest single relay when it beats the direct link by more than
/// `min_gain` (a fraction of the direct latency); otherwise the direct link.
pub fn best_path(
    m: &LatencyMatrix,
    src: usize,
    dst: usize,
    candidate_relays: impl IntoIterator<Item = usize>,
    min_gain: f64,
) -> Route {
    let direct = m.get(src, dst);
    match best_relay(m, src, dst, candidate_relays) {
        Some((r, via)) if via < (1.0 - min_gain) * direct => Route { src, dst, path: Path::Via(r), effective_ms: via },
        _ => Route { src, dst, path: Path::Direct, effective_ms: direct },
    }
}

/// Best path for every ordered aggregator pair, relaying through any node
/// other than the two endpoints.
pub fn build_route_plan(m: &LatencyMatrix, plan: &GroupPlan, min_gain: f64) -> RoutePlan {
    build_route_plan_with(plan, |a, b| best_path(m, a, b, 0..m.n(), min_gain))
}

/// Every aggregator pair on its direct link.
pub fn direct_route_plan(m: &LatencyMatrix, plan: &GroupPlan) -> RoutePlan {
    build_route_plan_with(plan, |a, b| Route { src: a, dst: b, path: Path::Direct, effective_ms: m.get(a, b) })
}

fn build_route_plan_with(plan: &GroupPlan, mut route: impl FnMut(usize, usize) -> Route) -> RoutePlan {
    let mut routes = BTreeMap::new();
    for &a in &plan.aggregators {
        for &b in &plan.aggregators {
            if a != b {
                routes.insert((a, b), route(a, b));
            }
        }
    }
    RoutePlan { routes }
}

impl RoutePlan {
    /// Replaces every route through `relay` with the direct link.
    pub fn without_relay(&self, m: &LatencyMatrix, relay: usize) -> RoutePlan {
        let mut out = self.clone();
        for r in out.routes.values_mut() {
            if r.relay() == Some(relay) {
                *r = Route { src: r.src, dst: r.dst, path: Path::Direct, effective_ms: m.get(r.src, r.dst) };
            }
        }
        out
    }
}
