//! Exhaustive reference implementations for the test suites.
//!
//! These share objective and merge definitions with the production code and
//! differ only in how they search, so any disagreement is a search bug.

use std::collections::{BTreeSet, HashSet};

use crate::crdt::ReplicaState;
use crate::planner::{kcenter_radius, objective_t, GroupPlan};
use crate::sync_filter::Update;
use crate::topology::LatencyMatrix;

pub const MAX_PLAN_N: usize = 8;
pub const MAX_KCENTER_N: usize = 10;
pub const MAX_MERGE_UPDATES: usize = 6;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("{what} has {got} elements, oracle limit is {max}")]
    TooLarge { what: &'static str, got: usize, max: usize },
    #[error("k = {k} is outside 1..={n}")]
    KOutOfRange { k: usize, n: usize },
    #[error("max_dup must be at least 1")]
    ZeroDup,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult<W> {
    pub optimum: f64,
    pub witness: W,
    /// Candidates evaluated.
    pub evaluated: usize,
}

/// Minimum of `objective_t` over every partition of the nodes into `k`
/// non-empty blocks and every aggregator choice per block. Candidates are
/// visited in lexicographic (assignment, aggregators) order and only a strict
/// improvement replaces the incumbent.
pub fn enumerate_plans(m: &LatencyMatrix, k: usize) -> Result<OracleResult<GroupPlan>, OracleError> {
    let n = m.n();
    if n > MAX_PLAN_N {
        return Err(OracleError::TooLarge { what: "matrix", got: n, max: MAX_PLAN_N });
    }
    if k == 0 || k > n {
        return Err(OracleError::KOutOfRange { k, n });
    }
    let mut best: Option<OracleResult<GroupPlan>> = None;
    let mut evaluated = 0;
    for assignment in restricted_growth_strings(n, k) {
        let blocks: Vec<Vec<usize>> = (0..k).map(|g| (0..n).filter(|&i| assignment[i] == g).collect()).collect();
        let mut choice = vec![0usize; k];
        loop {
            let aggregators: Vec<usize> = (0..k).map(|g| blocks[g][choice[g]]).collect();
            let plan = GroupPlan::from_parts(assignment.clone(), aggregators).expect("enumerated plans are valid");
            let t = objective_t(m, &plan).expect("sizes match");
            evaluated += 1;
            if best.as_ref().is_none_or(|b| t < b.optimum) {
                best = Some(OracleResult { optimum: t, witness: plan, evaluated: 0 });
            }
            if !advance(&mut choice, |g| blocks[g].len()) {
                break;
            }
        }
    }
    let mut best = best.expect("k <= n admits a partition");
    best.witness.objective_ms = best.optimum;
    best.evaluated = evaluated;
    Ok(best)
}

/// Exact k-center radius over all center sets of size `k`; the witness is
/// the lexicographically first optimal set.
pub fn kcenter_opt(m: &LatencyMatrix, k: usize) -> Result<OracleResult<Vec<usize>>, OracleError> {
    let n = m.n();
    if n > MAX_KCENTER_N {
        return Err(OracleError::TooLarge { what: "matrix", got: n, max: MAX_KCENTER_N });
    }
    if k == 0 || k > n {
        return Err(OracleError::KOutOfRange { k, n });
    }
    let mut best: Option<OracleResult<Vec<usize>>> = None;
    let mut evaluated = 0;
    let mut set: Vec<usize> = (0..k).collect();
    loop {
        let r = kcenter_radius(m, &set);
        evaluated += 1;
        if best.as_ref().is_none_or(|b| r < b.optimum) {
            best = Some(OracleResult { optimum: r, witness: set.clone(), evaluated: 0 });
        }
        if !next_combination(&mut set, n) {
            break;
        }
    }
    let mut best = best.expect("at least one center set");
    best.evaluated = evaluated;
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeWitness {
    /// All delivery schedules produced the same state.
    pub consistent: bool,
    /// Digest of the first schedule's final state.
    pub digest: u64,
    pub distinct_states: usize,
}

/// Merges `updates` into a fresh replica under every permutation and every
/// multiplicity vector in `{1..=max_dup}^len` (copies delivered back to back)
/// and compares the final states. `optimum` is the number of distinct
/// final states and `evaluated` the number of schedules covered.
///
/// Merging is deterministic, so a schedule prefix that reaches a
/// (delivered set, replica state) pair seen before cannot lead anywhere new
/// and its subtree is counted without being walked.
pub fn enumerate_merge_orders(updates: &[Update], max_dup: usize) -> Result<OracleResult<MergeWitness>, OracleError> {
    if updates.len() > MAX_MERGE_UPDATES {
        return Err(OracleError::TooLarge { what: "update set", got: updates.len(), max: MAX_MERGE_UPDATES });
    }
    if max_dup == 0 {
        return Err(OracleError::ZeroDup);
    }
    let mut states = BTreeSet::new();
    let mut first = None;
    let mut evaluated = 0;
    let mut used = vec![false; updates.len()];
    let epoch = updates.iter().map(|u| u.epoch).max().unwrap_or(0);
    let mut start = ReplicaState::new();
    while start.epoch() < epoch {
        start.epoch_close(&[], Vec::new());
    }
    let mut walker = Walker { updates, max_dup, seen: HashSet::new(), skipped: 0 };
    walker.walk(&start, &mut used, &mut |s: &ReplicaState| {
        let d = s.digest();
        first.get_or_insert(d);
        states.insert(d);
        evaluated += 1;
    });
    evaluated += walker.skipped;
    Ok(OracleResult {
        optimum: states.len() as f64,
        witness: MergeWitness {
            consistent: states.len() == 1,
            digest: first.unwrap_or(0),
            distinct_states: states.len(),
        },
        evaluated,
    })
}

struct Walker<'a> {
    updates: &'a [Update],
    max_dup: usize,
    seen: HashSet<(Vec<bool>, ReplicaState)>,
    skipped: usize,
}

impl Walker<'_> {
    /// Schedules below a node with `left` undelivered updates.
    fn subtree(&self, left: usize) -> usize {
        (1..=left).map(|i| i * self.max_dup).product()
    }

    fn walk(&mut self, s: &ReplicaState, used: &mut [bool], leaf: &mut dyn FnMut(&ReplicaState)) {
        let left = used.iter().filter(|&&u| !u).count();
        if left == 0 {
            leaf(s);
            return;
        }
        if !self.seen.insert((used.to_vec(), s.clone())) {
            self.skipped += self.subtree(left);
            return;
        }
        for i in 0..self.updates.len() {
            if used[i] {
                continue;
            }
            used[i] = true;
            let mut next = s.clone();
            for _ in 0..self.max_dup {
                next.merge(&self.updates[i]);
                self.walk(&next, used, leaf);
            }
            used[i] = false;
        }
    }
}

/// All canonical labelings of `n` nodes with exactly `k` labels, in
/// lexicographic order.
fn restricted_growth_strings(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(i: usize, n: usize, k: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == n {
            if max + 1 == k {
                out.push(cur.clone());
            }
            return;
        }
        // labels still to open must fit in the remaining positions
        let opened = if i == 0 { 0 } else { max + 1 };
        if k - opened > n - i {
            return;
        }
        let top = if i == 0 { 0 } else { (max + 1).min(k - 1) };
        for g in 0..=top {
            cur.push(g);
            rec(i + 1, n, k, if i == 0 { 0 } else { max.max(g) }, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, 0, &mut Vec::with_capacity(n), &mut out);
    out
}

/// Odometer over `choice[g] < len(g)`; false once it wraps.
fn advance(choice: &mut [usize], len: impl Fn(usize) -> usize) -> bool {
    for g in (0..choice.len()).rev() {
        choice[g] += 1;
        if choice[g] < len(g) {
            return true;
        }
        choice[g] = 0;
    }
    false
}

fn next_combination(set: &mut [usize], n: usize) -> bool {
    let k = set.len();
    for i in (0..k).rev() {
        if set[i] < n - k + i {
            set[i] += 1;
            for j in i + 1..k {
                set[j] = set[j - 1] + 1;
            }
            return true;
        }
    }
    false
}
