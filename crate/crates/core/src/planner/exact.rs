use super::{pair_cost, GroupPlan, PlanError, PlannerConfig, Result};
use crate::topology::LatencyMatrix;

/// Exact minimizer of [`objective_t`](super::objective_t) over all partitions
/// into exactly `k` non-empty groups and all aggregator choices.
///
/// Once the aggregator set is fixed, sending every other node to its cheapest
/// aggregator minimizes the intra term, so the search branches over
/// aggregator sets in ascending index order. The inter term only grows as
/// aggregators are added, which bounds each branch against the best complete
/// set found so far.
///
/// Among optimal plans the one with the lexicographically smallest canonical
/// assignment wins, then the smallest aggregator vector.
pub fn solve_exact(m: &LatencyMatrix, k: usize, config: &PlannerConfig) -> Result<GroupPlan> {
    let n = m.n();
    if n > config.max_exact_n {
        return Err(PlanError::TooLargeForExact { n, max: config.max_exact_n });
    }
    if k == 0 || k > n {
        return Err(PlanError::KOutOfRange { k, n });
    }

    let mut search = Search { m, n, k, best: f64::INFINITY, optimal_sets: Vec::new(), chosen: Vec::with_capacity(k) };
    search.descend(0, 0.0);
    let Search { best, optimal_sets, .. } = search;

    let mut winner: Option<(Vec<usize>, Vec<usize>)> = None;
    for set in &optimal_sets {
        let inter = inter_term(m, set);
        let candidate = lexmin_assignment(m, set, inter, best);
        if winner.as_ref().is_none_or(|w| candidate < *w) {
            winner = Some(candidate);
        }
    }
    let (assignment, aggregators) = winner.expect("at least one aggregator set is feasible");
    let mut plan = GroupPlan::from_parts(assignment, aggregators)?;
    plan.objective_ms = best;
    Ok(plan)
}

fn inter_term(m: &LatencyMatrix, set: &[usize]) -> f64 {
    let mut inter = 0.0f64;
    for &u in set {
        for &v in set {
            if u != v {
                inter = inter.max(m.get(u, v));
            }
        }
    }
    inter
}

struct Search<'a> {
    m: &'a LatencyMatrix,
    n: usize,
    k: usize,
    best: f64,
    optimal_sets: Vec<Vec<usize>>,
    chosen: Vec<usize>,
}

impl Search<'_> {
    fn descend(&mut self, start: usize, inter: f64) {
        if self.chosen.len() == self.k {
            let mut intra = 0.0f64;
            for i in 0..self.n {
                let nearest = self.chosen.iter().map(|&a| pair_cost(self.m, i, a)).fold(f64::INFINITY, f64::min);
                intra = intra.max(nearest);
            }
            let t = intra + inter;
            if t < self.best {
                self.best = t;
                self.optimal_sets.clear();
                self.optimal_sets.push(self.chosen.clone());
            } else if t == self.best {
                self.optimal_sets.push(self.chosen.clone());
            }
            return;
        }
        let remaining = self.k - self.chosen.len();
        for a in start..=self.n - remaining {
            let mut next = inter;
            for &c in &self.chosen {
                next = next.max(self.m.get(a, c)).max(self.m.get(c, a));
            }
            // intra >= 0, so a set whose inter term alone exceeds the best is dead
            if next > self.best {
                continue;
            }
            self.chosen.push(a);
            self.descend(a + 1, next);
            self.chosen.pop();
        }
    }
}

/// Smallest canonical assignment (then aggregator vector) among all ways of
/// attaching nodes to the aggregators in `set` that keep the objective at `best`.
fn lexmin_assignment(m: &LatencyMatrix, set: &[usize], inter: f64, best: f64) -> (Vec<usize>, Vec<usize>) {
    let n = m.n();
    let feasible: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            if set.contains(&i) {
                vec![i]
            } else {
                set.iter().copied().filter(|&a| pair_cost(m, i, a) + inter <= best).collect()
            }
        })
        .collect();
    let mut label_of = vec![usize::MAX; n];
    let mut labels = Vec::with_capacity(n);
    let mut opened = Vec::with_capacity(set.len());
    let mut out = None;
    lexmin_from(0, &feasible, &mut label_of, &mut labels, &mut opened, &mut out);
    out.expect("every node has a feasible aggregator")
}

fn lexmin_from(
    i: usize,
    feasible: &[Vec<usize>],
    label_of: &mut [usize],
    labels: &mut Vec<usize>,
    opened: &mut Vec<usize>,
    best: &mut Option<(Vec<usize>, Vec<usize>)>,
) {
    if i == feasible.len() {
        let candidate = (labels.clone(), opened.clone());
        if best.as_ref().is_none_or(|b| candidate < *b) {
            *best = Some(candidate);
        }
        return;
    }
    // A prefix that already loses to the incumbent cannot recover.
    if let Some((b, _)) = best.as_ref() {
        if labels.as_slice() > &b[..labels.len()] {
            return;
        }
    }
    let existing = feasible[i].iter().map(|&a| label_of[a]).filter(|&l| l != usize::MAX).min();
    let fresh: Vec<usize> = feasible[i].iter().copied().filter(|&a| label_of[a] == usize::MAX).collect();
    // Joining an open group always beats opening a new label, and any node
    // can be completed because aggregators always belong to themselves.
    if let Some(l) = existing {
        labels.push(l);
        lexmin_from(i + 1, feasible, label_of, labels, opened, best);
        labels.pop();
        return;
    }
    for a in fresh {
        label_of[a] = opened.len();
        labels.push(opened.len());
        opened.push(a);
        lexmin_from(i + 1, feasible, label_of, labels, opened, best);
        opened.pop();
        labels.pop();
        label_of[a] = usize::MAX;
    }
}
