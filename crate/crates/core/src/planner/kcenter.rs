use super::{GroupPlan, PlanError, Result};
use crate::topology::LatencyMatrix;

/// Symmetrized distance used for clustering: the slower of the two directions.
#[inline]
pub fn symmetric_distance(m: &LatencyMatrix, i: usize, j: usize) -> f64 {
    m.get(i, j).max(m.get(j, i))
}

/// Largest distance from any node to its nearest center.
pub fn kcenter_radius(m: &LatencyMatrix, centers: &[usize]) -> f64 {
    (0..m.n())
        .map(|i| centers.iter().map(|&c| symmetric_distance(m, i, c)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

/// Farthest-point (Gonzalez) grouping.
///
/// The first center is the node with the smallest worst-case distance to the
/// others; each further center is the node farthest from its nearest center.
/// Every node joins its nearest center, ties going to the earlier center.
/// O(n·k) distance evaluations after the first pick.
pub fn solve_kcenter(m: &LatencyMatrix, k: usize) -> Result<GroupPlan> {
    let n = m.n();
    if k == 0 || k > n {
        return Err(PlanError::KOutOfRange { k, n });
    }

    let eccentricity = |i: usize| (0..n).map(|j| symmetric_distance(m, i, j)).fold(0.0, f64::max);
    let mut first = 0;
    let mut first_ecc = eccentricity(0);
    for i in 1..n {
        let e = eccentricity(i);
        if e < first_ecc {
            first = i;
            first_ecc = e;
        }
    }

    let mut centers = vec![first];
    let mut is_center = vec![false; n];
    is_center[first] = true;
    let mut nearest: Vec<(usize, f64)> = (0..n).map(|i| (0, symmetric_distance(m, i, first))).collect();

    while centers.len() < k {
        let mut pick = usize::MAX;
        let mut pick_dist = f64::NEG_INFINITY;
        for (i, &(_, d)) in nearest.iter().enumerate() {
            if !is_center[i] && d > pick_dist {
                pick = i;
                pick_dist = d;
            }
        }
        let label = centers.len();
        centers.push(pick);
        is_center[pick] = true;
        for (i, slot) in nearest.iter_mut().enumerate() {
            let d = symmetric_distance(m, i, pick);
            if d < slot.1 || i == pick {
                *slot = (label, d);
            }
        }
    }

    let owner: Vec<usize> = nearest.iter().map(|&(label, _)| centers[label]).collect();
    GroupPlan::from_owner_map(&owner)?.scored(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::kcenter_opt;
    use crate::rng::{self, Purpose};
    use rand::Rng;

    fn two_clusters() -> LatencyMatrix {
        // {0,1,2} and {3,4}
        let side = |i: usize| usize::from(i >= 3);
        LatencyMatrix::from_fn(
            5,
            |i, j| {
                if side(i) == side(j) {
                    4.0 + (i + j) as f64
                } else {
                    100.0 + 10.0 * (i * j) as f64
                }
            },
        )
        .unwrap()
    }

    #[test]
    fn separates_two_clusters() {
        let m = two_clusters();
        let plan = solve_kcenter(&m, 2).unwrap();
        assert_eq!(plan.assignment, vec![0, 0, 0, 1, 1]);
        let oracle = kcenter_opt(&m, 2).unwrap();
        assert_eq!(kcenter_radius(&m, &plan.aggregators), oracle.optimum);
    }

    #[test]
    fn single_group_uses_minimax_center() {
        let m = two_clusters();
        let plan = solve_kcenter(&m, 1).unwrap();
        assert_eq!(plan.k, 1);
        let ecc: Vec<f64> = (0..5).map(|i| (0..5).map(|j| symmetric_distance(&m, i, j)).fold(0.0, f64::max)).collect();
        let min = ecc.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(ecc[plan.aggregators[0]], min);
    }

    #[test]
    fn k_equals_n_and_errors() {
        let m = two_clusters();
        let plan = solve_kcenter(&m, 5).unwrap();
        assert_eq!(plan.k, 5);
        assert_eq!(kcenter_radius(&m, &plan.aggregators), 0.0);
        assert!(solve_kcenter(&m, 0).is_err());
        assert!(solve_kcenter(&m, 6).is_err());
    }

    #[test]
    fn within_twice_optimal_radius_on_metric_instances() {
        for seed in 0..30u64 {
            let mut r = rng::stream(seed, Purpose::KCenter, 0);
            let n = r.random_range(3..=9);
            let pts: Vec<(f64, f64)> =
                (0..n).map(|_| (r.random_range(0.0..100.0), r.random_range(0.0..100.0))).collect();
            let m = LatencyMatrix::from_fn(n, |i, j| (pts[i].0 - pts[j].0).hypot(pts[i].1 - pts[j].1)).unwrap();
            for k in 1..=n {
                let plan = solve_kcenter(&m, k).unwrap();
                let opt = kcenter_opt(&m, k).unwrap();
                assert!(kcenter_radius(&m, &plan.aggregators) <= 2.0 * opt.optimum + 1e-9);
            }
        }
    }
}
