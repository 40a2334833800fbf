use serde::{Deserialize, Serialize};

use super::{PlanError, Result};
use crate::topology::LatencyMatrix;

/// A partition of the nodes into `k` non-empty groups with one aggregator each.
///
/// Group labels are canonical: node 0 is in group 0 and group `g + 1` first
/// appears after group `g` when scanning nodes in index order.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupPlan {
    pub k: usize,
    /// Node index -> group label.
    pub assignment: Vec<usize>,
    /// Group label -> aggregator node.
    pub aggregators: Vec<usize>,
    pub objective_ms: f64,
}

/// Cost of serving member `i` from aggregator `a`: the slower direction.
#[inline]
pub fn pair_cost(m: &LatencyMatrix, i: usize, a: usize) -> f64 {
    m.get(i, a).max(m.get(a, i))
}

impl GroupPlan {
    /// Builds a canonical plan from a node -> aggregator-node map. Aggregator
    /// nodes must map to themselves.
    pub fn from_owner_map(owner: &[usize]) -> Result<Self> {
        let n = owner.len();
        if n == 0 {
            return Err(PlanError::Invalid("plan has no nodes".into()));
        }
        for (i, &a) in owner.iter().enumerate() {
            if a >= n {
                return Err(PlanError::Invalid(format!("node {i} maps to unknown aggregator {a}")));
            }
            if owner[a] != a {
                return Err(PlanError::Invalid(format!("aggregator {a} of node {i} is not in its own group")));
            }
        }
        let mut label_of = vec![usize::MAX; n];
        let mut aggregators = Vec::new();
        let mut assignment = Vec::with_capacity(n);
        for &a in owner {
            if label_of[a] == usize::MAX {
                label_of[a] = aggregators.len();
                aggregators.push(a);
            }
            assignment.push(label_of[a]);
        }
        Ok(GroupPlan { k: aggregators.len(), assignment, aggregators, objective_ms: 0.0 })
    }

    /// Validates arbitrary labels and relabels them canonically.
    pub fn from_parts(assignment: Vec<usize>, aggregators: Vec<usize>) -> Result<Self> {
        let n = assignment.len();
        let k = aggregators.len();
        if k == 0 || k > n {
            return Err(PlanError::KOutOfRange { k, n });
        }
        let mut owner = vec![0; n];
        for (i, &g) in assignment.iter().enumerate() {
            if g >= k {
                return Err(PlanError::Invalid(format!("node {i} assigned to unknown group {g}")));
            }
            owner[i] = aggregators[g];
        }
        for (g, &a) in aggregators.iter().enumerate() {
            if a >= n || assignment[a] != g {
                return Err(PlanError::Invalid(format!("aggregator {a} is not a member of group {g}")));
            }
        }
        Self::from_owner_map(&owner)
    }

    /// Sets `objective_ms` from `m`.
    pub fn scored(mut self, m: &LatencyMatrix) -> Result<Self> {
        self.objective_ms = objective_t(m, &self)?;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    pub fn aggregator_of(&self, node: usize) -> usize {
        self.aggregators[self.assignment[node]]
    }

    pub fn is_aggregator(&self, node: usize) -> bool {
        self.aggregator_of(node) == node
    }

    /// Members of group `g` in ascending order, aggregator included.
    pub fn members(&self, g: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.assignment[i] == g).collect()
    }

    /// Number of non-aggregator members of group `g`.
    pub fn simple_members(&self, g: usize) -> usize {
        self.members(g).len() - 1
    }

    pub fn groups(&self) -> Vec<GroupSpec> {
        (0..self.k).map(|g| GroupSpec { aggregator: self.aggregators[g], members: self.members(g) }).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plan serializes")
    }
}

/// One group in the plan JSON layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub aggregator: usize,
    pub members: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct PlanJson {
    k: usize,
    groups: Vec<GroupSpec>,
    objective_ms: f64,
}

impl Serialize for GroupPlan {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PlanJson { k: self.k, groups: self.groups(), objective_ms: self.objective_ms }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for GroupPlan {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let raw = PlanJson::deserialize(d)?;
        if raw.k != raw.groups.len() {
            return Err(D::Error::custom(format!("k = {} but {} groups listed", raw.k, raw.groups.len())));
        }
        let n: usize = raw.groups.iter().map(|g| g.members.len()).sum();
        let mut assignment = vec![usize::MAX; n];
        for (g, spec) in raw.groups.iter().enumerate() {
            if spec.members.is_empty() {
                return Err(D::Error::custom(format!("group {g} is empty")));
            }
            for &i in &spec.members {
                if i >= n || assignment[i] != usize::MAX {
                    return Err(D::Error::custom(format!("node {i} is out of range or listed twice")));
                }
                assignment[i] = g;
            }
        }
        let aggregators = raw.groups.iter().map(|g| g.aggregator).collect();
        let mut plan = GroupPlan::from_parts(assignment, aggregators).map_err(D::Error::custom)?;
        plan.objective_ms = raw.objective_ms;
        Ok(plan)
    }
}

/// Worst member-to-aggregator latency (both directions) plus worst
/// aggregator-to-aggregator latency. Singleton groups contribute 0 to the
/// first term and a single group has no second term.
pub fn objective_t(m: &LatencyMatrix, plan: &GroupPlan) -> Result<f64> {
    if plan.n() != m.n() {
        return Err(PlanError::SizeMismatch { plan: plan.n(), matrix: m.n() });
    }
    let mut intra = 0.0f64;
    for i in 0..plan.n() {
        intra = intra.max(pair_cost(m, i, plan.aggregator_of(i)));
    }
    let mut inter = 0.0f64;
    for &u in &plan.aggregators {
        for &v in &plan.aggregators {
            if u != v {
                inter = inter.max(m.get(u, v));
            }
        }
    }
    Ok(intra + inter)
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::clustered4;
    use super::*;

    #[test]
    fn clustered_objective_is_105() {
        let plan = GroupPlan::from_parts(vec![0, 0, 1, 1], vec![0, 2]).unwrap();
        assert_eq!(objective_t(&clustered4(), &plan).unwrap(), 105.0);
    }

    #[test]
    fn all_singletons_score_worst_direct_link() {
        let plan = GroupPlan::from_owner_map(&[0, 1, 2, 3]).unwrap();
        assert_eq!(plan.k, 4);
        assert_eq!(objective_t(&clustered4(), &plan).unwrap(), 300.0);
    }

    #[test]
    fn single_group_has_no_inter_term() {
        let m = clustered4();
        for a in 0..4 {
            let plan = GroupPlan::from_owner_map(&[a; 4]).unwrap();
            let expected = (0..4).map(|i| pair_cost(&m, i, a)).fold(0.0, f64::max);
            assert_eq!(objective_t(&m, &plan).unwrap(), expected);
        }
    }

    #[test]
    fn canonical_relabeling() {
        let plan = GroupPlan::from_parts(vec![1, 1, 0, 0], vec![3, 0]).unwrap();
        assert_eq!(plan.assignment, vec![0, 0, 1, 1]);
        assert_eq!(plan.aggregators, vec![0, 3]);
        assert!(plan.is_aggregator(3));
        assert!(!plan.is_aggregator(2));
        assert_eq!(plan.simple_members(1), 1);
    }

    #[test]
    fn rejects_invalid_plans() {
        assert!(GroupPlan::from_parts(vec![0, 0, 1], vec![2, 0]).is_err());
        assert!(GroupPlan::from_parts(vec![0, 2, 1], vec![0, 1]).is_err());
        assert!(GroupPlan::from_parts(vec![0, 0], vec![]).is_err());
        assert!(GroupPlan::from_owner_map(&[1, 0]).is_err());
        let plan = GroupPlan::from_owner_map(&[0, 0, 0]).unwrap();
        assert!(matches!(objective_t(&clustered4(), &plan), Err(PlanError::SizeMismatch { .. })));
    }

    #[test]
    fn plan_json_layout() {
        let plan = GroupPlan::from_parts(vec![0, 0, 1, 1], vec![0, 2]).unwrap().scored(&clustered4()).unwrap();
        let json = plan.to_json();
        assert_eq!(
            json,
            r#"{"k":2,"groups":[{"aggregator":0,"members":[0,1]},{"aggregator":2,"members":[2,3]}],"objective_ms":105.0}"#
        );
        let back: GroupPlan = serde_json::from_str(&json).unwrap();
        assert_eq!(back, plan);
        assert!(serde_json::from_str::<GroupPlan>(
            r#"{"k":1,"groups":[{"aggregator":1,"members":[0]}],"objective_ms":0}"#
        )
        .is_err());
        assert!(serde_json::from_str::<GroupPlan>(
            r#"{"k":2,"groups":[{"aggregator":0,"members":[0,1]}],"objective_ms":0}"#
        )
        .is_err());
    }

    #[test]
    fn scaling_scales_objective() {
        let m = clustered4();
        let plan = GroupPlan::from_parts(vec![0, 1, 0, 1], vec![0, 1]).unwrap();
        let base = objective_t(&m, &plan).unwrap();
        let scaled = objective_t(&m.scaled(2.5).unwrap(), &plan).unwrap();
        assert!((scaled - 2.5 * base).abs() < 1e-9);
    }
}
