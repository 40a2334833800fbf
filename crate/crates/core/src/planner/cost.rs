use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use super::{PlanError, Result};

/// Per-round message counts of the hierarchical scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub intra_msgs: f64,
    pub inter_msgs: f64,
    pub total_msgs: f64,
}

/// `2n(n/k - 1)` intra-group plus `2k(k - 1)` inter-group messages, with
/// `n/k` taken as a real number.
pub fn cost_model(n: usize, k: usize) -> Result<CostBreakdown> {
    if k == 0 || k > n {
        return Err(PlanError::KOutOfRange { k, n });
    }
    let (nf, kf) = (n as f64, k as f64);
    let intra_msgs = 2.0 * nf * (nf / kf - 1.0);
    let inter_msgs = 2.0 * kf * (kf - 1.0);
    Ok(CostBreakdown { intra_msgs, inter_msgs, total_msgs: intra_msgs + inter_msgs })
}

/// Continuous optimum of [`cost_model`] and the integer group counts worth searching.
#[derive(Debug, Clone, PartialEq)]
pub struct KStar {
    pub value: f64,
    pub range: RangeInclusive<usize>,
}

pub fn k_star(n: usize) -> Result<KStar> {
    if n < 2 {
        return Err(PlanError::TooFewNodes(n));
    }
    let nf = n as f64;
    let value = (nf * nf / 2.0).cbrt();
    let floor_k = value.floor() as i64;
    let (lo, hi): (i64, i64) = match n {
        0..=3 => (1, n as i64),
        4..=13 => ((n / 3) as i64, n.div_ceil(2) as i64),
        14..=25 => (floor_k, n.div_ceil(2) as i64),
        26..=50 => (floor_k, (n / 3) as i64),
        51..=100 => (floor_k - 2, (n / 3) as i64),
        _ => (floor_k - 3, (n / 3) as i64),
    };
    let lo = lo.clamp(1, n as i64) as usize;
    let hi = (hi.clamp(1, n as i64) as usize).max(lo);
    Ok(KStar { value, range: lo..=hi })
}
