use serde::{Deserialize, Serialize};

use super::{LatencyMatrix, Result, TopologyError};

/// One ordered pair whose best single-relay detour beats the direct link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub src: usize,
    pub dst: usize,
    pub relay: usize,
    pub direct_ms: f64,
    pub relayed_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TivReport {
    pub violations: Vec<Violation>,
    pub violation_fraction: f64,
}

/// Best single relay for `src -> dst`, ties to the lowest relay index.
pub(crate) fn best_relay(
    m: &LatencyMatrix,
    src: usize,
    dst: usize,
    relays: impl IntoIterator<Item = usize>,
) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for r in relays {
        if r == src || r == dst {
            continue;
        }
        let via = m.get(src, r) + m.get(r, dst);
        match best {
            Some((br, bv)) if via > bv || (via == bv && r > br) => {}
            _ => best = Some((r, via)),
        }
    }
    best
}

/// Scans every ordered pair for a relay `r` with
/// `delay[i][r] + delay[r][j] < delay[i][j]`.
pub fn tiv_scan(m: &LatencyMatrix) -> Result<TivReport> {
    let n = m.n();
    if n < 3 {
        return Err(TopologyError::TooFewNodes(n));
    }
    let mut violations = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            if let Some((relay, relayed_ms)) = best_relay(m, i, j, 0..n) {
                let direct_ms = m.get(i, j);
                if relayed_ms < direct_ms {
                    violations.push(Violation { src: i, dst: j, relay, direct_ms, relayed_ms });
                }
            }
        }
    }
    let violation_fraction = violations.len() as f64 / (n * (n - 1)) as f64;
    Ok(TivReport { violations, violation_fraction })
}
