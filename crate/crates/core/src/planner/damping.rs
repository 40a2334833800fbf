use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

/// Planned vs. observed latency of one link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairSample {
    pub src: usize,
    pub dst: usize,
    pub baseline_ms: f64,
    pub observed_ms: f64,
}

impl PairSample {
    fn deviation(&self) -> Option<f64> {
        (self.baseline_ms > 0.0).then(|| (self.observed_ms - self.baseline_ms).abs() / self.baseline_ms)
    }
}

/// All link samples taken in one round.
pub type Observation = Vec<PairSample>;

/// True when some link deviated by more than `threshold` in each of the last
/// `window` observations. Links with a zero baseline are ignored.
pub fn should_regroup(history: &[Observation], threshold: f64, window: usize) -> bool {
    if window == 0 || history.len() < window {
        return false;
    }
    let deviating = |obs: &Observation| -> BTreeSet<(usize, usize)> {
        obs.iter().filter(|s| s.deviation().is_some_and(|d| d > threshold)).map(|s| (s.src, s.dst)).collect()
    };
    let mut recent = history[history.len() - window..].iter();
    let mut sustained = deviating(recent.next().expect("window >= 1"));
    for obs in recent {
        if sustained.is_empty() {
            break;
        }
        let now = deviating(obs);
        sustained.retain(|p| now.contains(p));
    }
    !sustained.is_empty()
}

/// Sliding-window re-group trigger.
#[derive(Debug, Clone)]
pub struct RegroupMonitor {
    threshold: f64,
    window: usize,
    history: VecDeque<Observation>,
}

impl RegroupMonitor {
    pub fn new(threshold: f64, window: usize) -> Self {
        RegroupMonitor { threshold, window, history: VecDeque::with_capacity(window) }
    }

    /// Records one round and reports whether re-grouping is due.
    pub fn observe(&mut self, obs: Observation) -> bool {
        if self.history.len() == self.window {
            self.history.pop_front();
        }
        self.history.push_back(obs);
        let slice: Vec<Observation> = self.history.iter().cloned().collect();
        should_regroup(&slice, self.threshold, self.window)
    }

    /// Forgets history, e.g. after a new plan was adopted.
    pub fn reset(&mut self) {
        self.history.clear();
    }
}
