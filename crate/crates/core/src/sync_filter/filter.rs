use std::collections::{HashMap, HashSet};
use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use super::update::BASE_VERSION;
use super::{FilterError, Result, Update};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Class {
    Live,
    Redundant,
    Conflicting,
    Null,
}

/// Per-aggregator screening state for one epoch.
#[derive(Debug, Clone, Default)]
pub struct AggregatorState {
    epoch: u64,
    committed_versions: HashMap<u64, u64>,
    seen_hashes: HashSet<u64>,
}

impl AggregatorState {
    pub fn new(epoch: u64, committed_versions: HashMap<u64, u64>) -> Self {
        AggregatorState { epoch, committed_versions, seen_hashes: HashSet::new() }
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    /// Moves to `epoch` with a fresh committed snapshot. Versions never move
    /// backwards; the hash set is cleared.
    pub fn begin_epoch(&mut self, epoch: u64, committed: impl IntoIterator<Item = (u64, u64)>) {
        self.epoch = epoch;
        for (k, v) in committed {
            let slot = self.committed_versions.entry(k).or_insert(v);
            *slot = (*slot).max(v);
        }
        self.seen_hashes.clear();
    }

    pub fn committed_version(&self, key: u64) -> u64 {
        self.committed_versions.get(&key).copied().unwrap_or(BASE_VERSION)
    }

    pub fn has_seen(&self, hash: u64) -> bool {
        self.seen_hashes.contains(&hash)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterStats {
    pub kept: u64,
    pub redundant: u64,
    pub conflicting: u64,
    pub null: u64,
    pub bytes_in: u64,
    pub bytes_out: u64,
}

impl FilterStats {
    pub fn total(&self) -> u64 {
        self.kept + self.redundant + self.conflicting + self.null
    }

    /// Share of input bytes that was dropped.
    pub fn white_byte_fraction(&self) -> f64 {
        if self.bytes_in == 0 {
            0.0
        } else {
            (self.bytes_in - self.bytes_out) as f64 / self.bytes_in as f64
        }
    }

    fn tally(&mut self, class: Class, bytes: u64) {
        self.bytes_in += bytes;
        match class {
            Class::Live => {
                self.kept += 1;
                self.bytes_out += bytes;
            }
            Class::Redundant => self.redundant += 1,
            Class::Conflicting => self.conflicting += 1,
            Class::Null => self.null += 1,
        }
    }
}

impl AddAssign for FilterStats {
    fn add_assign(&mut self, o: Self) {
        self.kept += o.kept;
        self.redundant += o.redundant;
        self.conflicting += o.conflicting;
        self.null += o.null;
        self.bytes_in += o.bytes_in;
        self.bytes_out += o.bytes_out;
    }
}

/// Null first, then duplicate content, then stale reads.
pub fn classify(u: &Update, state: &AggregatorState) -> Result<Class> {
    if u.epoch != state.epoch {
        return Err(FilterError::EpochMismatch { update: u.epoch, state: state.epoch });
    }
    Ok(if u.is_null {
        Class::Null
    } else if state.has_seen(u.content_hash) {
        Class::Redundant
    } else if u.reads_stale(|k| state.committed_version(k)) {
        Class::Conflicting
    } else {
        Class::Live
    })
}

/// Screens `updates` in arrival order and returns the live ones.
pub fn aggregate_and_filter(updates: &[Update], state: &mut AggregatorState) -> Result<(Vec<Update>, FilterStats)> {
    let mut kept = Vec::with_capacity(updates.len());
    let mut stats = FilterStats::default();
    for u in updates {
        let class = classify(u, state)?;
        stats.tally(class, u.payload_bytes());
        if class == Class::Live {
            state.seen_hashes.insert(u.content_hash);
            kept.push(u.clone());
        }
    }
    Ok((kept, stats))
}

/// Bookkeeping for a pass-through aggregator that forwards everything.
pub fn passthrough_stats(updates: &[Update]) -> FilterStats {
    let mut stats = FilterStats::default();
    for u in updates {
        stats.tally(Class::Live, u.payload_bytes());
    }
    stats
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::super::WriteEntry;
    use super::*;

    fn upd(txn: u64, key: u64, bytes: u64, reads: &[(u64, u64)]) -> Update {
        let ws = [(key, WriteEntry { version: 100 + txn, payload_bytes: bytes })].into();
        Update::new(txn, 0, 0, ws, reads.iter().copied().collect())
    }

    #[test]
    fn the_three_white_classes() {
        let mut state = AggregatorState::new(0, [(7, 5)].into());
        let null = Update::new(1, 0, 0, BTreeMap::new(), BTreeMap::new());
        assert_eq!(classify(&null, &state).unwrap(), Class::Null);
        let stale = upd(2, 1, 10, &[(7, 3)]);
        assert_eq!(classify(&stale, &state).unwrap(), Class::Conflicting);
        let fresh = upd(3, 1, 10, &[(7, 5)]);
        assert_eq!(classify(&fresh, &state).unwrap(), Class::Live);

        let (kept, stats) = aggregate_and_filter(&[fresh.clone(), fresh.clone()], &mut state).unwrap();
        assert_eq!(kept, vec![fresh.clone()]);
        assert_eq!((stats.kept, stats.redundant), (1, 1));
        assert_eq!(classify(&fresh, &state).unwrap(), Class::Redundant);
    }

    #[test]
    fn epoch_mismatch_is_an_error() {
        let state = AggregatorState::new(3, HashMap::new());
        assert!(matches!(classify(&upd(1, 1, 1, &[]), &state), Err(FilterError::EpochMismatch { .. })));
    }

    #[test]
    fn planted_conflicts_remove_their_bytes() {
        let mut state = AggregatorState::new(0, HashMap::new());
        let updates: Vec<Update> =
            (0..100).map(|i| upd(i, i, 1024, if i % 10 < 3 { &[(5000, 0)] } else { &[] })).collect();
        let (kept, stats) = aggregate_and_filter(&updates, &mut state).unwrap();
        assert_eq!(kept.len(), 70);
        assert_eq!(stats.conflicting, 30);
        assert_eq!(stats.bytes_in, 100 * 1024);
        assert_eq!(stats.bytes_out, 70 * 1024);
        assert_eq!(stats.total(), 100);
    }

    #[test]
    fn unique_clean_updates_pass_untouched() {
        let mut state = AggregatorState::new(0, HashMap::new());
        let updates: Vec<Update> = (0..20).map(|i| upd(i, i, 64, &[(i, BASE_VERSION)])).collect();
        let (kept, stats) = aggregate_and_filter(&updates, &mut state).unwrap();
        assert_eq!(kept, updates);
        assert_eq!(stats.bytes_in, stats.bytes_out);
        assert_eq!(passthrough_stats(&updates), stats);
    }

    #[test]
    fn epoch_boundary_clears_hashes_and_keeps_versions_monotone() {
        let mut state = AggregatorState::new(0, [(1, 9)].into());
        let u = upd(1, 2, 5, &[]);
        aggregate_and_filter(&[u], &mut state).unwrap();
        state.begin_epoch(1, [(1, 4), (2, 101)]);
        assert_eq!(state.committed_version(1), 9);
        assert_eq!(state.committed_version(2), 101);
        assert_eq!(state.committed_version(3), BASE_VERSION);
        let mut again = upd(1, 2, 5, &[]);
        again.epoch = 1;
        assert_eq!(classify(&again, &state).unwrap(), Class::Live);
    }
}
