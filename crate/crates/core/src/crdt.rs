//! Epoch-scoped last-writer-wins merge with delayed-update carryover.
//!
//! Every key is a register holding the write with the greatest
//! `(version, lower origin, lower txn_id)` rank, which makes merging a join:
//! the final map depends only on the set of updates merged, not on their
//! order or how often each one arrives.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::sync_filter::{digest64, Update, BASE_VERSION};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CrdtError {
    #[error("{0} must be non-negative and finite")]
    Negative(&'static str),
    #[error("partition lists node {0} more than once or out of range")]
    BadPartition(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Register {
    pub version: u64,
    pub origin: usize,
    pub txn_id: u64,
    pub payload_bytes: u64,
}

impl Register {
    fn rank(&self) -> (u64, Reverse<usize>, Reverse<u64>) {
        (self.version, Reverse(self.origin), Reverse(self.txn_id))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct ReplicaState {
    epoch: u64,
    committed: BTreeMap<u64, Register>,
    applied_txns: BTreeSet<u64>,
}

/// Result of closing one epoch at one replica.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochOutcome {
    pub epoch: u64,
    pub digest: u64,
    /// Committed map after the epoch's merges.
    pub snapshot: BTreeMap<u64, Register>,
    /// Late updates to be merged when the next epoch closes.
    pub carried_over: Vec<Update>,
    /// Transactions that failed read validation.
    pub aborted: Vec<u64>,
}

impl ReplicaState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn committed(&self) -> &BTreeMap<u64, Register> {
        &self.committed
    }

    pub fn version_of(&self, key: u64) -> u64 {
        self.committed.get(&key).map_or(BASE_VERSION, |r| r.version)
    }

    pub fn versions(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.committed.iter().map(|(&k, r)| (k, r.version))
    }

    pub fn applied(&self, txn_id: u64) -> bool {
        self.applied_txns.contains(&txn_id)
    }

    /// Joins `u` into the state. Re-merging a transaction already applied this
    /// epoch, or merging one from a later epoch, changes nothing; returns
    /// whether `u` was applied.
    pub fn merge(&mut self, u: &Update) -> bool {
        if u.epoch > self.epoch || !self.applied_txns.insert(u.txn_id) {
            return false;
        }
        for (&key, w) in &u.write_set {
            let incoming =
                Register { version: w.version, origin: u.origin, txn_id: u.txn_id, payload_bytes: w.payload_bytes };
            match self.committed.get_mut(&key) {
                Some(cur) if cur.rank() >= incoming.rank() => {}
                Some(cur) => *cur = incoming,
                None => {
                    if incoming.version >= BASE_VERSION {
                        self.committed.insert(key, incoming);
                    }
                }
            }
        }
        true
    }

    pub fn merged(mut self, u: &Update) -> Self {
        self.merge(u);
        self
    }

    /// Hash of the sorted committed map.
    pub fn digest(&self) -> u64 {
        let mut buf = Vec::with_capacity(self.committed.len() * 40);
        for (k, r) in &self.committed {
            buf.extend_from_slice(&k.to_le_bytes());
            buf.extend_from_slice(&r.version.to_le_bytes());
            buf.extend_from_slice(&(r.origin as u64).to_le_bytes());
            buf.extend_from_slice(&r.txn_id.to_le_bytes());
            buf.extend_from_slice(&r.payload_bytes.to_le_bytes());
        }
        digest64(&buf)
    }

    /// Validates `arrived` against the snapshot the epoch started from, merges
    /// the survivors, and moves to the next epoch. `late` is handed back for
    /// the next close.
    pub fn epoch_close(&mut self, arrived: &[Update], late: Vec<Update>) -> EpochOutcome {
        let mut aborted = Vec::new();
        let mut valid = Vec::with_capacity(arrived.len());
        for u in arrived {
            if u.epoch > self.epoch {
                continue;
            }
            if u.reads_stale(|k| self.version_of(k)) {
                if !aborted.contains(&u.txn_id) {
                    aborted.push(u.txn_id);
                }
            } else {
                valid.push(u);
            }
        }
        for u in valid {
            self.merge(u);
        }
        let outcome = EpochOutcome {
            epoch: self.epoch,
            digest: self.digest(),
            snapshot: self.committed.clone(),
            carried_over: late,
            aborted,
        };
        self.epoch += 1;
        self.applied_txns.clear();
        outcome
    }
}

/// Worst-case extra visibility delay of an update that missed its epoch.
pub fn visibility_delay_bound(tau_ms: f64, delta_wan_ms: f64) -> Result<f64, CrdtError> {
    if !tau_ms.is_finite() || tau_ms < 0.0 {
        return Err(CrdtError::Negative("tau"));
    }
    if !delta_wan_ms.is_finite() || delta_wan_ms < 0.0 {
        return Err(CrdtError::Negative("delta_wan"));
    }
    Ok(tau_ms + delta_wan_ms)
}

/// Updates from one or more origins for one epoch, as handed to a replica.
#[derive(Debug, Clone, PartialEq)]
pub struct Delivery {
    pub epoch: u64,
    /// Origins whose contribution to `epoch` is complete with this delivery.
    pub origins: Vec<usize>,
    pub updates: Vec<Update>,
    /// Updates that miss the epoch's cutoff and are carried to the next one.
    pub late: Vec<Update>,
}

#[derive(Debug, Clone, Default)]
struct PendingEpoch {
    waiting: BTreeSet<usize>,
    arrived: Vec<Update>,
    late: Vec<Update>,
}

/// A replica that closes each epoch only once every expected origin has
/// delivered, in epoch order.
#[derive(Debug, Clone, Default)]
pub struct Replica {
    state: ReplicaState,
    pending: BTreeMap<u64, PendingEpoch>,
    carried: Vec<Update>,
}

impl Replica {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn state(&self) -> &ReplicaState {
        &self.state
    }

    /// Registers the origins `epoch` must hear from before it can close.
    pub fn expect(&mut self, epoch: u64, origins: impl IntoIterator<Item = usize>) {
        let p = self.pending.entry(epoch).or_default();
        p.waiting.extend(origins);
    }

    pub fn deliver(&mut self, d: Delivery) {
        let p = self.pending.entry(d.epoch).or_default();
        for o in &d.origins {
            p.waiting.remove(o);
        }
        p.arrived.extend(d.updates);
        p.late.extend(d.late);
    }

    /// Closes every complete epoch at the front of the queue.
    pub fn close_ready(&mut self) -> Vec<EpochOutcome> {
        let mut out = Vec::new();
        while let Some(entry) = self.pending.first_entry() {
            if *entry.key() != self.state.epoch || !entry.get().waiting.is_empty() {
                break;
            }
            let p = entry.remove();
            let mut arrived = std::mem::take(&mut self.carried);
            arrived.extend(p.arrived);
            let outcome = self.state.epoch_close(&arrived, p.late);
            self.carried = outcome.carried_over.clone();
            out.push(outcome);
        }
        out
    }

    /// Epochs registered but not yet closed.
    pub fn withheld(&self) -> usize {
        self.pending.len()
    }
}

/// Holds deliveries that would cross a network partition until it heals.
#[derive(Debug, Clone)]
pub struct PartitionBuffer {
    side: Vec<usize>,
    held: Vec<(usize, Delivery)>,
}

impl PartitionBuffer {
    /// Nodes not listed in any group are isolated on their own.
    pub fn new(n: usize, groups: &[Vec<usize>]) -> Result<Self, CrdtError> {
        let mut side = vec![usize::MAX; n];
        for (g, members) in groups.iter().enumerate() {
            for &i in members {
                if i >= n || side[i] != usize::MAX {
                    return Err(CrdtError::BadPartition(i));
                }
                side[i] = g;
            }
        }
        for (next, s) in (groups.len()..).zip(side.iter_mut().filter(|s| **s == usize::MAX)) {
            *s = next;
        }
        Ok(PartitionBuffer { side, held: Vec::new() })
    }

    pub fn reachable(&self, a: usize, b: usize) -> bool {
        self.side[a] == self.side[b]
    }

    /// Members of `node`'s side, ascending.
    pub fn side_of(&self, node: usize) -> Vec<usize> {
        (0..self.side.len()).filter(|&j| self.side[j] == self.side[node]).collect()
    }

    /// Passes the delivery through when `from` can reach `to`, otherwise
    /// keeps it for [`heal`](Self::heal).
    pub fn admit(&mut self, from: usize, to: usize, d: Delivery) -> Option<Delivery> {
        if self.reachable(from, to) {
            Some(d)
        } else {
            self.held.push((to, d));
            None
        }
    }

    pub fn held(&self) -> usize {
        self.held.len()
    }

    /// Everything held, in the order it was buffered.
    pub fn heal(self) -> Vec<(usize, Delivery)> {
        self.held
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::enumerate_merge_orders;
    use crate::sync_filter::WriteEntry;

    fn upd(txn: u64, origin: usize, epoch: u64, writes: &[(u64, u64)]) -> Update {
        let ws = writes.iter().map(|&(k, v)| (k, WriteEntry { version: v, payload_bytes: 8 })).collect();
        Update::new(txn, origin, epoch, ws, BTreeMap::new())
    }

    #[test]
    fn merge_is_idempotent() {
        let u = upd(1, 0, 0, &[(1, 5)]);
        let once = ReplicaState::new().merged(&u);
        assert_eq!(once.clone().merged(&u), once);
    }

    #[test]
    fn older_version_does_not_overwrite() {
        let s = ReplicaState::new().merged(&upd(1, 0, 0, &[(1, 7)])).merged(&upd(2, 0, 0, &[(1, 5)]));
        assert_eq!(s.version_of(1), 7);
        assert_eq!(s.committed()[&1].txn_id, 1);
    }

    #[test]
    fn version_ties_prefer_lower_origin_then_txn() {
        let a = upd(9, 1, 0, &[(1, 5)]);
        let b = upd(4, 2, 0, &[(1, 5)]);
        let c = upd(3, 1, 0, &[(1, 5)]);
        for order in [[&a, &b, &c], [&c, &b, &a], [&b, &a, &c]] {
            let mut s = ReplicaState::new();
            for u in order {
                s.merge(u);
            }
            assert_eq!(s.committed()[&1].txn_id, 3);
        }
    }

    #[test]
    fn three_updates_all_orders_agree() {
        let us = vec![upd(1, 0, 0, &[(1, 5), (2, 6)]), upd(2, 1, 0, &[(1, 6)]), upd(3, 2, 0, &[(2, 6), (3, 2)])];
        let r = enumerate_merge_orders(&us, 2).unwrap();
        assert!(r.witness.consistent);
        assert_eq!(r.evaluated, 6 * 8);
    }

    #[test]
    fn future_epochs_are_ignored() {
        let mut s = ReplicaState::new();
        assert!(!s.merge(&upd(1, 0, 1, &[(1, 5)])));
        assert!(s.committed().is_empty());
    }

    #[test]
    fn stale_readers_abort_at_close() {
        let mut s = ReplicaState::new().merged(&upd(1, 0, 0, &[(1, 5)]));
        s.epoch_close(&[], Vec::new());
        let mut stale = upd(2, 0, 1, &[(2, 9)]);
        stale.read_set.insert(1, 3);
        let fresh = upd(3, 0, 1, &[(3, 9)]);
        let out = s.epoch_close(&[stale, fresh], Vec::new());
        assert_eq!(out.aborted, vec![2]);
        assert!(!s.committed().contains_key(&2));
        assert!(s.committed().contains_key(&3));
    }

    #[test]
    fn delayed_update_lands_in_the_next_epoch() {
        let on_time = upd(1, 0, 0, &[(1, 5)]);
        let delayed = upd(2, 1, 0, &[(2, 5)]);
        let mut r = Replica::new();
        r.expect(0, [0, 1]);
        r.deliver(Delivery { epoch: 0, origins: vec![0, 1], updates: vec![on_time], late: vec![delayed] });
        let first = r.close_ready();
        assert_eq!(first.len(), 1);
        assert!(first[0].snapshot.contains_key(&1));
        assert!(!first[0].snapshot.contains_key(&2));
        assert_eq!(first[0].carried_over.len(), 1);

        r.expect(1, []);
        let second = r.close_ready();
        assert_eq!(second[0].epoch, 1);
        assert!(second[0].snapshot.contains_key(&2));
    }

    #[test]
    fn replicas_agree_whatever_the_arrival_order() {
        let us: Vec<Update> = (0..8).map(|i| upd(i, (i % 3) as usize, 0, &[(i % 4, 10 + i % 2)])).collect();
        let mut digests = BTreeSet::new();
        for rot in 0..5 {
            let mut arrived = us.clone();
            arrived.rotate_left(rot);
            if rot % 2 == 1 {
                arrived.reverse();
            }
            let mut s = ReplicaState::new();
            digests.insert(s.epoch_close(&arrived, Vec::new()).digest);
        }
        assert_eq!(digests.len(), 1);
    }

    #[test]
    fn epochs_wait_for_every_origin_in_order() {
        let mut r = Replica::new();
        r.expect(0, [0, 1]);
        r.expect(1, [0]);
        r.deliver(Delivery { epoch: 1, origins: vec![0], updates: vec![upd(5, 0, 1, &[(1, 9)])], late: vec![] });
        r.deliver(Delivery { epoch: 0, origins: vec![0], updates: vec![upd(1, 0, 0, &[(1, 5)])], late: vec![] });
        assert!(r.close_ready().is_empty());
        assert_eq!(r.withheld(), 2);
        r.deliver(Delivery { epoch: 0, origins: vec![1], updates: vec![], late: vec![] });
        let closed = r.close_ready();
        assert_eq!(closed.iter().map(|o| o.epoch).collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(r.state().version_of(1), 9);
    }

    #[test]
    fn partition_buffer_holds_cross_traffic() {
        let mut p = PartitionBuffer::new(4, &[vec![0, 1], vec![2]]).unwrap();
        assert!(p.reachable(0, 1));
        assert!(!p.reachable(0, 2));
        assert!(!p.reachable(2, 3));
        assert_eq!(p.side_of(1), vec![0, 1]);
        let d = Delivery { epoch: 0, origins: vec![0], updates: vec![], late: vec![] };
        assert!(p.admit(0, 1, d.clone()).is_some());
        assert!(p.admit(0, 2, d.clone()).is_none());
        assert_eq!(p.heal(), vec![(2, d)]);
        assert_eq!(PartitionBuffer::new(2, &[vec![0], vec![0]]).unwrap_err(), CrdtError::BadPartition(0));
    }

    #[test]
    fn bound_is_tau_plus_delta() {
        assert_eq!(visibility_delay_bound(200.0, 300.0), Ok(500.0));
        assert_eq!(visibility_delay_bound(0.0, 0.0), Ok(0.0));
        assert!(visibility_delay_bound(-1.0, 0.0).is_err());
    }
}
