use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};

use super::update::BASE_VERSION;
use super::{FilterError, Result, Update, WriteEntry};
use crate::rng::{self, Purpose};

/// Per-key payload size, drawn uniformly from `[min_bytes, max_bytes]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PayloadDist {
    pub min_bytes: u64,
    pub max_bytes: u64,
}

impl PayloadDist {
    pub fn fixed(bytes: u64) -> Self {
        PayloadDist { min_bytes: bytes, max_bytes: bytes }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkloadConfig {
    pub updates_per_node: usize,
    pub keys: u64,
    /// Zipf exponent over keys; 0 is uniform.
    pub zipf_theta: f64,
    /// Each update writes between 1 and this many distinct keys.
    pub max_writes: usize,
    pub reads: usize,
    pub payload: PayloadDist,
    /// Fraction of an epoch's transactions planted with a stale read.
    pub conflict_ratio: f64,
    /// Extra re-deliveries, as a fraction of the epoch's transactions.
    pub dup_ratio: f64,
    pub null_ratio: f64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            updates_per_node: 10,
            keys: 10_000,
            zipf_theta: 0.9,
            max_writes: 2,
            reads: 2,
            payload: PayloadDist { min_bytes: 256, max_bytes: 1024 },
            conflict_ratio: 0.0,
            dup_ratio: 0.0,
            null_ratio: 0.0,
        }
    }
}

impl WorkloadConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.conflict_ratio) || !unit(self.dup_ratio) || !unit(self.null_ratio) {
            return Err(FilterError::Config("ratios must lie in [0, 1]"));
        }
        if self.conflict_ratio + self.null_ratio > 1.0 {
            return Err(FilterError::Config("conflict and null ratios exceed 1 together"));
        }
        if self.zipf_theta.is_nan() || self.zipf_theta < 0.0 {
            return Err(FilterError::Config("zipf theta must be non-negative"));
        }
        if self.max_writes == 0 || self.keys < self.max_writes.max(self.reads) as u64 {
            return Err(FilterError::Config("key space too small for the writes and reads per update"));
        }
        if self.payload.min_bytes == 0 || self.payload.min_bytes > self.payload.max_bytes {
            return Err(FilterError::Config("payload range must satisfy 1 <= min <= max"));
        }
        if self.keys > 1 << 40 {
            return Err(FilterError::Config("key space too large"));
        }
        Ok(())
    }
}

/// Version written by the `seq`-th transaction of `origin` in `epoch`.
/// Later epochs always win, and versions never collide across origins.
pub fn write_version(epoch: u64, origin: usize, seq: usize) -> u64 {
    ((epoch + 1) << 40) | ((origin as u64) << 20) | seq as u64
}

/// Seeded update stream. Each epoch draws from its own RNG stream, and
/// non-planted reads observe the newest version this generator has issued,
/// so only planted transactions can fail validation.
#[derive(Debug, Clone)]
pub struct WorkloadGenerator {
    config: WorkloadConfig,
    seed: u64,
    next_txn: u64,
    issued: HashMap<u64, u64>,
}

impl WorkloadGenerator {
    pub fn new(config: WorkloadConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(WorkloadGenerator { config, seed, next_txn: 0, issued: HashMap::new() })
    }

    pub fn config(&self) -> &WorkloadConfig {
        &self.config
    }

    /// Updates for `epoch` from each of `origins`, grouped by origin in the
    /// given order. Within an origin, re-deliveries follow the originals.
    pub fn generate_epoch(&mut self, epoch: u64, origins: &[usize]) -> Vec<Update> {
        let cfg = self.config.clone();
        let mut r = rng::stream(self.seed, Purpose::Workload, epoch);
        let zipf = Zipf::new(cfg.keys as f64, cfg.zipf_theta).expect("validated zipf parameters");
        let total = origins.len() * cfg.updates_per_node;
        let planted = |ratio: f64| ((ratio * total as f64).round() as usize).min(total);

        let mut order: Vec<usize> = (0..total).collect();
        order.shuffle(&mut r);
        let n_conflict = planted(cfg.conflict_ratio);
        let n_null = planted(cfg.null_ratio).min(total - n_conflict);
        let mut kind = vec![Kind::Clean; total];
        for &slot in &order[..n_conflict] {
            kind[slot] = Kind::Conflict;
        }
        for &slot in &order[n_conflict..n_conflict + n_null] {
            kind[slot] = Kind::Null;
        }

        let mut out = Vec::with_capacity(total);
        for (o, &origin) in origins.iter().enumerate() {
            for seq in 0..cfg.updates_per_node {
                let slot = o * cfg.updates_per_node + seq;
                out.push(self.transaction(&mut r, &zipf, epoch, origin, seq, kind[slot]));
            }
        }
        for u in &out {
            for (&k, w) in &u.write_set {
                let slot = self.issued.entry(k).or_insert(w.version);
                *slot = (*slot).max(w.version);
            }
        }

        let clean: Vec<usize> = (0..total).filter(|&i| kind[i] == Kind::Clean).collect();
        if !clean.is_empty() {
            for _ in 0..planted(cfg.dup_ratio) {
                let copy = out[clean[r.random_range(0..clean.len())]].clone();
                out.push(copy);
            }
        }
        let rank: HashMap<usize, usize> = origins.iter().enumerate().map(|(i, &o)| (o, i)).collect();
        out.sort_by_key(|u| rank[&u.origin]);
        out
    }

    fn transaction(
        &mut self,
        r: &mut ChaCha8Rng,
        zipf: &Zipf<f64>,
        epoch: u64,
        origin: usize,
        seq: usize,
        kind: Kind,
    ) -> Update {
        let cfg = &self.config;
        let txn_id = self.next_txn;
        self.next_txn += 1;

        let mut write_set = BTreeMap::new();
        if kind != Kind::Null {
            let count = r.random_range(1..=cfg.max_writes);
            let version = write_version(epoch, origin, seq);
            for key in distinct_keys(r, zipf, count) {
                let payload_bytes = r.random_range(cfg.payload.min_bytes..=cfg.payload.max_bytes);
                write_set.insert(key, WriteEntry { version, payload_bytes });
            }
        }
        let mut read_set: BTreeMap<u64, u64> = distinct_keys(r, zipf, cfg.reads)
            .into_iter()
            .map(|k| (k, self.issued.get(&k).copied().unwrap_or(BASE_VERSION)))
            .collect();
        if kind == Kind::Conflict {
            // nothing is ever committed below the base version
            let key = match read_set.keys().next() {
                Some(&k) => k,
                None => distinct_keys(r, zipf, 1)[0],
            };
            read_set.insert(key, BASE_VERSION - 1);
        }
        Update::new(txn_id, origin, epoch, write_set, read_set)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Clean,
    Conflict,
    Null,
}

fn distinct_keys(r: &mut ChaCha8Rng, zipf: &Zipf<f64>, count: usize) -> Vec<u64> {
    let mut keys = BTreeSet::new();
    while keys.len() < count {
        keys.insert(zipf.sample(r) as u64 - 1);
    }
    keys.into_iter().collect()
}
