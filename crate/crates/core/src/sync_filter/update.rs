use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{FilterError, Result};

/// Version every key holds before any update has been committed.
pub const BASE_VERSION: u64 = 1;

/// First eight bytes of SHA-256, big-endian.
pub(crate) fn digest64(data: &[u8]) -> u64 {
    let d = Sha256::digest(data);
    let mut head = [0u8; 8];
    head.copy_from_slice(&d[..8]);
    u64::from_be_bytes(head)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WriteEntry {
    pub version: u64,
    pub payload_bytes: u64,
}

/// One transaction's effects as shipped between replicas.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawUpdate")]
pub struct Update {
    pub txn_id: u64,
    pub origin: usize,
    pub epoch: u64,
    pub write_set: BTreeMap<u64, WriteEntry>,
    /// Key -> version observed when the transaction executed.
    pub read_set: BTreeMap<u64, u64>,
    pub content_hash: u64,
    pub is_null: bool,
}

#[derive(Deserialize)]
struct RawUpdate {
    txn_id: u64,
    origin: usize,
    epoch: u64,
    write_set: BTreeMap<u64, WriteEntry>,
    #[serde(default)]
    read_set: BTreeMap<u64, u64>,
    content_hash: Option<u64>,
    is_null: Option<bool>,
}

impl TryFrom<RawUpdate> for Update {
    type Error = FilterError;

    fn try_from(raw: RawUpdate) -> Result<Self> {
        let u = Update::new(raw.txn_id, raw.origin, raw.epoch, raw.write_set, raw.read_set);
        if raw.content_hash.is_some_and(|h| h != u.content_hash) {
            return Err(FilterError::HashMismatch(u.txn_id));
        }
        if raw.is_null.is_some_and(|b| b != u.is_null) {
            return Err(FilterError::NullFlagMismatch(u.txn_id));
        }
        Ok(u)
    }
}

impl Update {
    /// Derives `content_hash` and `is_null` from the write set.
    pub fn new(
        txn_id: u64,
        origin: usize,
        epoch: u64,
        write_set: BTreeMap<u64, WriteEntry>,
        read_set: BTreeMap<u64, u64>,
    ) -> Self {
        let content_hash = content_hash(&write_set);
        let is_null = write_set.values().all(|w| w.payload_bytes == 0);
        Update { txn_id, origin, epoch, write_set, read_set, content_hash, is_null }
    }

    pub fn payload_bytes(&self) -> u64 {
        self.write_set.values().map(|w| w.payload_bytes).sum()
    }

    /// OCC validation: true if some read observed an older version than the
    /// one `committed` reports for that key.
    pub fn reads_stale(&self, committed: impl Fn(u64) -> u64) -> bool {
        self.read_set.iter().any(|(&k, &seen)| seen < committed(k))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("update serializes")
    }
}

fn content_hash(write_set: &BTreeMap<u64, WriteEntry>) -> u64 {
    let mut buf = Vec::with_capacity(write_set.len() * 24);
    for (k, w) in write_set {
        buf.extend_from_slice(&k.to_le_bytes());
        buf.extend_from_slice(&w.version.to_le_bytes());
        buf.extend_from_slice(&w.payload_bytes.to_le_bytes());
    }
    digest64(&buf)
}

pub fn write_jsonl<W: Write>(updates: &[Update], mut out: W) -> Result<()> {
    for u in updates {
        writeln!(out, "{}", u.to_json())?;
    }
    Ok(())
}

/// Blank lines are skipped.
pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<Update>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let u = serde_json::from_str(&line).map_err(|e| FilterError::Parse { line: i + 1, source: e })?;
        out.push(u);
    }
    Ok(out)
}
