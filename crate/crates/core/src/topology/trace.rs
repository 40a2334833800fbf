use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{LatencyMatrix, Pchip, Result, TopologyError};
use crate::rng::{self, Purpose};

/// A sequence of latency matrices indexed by strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyTrace {
    timestamps: Vec<u64>,
    matrices: Vec<LatencyMatrix>,
}

#[derive(Serialize, Deserialize)]
struct TraceLine {
    t_ms: u64,
    delay: Vec<Vec<f64>>,
}

impl LatencyTrace {
    pub fn new(timestamps: Vec<u64>, matrices: Vec<LatencyMatrix>) -> Result<Self> {
        if timestamps.is_empty() || timestamps.len() != matrices.len() {
            return Err(TopologyError::EmptyTrace);
        }
        let n = matrices[0].n();
        for i in 1..timestamps.len() {
            if timestamps[i] <= timestamps[i - 1] {
                return Err(TopologyError::TraceOrder(i + 1));
            }
            if matrices[i].n() != n {
                return Err(TopologyError::TraceShape { line: i + 1, got: matrices[i].n(), expected: n });
            }
        }
        Ok(LatencyTrace { timestamps, matrices })
    }

    /// A single-entry trace that holds `m` for all time.
    pub fn constant(m: LatencyMatrix) -> Self {
        LatencyTrace { timestamps: vec![0], matrices: vec![m] }
    }

    pub fn n(&self) -> usize {
        self.matrices[0].n()
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn timestamps(&self) -> &[u64] {
        &self.timestamps
    }

    pub fn matrices(&self) -> &[LatencyMatrix] {
        &self.matrices
    }

    /// The matrix in effect at `t_ms`: the latest sample at or before `t_ms`,
    /// or the first sample for earlier times.
    pub fn at(&self, t_ms: u64) -> &LatencyMatrix {
        let idx = self.timestamps.partition_point(|&ts| ts <= t_ms);
        &self.matrices[idx.saturating_sub(1)]
    }

    pub fn halved(&self) -> Self {
        LatencyTrace {
            timestamps: self.timestamps.clone(),
            matrices: self.matrices.iter().map(LatencyMatrix::halved).collect(),
        }
    }

    pub fn read_jsonl<R: BufRead>(source: R) -> Result<Self> {
        let mut timestamps = Vec::new();
        let mut matrices = Vec::new();
        for (idx, line) in source.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: TraceLine = serde_json::from_str(&line)?;
            let m = LatencyMatrix::new(parsed.delay)?;
            if let Some(first) = matrices.first() {
                let expected = LatencyMatrix::n(first);
                if m.n() != expected {
                    return Err(TopologyError::TraceShape { line: idx + 1, got: m.n(), expected });
                }
            }
            if let Some(&prev) = timestamps.last() {
                if parsed.t_ms <= prev {
                    return Err(TopologyError::TraceOrder(idx + 1));
                }
            }
            timestamps.push(parsed.t_ms);
            matrices.push(m);
        }
        Self::new(timestamps, matrices)
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for (t, m) in self.timestamps.iter().zip(&self.matrices) {
            let line = TraceLine { t_ms: *t, delay: m.rows().to_vec() };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("json is utf-8")
    }
}

/// Parameters for [`gen_trace`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceParams {
    pub knots_per_pair: usize,
    pub jitter_scale: f64,
    pub duration_ms: u64,
    pub step_ms: u64,
    pub seed: u64,
}

impl Default for TraceParams {
    fn default() -> Self {
        TraceParams { knots_per_pair: 8, jitter_scale: 0.1, duration_ms: 10_000, step_ms: 100, seed: 0 }
    }
}

/// Synthesizes a time-varying trace around `base`.
///
/// Each ordered pair gets `knots_per_pair` evenly spaced knots over
/// `[0, duration_ms]` with values `base · (1 + U(-jitter, jitter))`; a PCHIP
/// fit through the knots is sampled every `step_ms`. Because every PCHIP
/// interval stays between its endpoint values, samples never leave
/// `base · [1 - jitter, 1 + jitter]`.
#[allow(clippy::needless_range_loop)]
pub fn gen_trace(base: &LatencyMatrix, params: &TraceParams) -> Result<LatencyTrace> {
    if params.knots_per_pair < 2 {
        return Err(TopologyError::InvalidParam("knots_per_pair must be at least 2"));
    }
    if !(0.0..=1.0).contains(&params.jitter_scale) {
        return Err(TopologyError::InvalidParam("jitter_scale must lie in [0, 1]"));
    }
    if params.step_ms == 0 {
        return Err(TopologyError::InvalidParam("step_ms must be positive"));
    }
    if params.duration_ms == 0 {
        return Err(TopologyError::InvalidParam("duration_ms must be positive"));
    }

    let n = base.n();
    let knots = params.knots_per_pair;
    let duration = params.duration_ms as f64;
    let knot_times: Vec<f64> = (0..knots).map(|k| duration * k as f64 / (knots - 1) as f64).collect();
    let timestamps: Vec<u64> = (0..=params.duration_ms / params.step_ms).map(|s| s * params.step_ms).collect();

    let mut rows = vec![vec![vec![0.0; n]; n]; timestamps.len()];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let b = base.get(i, j);
            let mut rng = rng::stream(params.seed, Purpose::TraceKnots, (i * n + j) as u64);
            let pts: Vec<(f64, f64)> = knot_times
                .iter()
                .map(|&t| {
                    let u: f64 = rng.random_range(-1.0..=1.0);
                    (t, b * (1.0 + params.jitter_scale * u))
                })
                .collect();
            let curve = Pchip::fit(&pts)?;
            for (s, &t) in timestamps.iter().enumerate() {
                rows[s][i][j] = curve.eval(t as f64);
            }
        }
    }

    let matrices = rows.into_iter().map(LatencyMatrix::new).collect::<Result<Vec<_>>>()?;
    LatencyTrace::new(timestamps, matrices)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> LatencyMatrix {
        LatencyMatrix::new(vec![vec![0.0, 100.0, 40.0], vec![90.0, 0.0, 60.0], vec![35.0, 70.0, 0.0]]).unwrap()
    }

    #[test]
    fn zero_jitter_reproduces_base() {
        let p = TraceParams { jitter_scale: 0.0, duration_ms: 2_000, ..Default::default() };
        let t = gen_trace(&base(), &p).unwrap();
        assert_eq!(t.len(), 21);
        for m in t.matrices() {
            assert_eq!(m, &base());
        }
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let p = TraceParams { jitter_scale: 0.3, seed: 11, ..Default::default() };
        let a = gen_trace(&base(), &p).unwrap().to_jsonl_string();
        let b = gen_trace(&base(), &p).unwrap().to_jsonl_string();
        assert_eq!(a, b);
        let c = gen_trace(&base(), &TraceParams { seed: 12, ..p }).unwrap().to_jsonl_string();
        assert_ne!(a, c);
    }

    #[test]
    fn jitter_band_holds_for_every_sample() {
        let p = TraceParams { jitter_scale: 0.2, duration_ms: 10_000, step_ms: 10, seed: 3, ..Default::default() };
        let t = gen_trace(&base(), &p).unwrap();
        for m in t.matrices() {
            let v = m.get(0, 1);
            assert!((80.0..=120.0).contains(&v), "{v}");
            assert_eq!(m.get(2, 2), 0.0);
        }
        // time-averaged mean stays inside the band too
        let mean: f64 = t.matrices().iter().map(|m| m.get(0, 1)).sum::<f64>() / t.len() as f64;
        assert!((mean - 100.0).abs() <= 20.0);
    }

    #[test]
    fn rejects_bad_params() {
        let ok = TraceParams::default();
        for bad in [
            TraceParams { knots_per_pair: 1, ..ok },
            TraceParams { jitter_scale: 1.5, ..ok },
            TraceParams { jitter_scale: -0.1, ..ok },
            TraceParams { step_ms: 0, ..ok },
        ] {
            assert!(matches!(gen_trace(&base(), &bad), Err(TopologyError::InvalidParam(_))));
        }
    }

    #[test]
    fn jsonl_round_trip_and_lookup() {
        let p = TraceParams { jitter_scale: 0.1, duration_ms: 500, step_ms: 100, seed: 1, ..Default::default() };
        let t = gen_trace(&base(), &p).unwrap();
        let back = LatencyTrace::read_jsonl(t.to_jsonl_string().as_bytes()).unwrap();
        assert_eq!(back, t);
        assert_eq!(t.at(0), &t.matrices()[0]);
        assert_eq!(t.at(150), &t.matrices()[1]);
        assert_eq!(t.at(99_999), t.matrices().last().unwrap());
    }

    #[test]
    fn jsonl_rejects_disorder() {
        let text = "{\"t_ms\":10,\"delay\":[[0,1],[1,0]]}\n{\"t_ms\":10,\"delay\":[[0,1],[1,0]]}\n";
        assert!(matches!(LatencyTrace::read_jsonl(text.as_bytes()), Err(TopologyError::TraceOrder(2))));
        let text = "{\"t_ms\":0,\"delay\":[[0,1],[1,0]]}\n{\"t_ms\":10,\"delay\":[[0]]}\n";
        assert!(matches!(LatencyTrace::read_jsonl(text.as_bytes()), Err(TopologyError::TraceShape { .. })));
    }
}
