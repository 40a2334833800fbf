//! Vivaldi network coordinates.
//!
//! Each node holds a Euclidean position plus a non-negative height; the
//! estimated latency between two nodes is the distance between positions plus
//! both heights. Coordinates are refined one RTT sample at a time with the
//! adaptive-timestep Vivaldi update, which lets large deployments estimate the
//! full latency matrix from a sparse set of probes.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{self, Purpose};
use crate::topology::LatencyMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum CoordError {
    #[error("coordinate dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("node {0} out of range for {1} nodes")]
    UnknownNode(usize, usize),
    #[error("cannot update node {0} against itself")]
    SameNode(usize),
    #[error("zero RTT sample between distinct nodes {0} and {1}; update skipped")]
    ZeroRtt(usize, usize),
    #[error("RTT sample must be finite and non-negative, got {0}")]
    InvalidSample(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetCoordinate {
    pub position: Vec<f64>,
    pub height: f64,
    pub error: f64,
}

impl NetCoordinate {
    pub fn origin(dimension: usize, height: f64, error: f64) -> Self {
        NetCoordinate { position: vec![0.0; dimension], height, error }
    }

    pub fn dimension(&self) -> usize {
        self.position.len()
    }
}

fn position_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Estimated RTT between two coordinates.
pub fn estimate(a: &NetCoordinate, b: &NetCoordinate) -> Result<f64, CoordError> {
    if a.dimension() != b.dimension() {
        return Err(CoordError::DimensionMismatch(a.dimension(), b.dimension()));
    }
    Ok(position_distance(&a.position, &b.position) + a.height + b.height)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VivaldiConfig {
    pub dimension: usize,
    /// Step gain c_c.
    pub cc: f64,
    /// Error gain c_e.
    pub ce: f64,
    pub initial_error: f64,
    /// Floor for the error estimate; keeps it inside (0, 1].
    pub min_error: f64,
    /// Floor for heights, also their starting value.
    pub min_height: f64,
}

impl Default for VivaldiConfig {
    fn default() -> Self {
        VivaldiConfig { dimension: 3, cc: 0.25, ce: 0.25, initial_error: 1.0, min_error: 1e-6, min_height: 1e-5 }
    }
}

/// Coordinates for every node plus the generator used to break coincidences.
#[derive(Debug, Clone)]
pub struct CoordSystem {
    coords: Vec<NetCoordinate>,
    config: VivaldiConfig,
    rng: ChaCha8Rng,
}

/// Post-calibration accuracy of one sampled pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairError {
    pub i: usize,
    pub j: usize,
    pub measured_ms: f64,
    pub estimated_ms: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub applied: usize,
    pub skipped: usize,
    pub exceeded: Vec<PairError>,
}

impl CoordSystem {
    /// All nodes start at the origin with the configured initial error.
    pub fn new(n: usize, config: VivaldiConfig, seed: u64) -> Self {
        let start = NetCoordinate::origin(config.dimension, config.min_height, config.initial_error);
        CoordSystem { coords: vec![start; n], config, rng: rng::stream(seed, Purpose::Vivaldi, 0) }
    }

    pub fn from_coords(coords: Vec<NetCoordinate>, config: VivaldiConfig, seed: u64) -> Result<Self, CoordError> {
        for c in &coords {
            if c.dimension() != config.dimension {
                return Err(CoordError::DimensionMismatch(c.dimension(), config.dimension));
            }
        }
        Ok(CoordSystem { coords, config, rng: rng::stream(seed, Purpose::Vivaldi, 0) })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[NetCoordinate] {
        &self.coords
    }

    pub fn config(&self) -> &VivaldiConfig {
        &self.config
    }

    fn check_node(&self, i: usize) -> Result<(), CoordError> {
        if i >= self.coords.len() {
            return Err(CoordError::UnknownNode(i, self.coords.len()));
        }
        Ok(())
    }

    pub fn estimate_pair(&self, i: usize, j: usize) -> Result<f64, CoordError> {
        self.check_node(i)?;
        self.check_node(j)?;
        estimate(&self.coords[i], &self.coords[j])
    }

    /// Moves node `i` in response to an RTT sample towards node `j`.
    pub fn update(&mut self, i: usize, j: usize, rtt: f64) -> Result<(), CoordError> {
        self.check_node(i)?;
        self.check_node(j)?;
        if i == j {
            return Err(CoordError::SameNode(i));
        }
        if !rtt.is_finite() || rtt < 0.0 {
            return Err(CoordError::InvalidSample(rtt));
        }
        if rtt == 0.0 {
            return Err(CoordError::ZeroRtt(i, j));
        }

        let cfg = self.config;
        let (ci, cj) = (&self.coords[i], &self.coords[j]);
        let dist = position_distance(&ci.position, &cj.position);
        let est = dist + ci.height + cj.height;

        let w = ci.error / (ci.error + cj.error);
        let sample_error = (est - rtt).abs() / rtt;
        let new_error = (sample_error * cfg.ce * w + ci.error * (1.0 - cfg.ce * w)).clamp(cfg.min_error, 1.0);
        let delta = cfg.cc * w;
        let force = delta * (rtt - est);

        let dim = cfg.dimension;
        let mut step = vec![0.0; dim];
        let mut height_step = 0.0;
        if dist > 1e-9 {
            let norm = est;
            for (k, s) in step.iter_mut().enumerate() {
                *s = force * (ci.position[k] - cj.position[k]) / norm;
            }
            height_step = force * (ci.height + cj.height) / norm;
        } else {
            let dir = random_unit(&mut self.rng, dim);
            for (s, d) in step.iter_mut().zip(dir) {
                *s = force * d;
            }
        }

        let ci = &mut self.coords[i];
        for (p, s) in ci.position.iter_mut().zip(step) {
            *p += s;
        }
        ci.height = (ci.height + height_step).max(cfg.min_height);
        ci.error = new_error;
        Ok(())
    }

    /// One update per ordered pair, in row-major order, using `m` as the RTT source.
    pub fn full_pair_round(&mut self, m: &LatencyMatrix) -> usize {
        let mut applied = 0;
        for i in 0..m.n() {
            for j in 0..m.n() {
                if i != j && self.update(i, j, m.get(i, j)).is_ok() {
                    applied += 1;
                }
            }
        }
        applied
    }

    /// Replays `samples` and reports pairs still off by more than `tolerance`.
    pub fn calibrate(&mut self, samples: &[(usize, usize, f64)], tolerance: f64) -> CalibrationReport {
        let mut report = CalibrationReport::default();
        for &(i, j, measured) in samples {
            match self.update(i, j, measured) {
                Ok(()) => report.applied += 1,
                Err(_) => report.skipped += 1,
            }
        }
        for &(i, j, measured) in samples {
            if measured <= 0.0 {
                continue;
            }
            let Ok(estimated) = self.estimate_pair(i, j) else { continue };
            let relative_error = (estimated - measured).abs() / measured;
            if relative_error > tolerance {
                report.exceeded.push(PairError {
                    i,
                    j,
                    measured_ms: measured,
                    estimated_ms: estimated,
                    relative_error,
                });
            }
        }
        report
    }

    /// Symmetric matrix of pairwise estimates with a zero diagonal.
    pub fn estimated_matrix(&self) -> LatencyMatrix {
        let n = self.coords.len();
        LatencyMatrix::from_fn(n, |i, j| estimate(&self.coords[i], &self.coords[j]).unwrap_or(0.0))
            .expect("estimates are finite and non-negative")
    }

    /// Median over ordered pairs of |estimate - truth| / truth, skipping zero entries.
    pub fn median_relative_error(&self, truth: &LatencyMatrix) -> f64 {
        let mut errs = Vec::new();
        for i in 0..truth.n() {
            for j in 0..truth.n() {
                let t = truth.get(i, j);
                if i != j && t > 0.0 {
                    let e = estimate(&self.coords[i], &self.coords[j]).unwrap_or(f64::INFINITY);
                    errs.push((e - t).abs() / t);
                }
            }
        }
        if errs.is_empty() {
            return 0.0;
        }
        errs.sort_by(f64::total_cmp);
        let mid = errs.len() / 2;
        if errs.len() % 2 == 1 {
            errs[mid]
        } else {
            0.5 * (errs[mid - 1] + errs[mid])
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.coords).expect("coordinates serialize")
    }
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 && norm <= 1.0 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coord(pos: &[f64], h: f64) -> NetCoordinate {
        NetCoordinate { position: pos.to_vec(), height: h, error: 1.0 }
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn estimate_examples() {
        assert!(close(estimate(&coord(&[0.0, 0.0, 0.0], 0.0), &coord(&[10.0, 0.0, 0.0], 0.0)).unwrap(), 10.0));
        assert!(close(estimate(&coord(&[1.0, 2.0, 3.0], 2.0), &coord(&[1.0, 2.0, 3.0], 3.0)).unwrap(), 5.0));
        assert!(close(estimate(&coord(&[3.0, 4.0, 0.0], 1.0), &coord(&[0.0, 0.0, 0.0], 1.0)).unwrap(), 7.0));
        assert_eq!(estimate(&coord(&[0.0], 0.0), &coord(&[0.0, 0.0], 0.0)), Err(CoordError::DimensionMismatch(1, 2)));
    }

    fn two_d_config() -> VivaldiConfig {
        VivaldiConfig { dimension: 2, cc: 0.5, min_height: 0.0, ..VivaldiConfig::default() }
    }

    #[test]
    fn update_pushes_away_when_too_close() {
        let cfg = two_d_config();
        let mut sys =
            CoordSystem::from_coords(vec![coord(&[0.0, 0.0], 0.0), coord(&[10.0, 0.0], 0.0)], cfg, 1).unwrap();
        // equal errors give w = 0.5, so delta = 0.25 and the force is 10
        sys.update(0, 1, 20.0).unwrap();
        let p = &sys.coords()[0].position;
        assert!(close(p[0], -2.5) && close(p[1], 0.0), "{p:?}");
        assert_eq!(sys.coords()[0].height, 0.0);
        assert_eq!(sys.coords()[1].position, vec![10.0, 0.0]);
    }

    #[test]
    fn exact_estimate_only_shrinks_error() {
        let mut sys =
            CoordSystem::from_coords(vec![coord(&[0.0, 0.0], 0.0), coord(&[10.0, 0.0], 0.0)], two_d_config(), 1)
                .unwrap();
        sys.update(0, 1, 10.0).unwrap();
        assert_eq!(sys.coords()[0].position, vec![0.0, 0.0]);
        assert!(sys.coords()[0].error < 1.0);
    }

    #[test]
    fn coincident_nodes_move_by_delta_times_force() {
        let cfg = two_d_config();
        let mut sys = CoordSystem::from_coords(vec![coord(&[1.0, 1.0], 0.0), coord(&[1.0, 1.0], 0.0)], cfg, 9).unwrap();
        sys.update(0, 1, 10.0).unwrap();
        let moved = position_distance(&sys.coords()[0].position, &[1.0, 1.0]);
        assert!(close(moved, 0.25 * 10.0), "{moved}");
        // seeded: a second system with the same seed moves identically
        let mut again =
            CoordSystem::from_coords(vec![coord(&[1.0, 1.0], 0.0), coord(&[1.0, 1.0], 0.0)], cfg, 9).unwrap();
        again.update(0, 1, 10.0).unwrap();
        assert_eq!(sys.coords(), again.coords());
    }

    #[test]
    fn degenerate_samples_are_rejected() {
        let mut sys = CoordSystem::new(3, VivaldiConfig::default(), 0);
        let before = sys.coords().to_vec();
        assert_eq!(sys.update(0, 1, 0.0), Err(CoordError::ZeroRtt(0, 1)));
        assert_eq!(sys.update(1, 1, 5.0), Err(CoordError::SameNode(1)));
        assert_eq!(sys.update(0, 7, 5.0), Err(CoordError::UnknownNode(7, 3)));
        assert!(matches!(sys.update(0, 1, f64::NAN), Err(CoordError::InvalidSample(_))));
        assert!(matches!(sys.update(0, 1, -3.0), Err(CoordError::InvalidSample(_))));
        assert_eq!(sys.coords(), &before[..]);
    }

    #[test]
    fn estimated_matrix_shapes() {
        let one = CoordSystem::new(1, VivaldiConfig::default(), 0).estimated_matrix();
        assert_eq!(one.n(), 1);
        assert_eq!(one.get(0, 0), 0.0);
        let cfg = VivaldiConfig { min_height: 0.0, ..VivaldiConfig::default() };
        let two = CoordSystem::from_coords(
            vec![
                NetCoordinate::origin(3, 0.0, 1.0),
                NetCoordinate { position: vec![6.0, 8.0, 0.0], height: 0.0, error: 1.0 },
            ],
            cfg,
            0,
        )
        .unwrap()
        .estimated_matrix();
        assert_eq!(two.get(0, 1), 10.0);
        assert_eq!(two.get(1, 0), 10.0);
    }

    #[test]
    fn calibration_with_matching_samples_is_a_no_op() {
        let cfg = VivaldiConfig { min_height: 0.0, ..VivaldiConfig::default() };
        let coords = vec![
            NetCoordinate::origin(3, 0.0, 0.5),
            NetCoordinate { position: vec![3.0, 4.0, 0.0], height: 0.0, error: 0.5 },
        ];
        let mut sys = CoordSystem::from_coords(coords.clone(), cfg, 0).unwrap();
        let report = sys.calibrate(&[], 0.1);
        assert_eq!(report, CalibrationReport::default());
        let report = sys.calibrate(&[(0, 1, 5.0), (1, 0, 5.0)], 0.1);
        assert!(report.exceeded.is_empty());
        for (a, b) in sys.coords().iter().zip(&coords) {
            assert_eq!(a.position, b.position);
        }
    }

    fn embeddable(n: usize, seed: u64) -> LatencyMatrix {
        let mut rng = rng::stream(seed, Purpose::Workload, 99);
        let pts: Vec<[f64; 3]> = (0..n)
            .map(|_| [rng.random_range(0.0..100.0), rng.random_range(0.0..100.0), rng.random_range(0.0..100.0)])
            .collect();
        LatencyMatrix::from_fn(n, |i, j| position_distance(&pts[i], &pts[j]) + 1.0).unwrap()
    }

    #[test]
    fn converges_on_embeddable_eight_nodes() {
        let m = embeddable(8, 5);
        let mut sys = CoordSystem::new(8, VivaldiConfig::default(), 5);
        for _ in 0..100 {
            sys.full_pair_round(&m);
        }
        assert!(sys.median_relative_error(&m) <= 0.18);
    }

    #[test]
    fn updates_keep_state_well_formed() {
        let m = embeddable(10, 1);
        let mut sys = CoordSystem::new(10, VivaldiConfig::default(), 1);
        for _ in 0..30 {
            sys.full_pair_round(&m);
            for c in sys.coords() {
                assert!(c.position.iter().all(|p| p.is_finite()));
                assert!(c.height >= 0.0);
                assert!(c.error > 0.0 && c.error <= 1.0);
            }
        }
    }
}
