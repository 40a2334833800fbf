//! Percentiles, CDFs, communication heatmaps and paired report comparison.

use serde::{Deserialize, Serialize};

use crate::simulator::SimReport;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("no samples")]
    Empty,
    #[error("percentile {0} is outside (0, 1]")]
    BadFraction(f64),
    #[error("non-finite sample")]
    NonFinite,
    #[error("reports differ in shape: {0}")]
    ShapeMismatch(String),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

fn sorted(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(MetricsError::Empty);
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(MetricsError::NonFinite);
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Nearest-rank percentile: the `⌈p·n⌉`-th smallest sample.
pub fn percentile(samples: &[f64], p: f64) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(MetricsError::BadFraction(p));
    }
    let v = sorted(samples)?;
    let n = v.len();
    // keeps p·n that lands on an integer from rounding up past it
    let rank = ((p * n as f64) - 1e-9).ceil().max(1.0) as usize;
    Ok(v[rank.min(n) - 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub value: f64,
    pub fraction: f64,
}

/// Empirical distribution function, one point per distinct value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cdf {
    pub points: Vec<CdfPoint>,
}

impl Cdf {
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        let v = sorted(samples)?;
        let n = v.len() as f64;
        let mut points: Vec<CdfPoint> = Vec::new();
        for (i, &x) in v.iter().enumerate() {
            let fraction = (i + 1) as f64 / n;
            match points.last_mut() {
                Some(last) if last.value == x => last.fraction = fraction,
                _ => points.push(CdfPoint { value: x, fraction }),
            }
        }
        Ok(Cdf { points })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("value,cum_fraction\n");
        for p in &self.points {
            out.push_str(&format!("{},{}\n", p.value, p.fraction));
        }
        out
    }
}

/// Messages `i -> j` summed over all rounds, scaled so the busiest link is 1.
pub fn comm_heatmap(report: &SimReport) -> Vec<Vec<f64>> {
    let n = report.n;
    let mut counts = vec![vec![0u64; n]; n];
    for r in &report.rounds {
        for l in &r.links {
            if l.src != l.dst {
                counts[l.src][l.dst] += l.msgs;
            }
        }
    }
    let max = counts.iter().flatten().copied().max().unwrap_or(0);
    counts.iter().map(|row| row.iter().map(|&c| if max == 0 { 0.0 } else { c as f64 / max as f64 }).collect()).collect()
}

pub fn heatmap_csv(h: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for row in h {
        let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// `a` against the reference `b`; `reduction` is `(b - a) / b`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub a: f64,
    pub b: f64,
    pub delta: f64,
    pub reduction: f64,
}

impl Delta {
    fn new(a: f64, b: f64) -> Self {
        let delta = b - a;
        Delta { a, b, delta, reduction: if b == 0.0 { 0.0 } else { delta / b } }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub makespan_mean: Delta,
    pub makespan_p50: Delta,
    pub makespan_p90: Delta,
    pub makespan_p99: Delta,
    /// Mean over rounds of the per-round makespan reduction.
    pub mean_round_reduction: f64,
    pub bytes: Delta,
    pub inter_bytes: Delta,
    pub msgs: Delta,
}

/// Paired comparison of `a` with the reference run `b`.
pub fn compare(a: &SimReport, b: &SimReport) -> Result<Comparison> {
    if a.n != b.n {
        return Err(MetricsError::ShapeMismatch(format!("{} vs {} nodes", a.n, b.n)));
    }
    if a.rounds.len() != b.rounds.len() {
        return Err(MetricsError::ShapeMismatch(format!("{} vs {} rounds", a.rounds.len(), b.rounds.len())));
    }
    let (ma, mb) = (a.makespans(), b.makespans());
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let pct = |p| -> Result<Delta> { Ok(Delta::new(percentile(&ma, p)?, percentile(&mb, p)?)) };
    let per_round: Vec<f64> = ma.iter().zip(&mb).map(|(&x, &y)| Delta::new(x, y).reduction).collect();
    Ok(Comparison {
        makespan_mean: Delta::new(mean(&ma), mean(&mb)),
        makespan_p50: pct(0.5)?,
        makespan_p90: pct(0.9)?,
        makespan_p99: pct(0.99)?,
        mean_round_reduction: mean(&per_round),
        bytes: Delta::new(a.totals.bytes as f64, b.totals.bytes as f64),
        inter_bytes: Delta::new(a.totals.inter_bytes as f64, b.totals.inter_bytes as f64),
        msgs: Delta::new(a.totals.msgs as f64, b.totals.msgs as f64),
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::planner::fixtures::clustered4;
    use crate::planner::GroupPlan;
    use crate::simulator::{run_simulation, Mode, SimConfig};
    use crate::topology::LatencyTrace;

    #[test]
    fn nearest_rank() {
        let v = [40.0, 10.0, 30.0, 20.0];
        assert_eq!(percentile(&v, 0.5).unwrap(), 20.0);
        assert_eq!(percentile(&v, 1.0).unwrap(), 40.0);
        assert_eq!(percentile(&v, 0.01).unwrap(), 10.0);
        assert_eq!(percentile(&[7.0], 0.3).unwrap(), 7.0);
        assert_eq!(percentile(&[], 0.5), Err(MetricsError::Empty));
        assert_eq!(percentile(&v, 0.0), Err(MetricsError::BadFraction(0.0)));
        let hundred: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&hundred, 0.9).unwrap(), 90.0);
        assert_eq!(percentile(&hundred, 0.99).unwrap(), 99.0);
    }

    #[test]
    fn cdf_collapses_ties() {
        let c = Cdf::from_samples(&[3.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(
            c.points,
            vec![
                CdfPoint { value: 1.0, fraction: 0.25 },
                CdfPoint { value: 2.0, fraction: 0.5 },
                CdfPoint { value: 3.0, fraction: 1.0 }
            ]
        );
        assert_eq!(c.to_csv(), "value,cum_fraction\n1,0.25\n2,0.5\n3,1\n");
    }

    proptest! {
        #[test]
        fn cdf_is_a_distribution(v in prop::collection::vec(0.0f64..1e4, 1..60)) {
            let c = Cdf::from_samples(&v).unwrap();
            prop_assert!(c.points.windows(2).all(|w| w[0].value < w[1].value && w[0].fraction < w[1].fraction));
            prop_assert_eq!(c.points.last().unwrap().fraction, 1.0);
        }
    }

    fn run(mode: Mode, rounds: usize) -> SimReport {
        let cfg = SimConfig {
            rounds,
            mode,
            plan: Some(GroupPlan::from_parts(vec![0, 0, 1, 1], vec![0, 2]).unwrap()),
            ..Default::default()
        };
        run_simulation(&LatencyTrace::constant(clustered4()), &cfg).unwrap()
    }

    #[test]
    fn heatmaps() {
        let base = comm_heatmap(&run(Mode::Baseline, 3));
        for (i, row) in base.iter().enumerate() {
            for (j, &x) in row.iter().enumerate() {
                assert_eq!(x, if i == j { 0.0 } else { 1.0 });
            }
        }
        let grouped = comm_heatmap(&run(Mode::Grouped, 3));
        assert_eq!(grouped[1][3], 0.0);
        assert_eq!(grouped[1][2], 0.0);
        assert!(grouped[0][1] > 0.0 && grouped[0][2] > 0.0 && grouped[3][2] > 0.0);
        assert_eq!(comm_heatmap(&run(Mode::Grouped, 6)), grouped);
    }

    #[test]
    fn comparisons() {
        let g = run(Mode::Grouped, 5);
        let b = run(Mode::Baseline, 5);
        let same = compare(&g, &g).unwrap();
        assert_eq!(same.makespan_mean.delta, 0.0);
        assert_eq!(same.bytes.reduction, 0.0);
        let c = compare(&g, &b).unwrap();
        assert!((c.mean_round_reduction - 190.0 / 300.0).abs() < 1e-12);
        assert!(c.msgs.reduction > 0.0);
        assert!(compare(&g, &run(Mode::Baseline, 4)).is_err());
    }
}
