use super::{Result, TopologyError};

/// Monotone piecewise cubic Hermite interpolant (Fritsch–Carlson).
///
/// Knot values are reproduced exactly, flat intervals stay flat, and every
/// interval is monotone between its two endpoint values. Queries outside the
/// knot range clamp to the first or last value.
#[derive(Debug, Clone)]
pub struct Pchip {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl Pchip {
    pub fn fit(knots: &[(f64, f64)]) -> Result<Self> {
        if knots.len() < 2 {
            return Err(TopologyError::TooFewKnots(knots.len()));
        }
        for (i, &(x, y)) in knots.iter().enumerate() {
            if !x.is_finite() {
                return Err(TopologyError::NonIncreasingTimes(i));
            }
            if !y.is_finite() || y < 0.0 {
                return Err(TopologyError::BadKnotValue(i));
            }
            if i > 0 && x <= knots[i - 1].0 {
                return Err(TopologyError::NonIncreasingTimes(i));
            }
        }
        let xs: Vec<f64> = knots.iter().map(|k| k.0).collect();
        let ys: Vec<f64> = knots.iter().map(|k| k.1).collect();
        let slopes = fritsch_carlson_slopes(&xs, &ys);
        Ok(Pchip { xs, ys, slopes })
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().copied().zip(self.ys.iter().copied())
    }

    pub fn eval(&self, t: f64) -> f64 {
        let last = self.xs.len() - 1;
        if t <= self.xs[0] {
            return self.ys[0];
        }
        if t >= self.xs[last] {
            return self.ys[last];
        }
        // first knot strictly greater than t, minus one
        let k = self.xs.partition_point(|&x| x <= t) - 1;
        if t == self.xs[k] {
            return self.ys[k];
        }
        // Rounding can push a monotone segment a few ulps past its endpoints.
        let (lo, hi) = min_max(self.ys[k], self.ys[k + 1]);
        self.hermite(k, t).clamp(lo, hi)
    }

    fn hermite(&self, k: usize, t: f64) -> f64 {
        let h = self.xs[k + 1] - self.xs[k];
        let s = (t - self.xs[k]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.ys[k] + h10 * h * self.slopes[k] + h01 * self.ys[k + 1] + h11 * h * self.slopes[k + 1]
    }
}

fn min_max(a: f64, b: f64) -> (f64, f64) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

fn fritsch_carlson_slopes(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let secants: Vec<f64> = (0..n - 1).map(|k| (ys[k + 1] - ys[k]) / (xs[k + 1] - xs[k])).collect();

    let mut m = vec![0.0; n];
    m[0] = secants[0];
    m[n - 1] = secants[n - 2];
    for k in 1..n - 1 {
        let (a, b) = (secants[k - 1], secants[k]);
        m[k] = if a * b <= 0.0 { 0.0 } else { 0.5 * (a + b) };
    }

    for k in 0..n - 1 {
        if secants[k] == 0.0 {
            m[k] = 0.0;
            m[k + 1] = 0.0;
        }
    }

    for k in 0..n - 1 {
        let d = secants[k];
        if d == 0.0 {
            continue;
        }
        let alpha = m[k] / d;
        let beta = m[k + 1] / d;
        let r = alpha * alpha + beta * beta;
        if r > 9.0 {
            let tau = 3.0 / r.sqrt();
            m[k] = tau * alpha * d;
            m[k + 1] = tau * beta * d;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn flat_segment_is_constant() {
        let p = Pchip::fit(&[(0.0, 100.0), (10.0, 100.0), (20.0, 200.0)]).unwrap();
        assert_eq!(p.eval(5.0), 100.0);
        assert_eq!(p.eval(10.0), 100.0);
        assert_eq!(p.eval(0.0), 100.0);
        assert_eq!(p.eval(20.0), 200.0);
    }

    #[test]
    fn two_knots_bracket() {
        let p = Pchip::fit(&[(0.0, 100.0), (20.0, 200.0)]).unwrap();
        let v = p.eval(10.0);
        assert!((100.0..=200.0).contains(&v));
        // dense sampling stays in range and is non-decreasing
        let mut prev = p.eval(0.0);
        for i in 0..=1000 {
            let y = p.eval(20.0 * i as f64 / 1000.0);
            assert!((100.0..=200.0).contains(&y));
            assert!(y >= prev);
            prev = y;
        }
    }

    #[test]
    fn clamps_outside_range() {
        let p = Pchip::fit(&[(0.0, 1.0), (1.0, 3.0)]).unwrap();
        assert_eq!(p.eval(-5.0), 1.0);
        assert_eq!(p.eval(9.0), 3.0);
    }

    #[test]
    fn rejects_bad_knots() {
        assert!(matches!(Pchip::fit(&[(0.0, 1.0)]), Err(TopologyError::TooFewKnots(1))));
        assert!(matches!(Pchip::fit(&[(0.0, 1.0), (0.0, 2.0)]), Err(TopologyError::NonIncreasingTimes(1))));
        assert!(matches!(Pchip::fit(&[(0.0, 1.0), (1.0, -2.0)]), Err(TopologyError::BadKnotValue(1))));
    }

    fn knots_strategy() -> impl Strategy<Value = Vec<(f64, f64)>> {
        prop::collection::vec((0.1f64..50.0, 0.0f64..500.0), 2..12).prop_map(|steps| {
            let mut t = 0.0;
            steps
                .into_iter()
                .map(|(dt, y)| {
                    t += dt;
                    (t, y)
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn exact_at_knots_and_interval_bounded(knots in knots_strategy()) {
            let p = Pchip::fit(&knots).unwrap();
            for &(x, y) in &knots {
                let v = p.eval(x);
                prop_assert!((v - y).abs() <= 1e-9 * y.abs().max(1.0));
            }
            for w in knots.windows(2) {
                let (lo, hi) = min_max(w[0].1, w[1].1);
                let increasing = w[1].1 >= w[0].1;
                let k = knots.iter().position(|kn| kn.0 == w[0].0).unwrap();
                let tol = 1e-9 * hi.max(1.0);
                let mut prev = w[0].1;
                for i in 0..=1000 {
                    let t = w[0].0 + (w[1].0 - w[0].0) * i as f64 / 1000.0;
                    let raw = p.hermite(k, t);
                    prop_assert!(raw >= lo - tol && raw <= hi + tol, "raw {} outside [{}, {}]", raw, lo, hi);
                    let v = p.eval(t);
                    prop_assert!(v >= lo && v <= hi, "{} outside [{}, {}]", v, lo, hi);
                    if increasing { prop_assert!(v >= prev - 1e-9); } else { prop_assert!(v <= prev + 1e-9); }
                    prev = v;
                }
            }
        }
    }
}
