use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{Result, TopologyError};

/// Diagonal entries within this distance of zero are coerced to exactly 0.
const DIAGONAL_EPS: f64 = 1e-9;

/// On-disk encodings accepted by [`LatencyMatrix::load`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    Json,
}

impl MatrixFormat {
    /// Picks JSON for `.json` paths and CSV for everything else.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => MatrixFormat::Json,
            _ => MatrixFormat::Csv,
        }
    }
}

/// Directed one-way delay matrix in milliseconds.
///
/// `delay[i][j]` is the latency of a message from `i` to `j`. The matrix may
/// be asymmetric; the diagonal is always zero and every entry is finite and
/// non-negative.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyMatrix {
    n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
    delay: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct RawMatrix {
    n: Option<usize>,
    #[serde(default)]
    labels: Option<Vec<String>>,
    delay: Vec<Vec<f64>>,
}

impl LatencyMatrix {
    /// Validates `rows` as an n×n latency grid.
    pub fn new(mut rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(TopologyError::Empty);
        }
        for (i, row) in rows.iter_mut().enumerate() {
            if row.len() != n {
                return Err(TopologyError::NonSquare { row: i, len: row.len(), n });
            }
            for (j, v) in row.iter_mut().enumerate() {
                if !v.is_finite() {
                    return Err(TopologyError::NonFinite { i, j });
                }
                if i == j {
                    if v.abs() > DIAGONAL_EPS {
                        return Err(TopologyError::NonzeroDiagonal { i, value: *v });
                    }
                    *v = 0.0;
                } else if *v < 0.0 {
                    return Err(TopologyError::Negative { i, j, value: *v });
                }
            }
        }
        Ok(LatencyMatrix { n, labels: None, delay: rows })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(TopologyError::LabelMismatch { labels: labels.len(), n: self.n });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Builds a matrix from a closure; the diagonal is forced to zero.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let rows = (0..n).map(|i| (0..n).map(|j| if i == j { 0.0 } else { f(i, j) }).collect()).collect();
        Self::new(rows)
    }

    /// Matrix with every off-diagonal entry equal to `c`.
    pub fn uniform(n: usize, c: f64) -> Result<Self> {
        Self::from_fn(n, |_, _| c)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.delay[i][j]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.delay
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Largest entry of the matrix (0 for a single node).
    pub fn max_entry(&self) -> f64 {
        self.delay.iter().flat_map(|r| r.iter().copied()).fold(0.0, f64::max)
    }

    /// Every entry multiplied by `factor` (must be finite and non-negative).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let rows = self.delay.iter().map(|r| r.iter().map(|v| v * factor).collect()).collect();
        let mut m = Self::new(rows)?;
        m.labels = self.labels.clone();
        Ok(m)
    }

    /// Converts round-trip times to one-way delays.
    pub fn halved(&self) -> Self {
        self.scaled(0.5).expect("halving a valid matrix stays valid")
    }

    /// Replaces a single entry, revalidating it.
    pub fn set(&mut self, i: usize, j: usize, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(TopologyError::NonFinite { i, j });
        }
        if i == j {
            if value.abs() > DIAGONAL_EPS {
                return Err(TopologyError::NonzeroDiagonal { i, value });
            }
            return Ok(());
        }
        if value < 0.0 {
            return Err(TopologyError::Negative { i, j, value });
        }
        self.delay[i][j] = value;
        Ok(())
    }

    pub fn load<R: Read>(source: R, format: MatrixFormat) -> Result<Self> {
        match format {
            MatrixFormat::Csv => Self::from_csv(source),
            MatrixFormat::Json => Self::from_json(source),
        }
    }

    /// Parses `n` rows of comma-separated floats with an optional header row
    /// of node labels.
    pub fn from_csv<R: Read>(source: R) -> Result<Self> {
        let mut reader =
            csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(source);
        let mut labels = None;
        let mut rows = Vec::new();
        for (idx, record) in reader.records().enumerate() {
            let record = record?;
            if record.iter().all(str::is_empty) {
                continue;
            }
            let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
            match parsed {
                Ok(row) => rows.push(row),
                Err(_) if idx == 0 => {
                    labels = Some(record.iter().map(str::to_owned).collect::<Vec<_>>());
                }
                Err(_) => {
                    let bad = record.iter().find(|c| c.parse::<f64>().is_err()).unwrap_or_default();
                    return Err(TopologyError::BadNumber(bad.to_owned()));
                }
            }
        }
        let m = Self::new(rows)?;
        match labels {
            Some(l) => m.with_labels(l),
            None => Ok(m),
        }
    }

    pub fn from_json<R: Read>(source: R) -> Result<Self> {
        let raw: RawMatrix = serde_json::from_reader(source)?;
        Self::from_raw(raw)
    }

    fn from_raw(raw: RawMatrix) -> Result<Self> {
        if let Some(declared) = raw.n {
            if declared != raw.delay.len() {
                return Err(TopologyError::CountMismatch { declared, actual: raw.delay.len() });
            }
        }
        let m = Self::new(raw.delay)?;
        match raw.labels {
            Some(l) => m.with_labels(l),
            None => Ok(m),
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        if let Some(labels) = &self.labels {
            writeln!(out, "{}", labels.join(","))?;
        }
        for row in &self.delay {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("matrix serializes")
    }
}

impl<'de> Deserialize<'de> for LatencyMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawMatrix::deserialize(d)?;
        LatencyMatrix::from_raw(raw).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn loads_two_by_two() {
        let m = LatencyMatrix::from_csv("0,10\n12,0\n".as_bytes()).unwrap();
        assert_eq!(m.n(), 2);
        assert_eq!(m.get(0, 1), 10.0);
        assert_eq!(m.get(1, 0), 12.0);
    }

    #[test]
    fn rejects_nonzero_diagonal() {
        let err = LatencyMatrix::from_csv("0,1,2\n1,5,2\n1,2,0\n".as_bytes()).unwrap_err();
        assert!(matches!(err, TopologyError::NonzeroDiagonal { i: 1, .. }));
        assert!(err.to_string().contains("nonzero diagonal"));
    }

    #[test]
    fn coerces_tiny_diagonal() {
        let m = LatencyMatrix::new(vec![vec![1e-12, 3.0], vec![4.0, -1e-10]]).unwrap();
        assert_eq!(m.get(0, 0), 0.0);
        assert_eq!(m.get(1, 1), 0.0);
    }

    #[test]
    fn degenerate_single_node() {
        let m = LatencyMatrix::from_csv("0\n".as_bytes()).unwrap();
        assert_eq!(m.n(), 1);
        assert_eq!(m.max_entry(), 0.0);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(matches!(LatencyMatrix::from_csv("0,1\n1,0,3\n".as_bytes()), Err(TopologyError::NonSquare { .. })));
        assert!(matches!(LatencyMatrix::from_csv("0,-1\n1,0\n".as_bytes()), Err(TopologyError::Negative { .. })));
        assert!(matches!(LatencyMatrix::from_csv("0,inf\n1,0\n".as_bytes()), Err(TopologyError::NonFinite { .. })));
        assert!(matches!(LatencyMatrix::from_csv("0,1\n1,x\n".as_bytes()), Err(TopologyError::BadNumber(_))));
        assert!(matches!(
            LatencyMatrix::from_json(r#"{"n":3,"delay":[[0,1],[1,0]]}"#.as_bytes()),
            Err(TopologyError::CountMismatch { .. })
        ));
    }

    #[test]
    fn csv_header_and_json_labels() {
        let m = LatencyMatrix::from_csv("us,eu\n0,40\n41,0\n".as_bytes()).unwrap();
        assert_eq!(m.labels().unwrap(), &["us".to_string(), "eu".to_string()]);
        let json = m.to_json_string();
        assert_eq!(json, r#"{"n":2,"labels":["us","eu"],"delay":[[0.0,40.0],[41.0,0.0]]}"#);
        assert_eq!(LatencyMatrix::from_json(json.as_bytes()).unwrap(), m);
    }

    #[test]
    fn halving_converts_rtt() {
        let m = LatencyMatrix::new(vec![vec![0.0, 20.0], vec![30.0, 0.0]]).unwrap();
        let h = m.halved();
        assert_eq!(h.get(0, 1), 10.0);
        assert_eq!(h.get(1, 0), 15.0);
    }

    fn matrix_strategy() -> impl Strategy<Value = LatencyMatrix> {
        (1usize..7).prop_flat_map(|n| {
            prop::collection::vec(prop::collection::vec(0.0f64..1000.0, n), n).prop_map(|rows| {
                let n = rows.len();
                LatencyMatrix::from_fn(n, |i, j| rows[i][j]).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn csv_and_json_round_trip(m in matrix_strategy()) {
            let csv = LatencyMatrix::from_csv(m.to_csv_string().as_bytes()).unwrap();
            prop_assert_eq!(&csv, &m);
            let json = LatencyMatrix::from_json(m.to_json_string().as_bytes()).unwrap();
            prop_assert_eq!(&json, &m);
        }
    }
}
