//! WAN latency matrices, time-varying traces, trace synthesis and
//! triangle-inequality-violation analysis.

mod matrix;
mod pchip;
pub(crate) mod tiv;
mod trace;

pub use matrix::{LatencyMatrix, MatrixFormat};
pub use pchip::Pchip;
pub use tiv::{tiv_scan, TivReport, Violation};
pub use trace::{gen_trace, LatencyTrace, TraceParams};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("matrix is not square: row {row} has {len} entries, expected {n}")]
    NonSquare { row: usize, len: usize, n: usize },
    #[error("matrix is empty")]
    Empty,
    #[error("negative entry {value} at ({i}, {j})")]
    Negative { i: usize, j: usize, value: f64 },
    #[error("non-finite entry at ({i}, {j})")]
    NonFinite { i: usize, j: usize },
    #[error("nonzero diagonal {value} at node {i}")]
    NonzeroDiagonal { i: usize, value: f64 },
    #[error("declared n = {declared} does not match {actual} rows")]
    CountMismatch { declared: usize, actual: usize },
    #[error("{labels} labels for {n} nodes")]
    LabelMismatch { labels: usize, n: usize },
    #[error("cannot parse {0:?} as a latency")]
    BadNumber(String),
    #[error("interpolation needs at least 2 knots, got {0}")]
    TooFewKnots(usize),
    #[error("knot times must be strictly increasing (knot {0})")]
    NonIncreasingTimes(usize),
    #[error("knot value must be finite and non-negative (knot {0})")]
    BadKnotValue(usize),
    #[error("invalid trace parameter: {0}")]
    InvalidParam(&'static str),
    #[error("trace timestamps must be strictly increasing (line {0})")]
    TraceOrder(usize),
    #[error("trace matrix at line {line} has n = {got}, expected {expected}")]
    TraceShape { line: usize, got: usize, expected: usize },
    #[error("trace is empty")]
    EmptyTrace,
    #[error("triangle scan needs at least 3 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TopologyError>;
