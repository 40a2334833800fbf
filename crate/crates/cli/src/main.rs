//! `geosync` command-line driver.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use geosync::coords::{CoordSystem, VivaldiConfig};
use geosync::metrics::{comm_heatmap, compare, heatmap_csv, percentile, Cdf};
use geosync::planner::{make_plan, GroupPlan, KMode, PlannerConfig, Solver};
use geosync::simulator::{run_simulation, FailureEvent, Mode, SimConfig, SimError, SimReport};
use geosync::sync_filter::{PayloadDist, WorkloadConfig};
use geosync::topology::{gen_trace, tiv_scan, LatencyMatrix, LatencyTrace, MatrixFormat, TraceParams};
use serde::Serialize;

mod output;

use output::{with_manifest, Outputs, RunManifest};

const EXIT_USAGE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_INVARIANT: u8 = 3;

#[derive(Parser)]
#[command(name = "geosync", version, about = "Latency-aware synchronization planning and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a time-varying trace from a base matrix.
    Tracegen(TracegenArgs),
    /// List triangle-inequality violations.
    Tiv(TivArgs),
    /// Group nodes and pick aggregators.
    Plan(PlanArgs),
    /// Replay a trace in baseline or grouped mode.
    Simulate(SimulateArgs),
    /// Percentiles, CDF, heatmap and comparison for simulation reports.
    Analyze(AnalyzeArgs),
    /// Fit network coordinates to a matrix and report their accuracy.
    Coords(CoordsArgs),
}

#[derive(Args, Serialize)]
struct MatrixInput {
    /// Latency matrix (.csv or .json).
    #[arg(long)]
    matrix: PathBuf,
    /// The matrix holds round-trip times; halve them.
    #[arg(long)]
    rtt: bool,
}

#[derive(Args, Serialize)]
struct TracegenArgs {
    /// Base matrix (.csv or .json).
    #[arg(long)]
    base: PathBuf,
    #[arg(long)]
    rtt: bool,
    #[arg(long, default_value_t = 0.1)]
    jitter: f64,
    #[arg(long, default_value_t = 8)]
    knots: usize,
    #[arg(long, default_value_t = 10_000)]
    duration: u64,
    #[arg(long, default_value_t = 100)]
    step: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Trace output (JSON lines).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct TivArgs {
    #[command(flatten)]
    input: MatrixInput,
    /// Also write the report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum SolverArg {
    Exact,
    Kcenter,
}

#[derive(Args, Serialize)]
struct PlanArgs {
    #[command(flatten)]
    input: MatrixInput,
    /// Group count, or `auto` to search the recommended range.
    #[arg(long, default_value = "auto")]
    k: String,
    #[arg(long, value_enum, default_value_t = SolverArg::Exact)]
    solver: SolverArg,
    /// Largest n handed to the exact solver.
    #[arg(long, default_value_t = 12)]
    max_exact: usize,
    /// Plan output; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum ModeArg {
    Baseline,
    Grouped,
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    /// Trace (JSON lines) or a single matrix (.csv/.json) held constant.
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    rtt: bool,
    /// Starting plan; without it the planner runs on the first matrix.
    #[arg(long, conflicts_with = "auto")]
    plan: Option<PathBuf>,
    /// Plan automatically (the default when no plan is given).
    #[arg(long)]
    auto: bool,
    /// Group count used by the planner, or `auto`.
    #[arg(long, default_value = "auto")]
    k: String,
    #[arg(long, value_enum, default_value_t = SolverArg::Exact)]
    solver: SolverArg,
    #[arg(long, value_enum, default_value_t = ModeArg::Grouped)]
    mode: ModeArg,
    #[arg(long, default_value_t = 100)]
    rounds: usize,
    #[arg(long, default_value_t = 10)]
    interval: u64,
    #[arg(long, default_value_t = 10)]
    updates: usize,
    #[arg(long, default_value_t = 10_000)]
    keys: u64,
    #[arg(long, default_value_t = 0.0)]
    conflict: f64,
    #[arg(long, default_value_t = 0.0)]
    dup: f64,
    #[arg(long, default_value_t = 0.0)]
    null: f64,
    #[arg(long, default_value_t = 0.9)]
    zipf: f64,
    /// Per-key payload bytes, `N` or `MIN:MAX`.
    #[arg(long, default_value = "256:1024")]
    payload: String,
    #[arg(long, default_value_t = 0.0)]
    loss: f64,
    /// Retransmission timeout in ms.
    #[arg(long, default_value_t = 200.0)]
    tau: f64,
    #[arg(long, default_value_t = 0.05)]
    min_gain: f64,
    #[arg(long)]
    no_filter: bool,
    #[arg(long)]
    no_routing: bool,
    #[arg(long)]
    no_regroup: bool,
    /// JSON list of failure events.
    #[arg(long)]
    failures: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report output: `.json` for the full report, `.csv` for one row per round.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct AnalyzeArgs {
    #[arg(long)]
    report: PathBuf,
    /// Reference run for the comparison.
    #[arg(long)]
    baseline: Option<PathBuf>,
    /// Comma-separated percentiles in percent.
    #[arg(long, default_value = "50,90,99")]
    percentiles: String,
    #[arg(long)]
    cdf: Option<PathBuf>,
    #[arg(long)]
    heatmap: Option<PathBuf>,
    /// Summary output; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct CoordsArgs {
    #[command(flatten)]
    input: MatrixInput,
    #[arg(long, default_value_t = 100)]
    rounds: usize,
    #[arg(long, default_value_t = 3)]
    dimension: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report output; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// An error tagged with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = match error.downcast_ref::<SimError>() {
            Some(SimError::Invariant(_)) => EXIT_INVARIANT,
            _ => EXIT_VALIDATION,
        };
        Failure { code, error }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Tracegen(a) => tracegen(a),
        Command::Tiv(a) => tiv(a),
        Command::Plan(a) => plan(a),
        Command::Simulate(a) => simulate(a),
        Command::Analyze(a) => analyze(a),
        Command::Coords(a) => coords(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

type CmdResult = Result<(), Failure>;

fn usage(msg: String) -> Failure {
    Failure { code: EXIT_USAGE, error: anyhow!(msg) }
}

fn read_input(path: &Path, manifest: &mut RunManifest) -> anyhow::Result<Vec<u8>> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    manifest.input(path, &bytes);
    Ok(bytes)
}

fn load_matrix(path: &Path, rtt: bool, manifest: &mut RunManifest) -> anyhow::Result<LatencyMatrix> {
    let bytes = read_input(path, manifest)?;
    let m = LatencyMatrix::load(&bytes[..], MatrixFormat::from_path(path))
        .with_context(|| format!("invalid matrix {}", path.display()))?;
    Ok(if rtt { m.halved() } else { m })
}

fn emit(out: Option<&Path>, contents: String) -> anyhow::Result<()> {
    match out {
        Some(p) => {
            let mut o = Outputs::default();
            o.add(p, contents);
            o.commit()
        }
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn parse_k(k: &str) -> Result<KMode, Failure> {
    if k.eq_ignore_ascii_case("auto") {
        return Ok(KMode::Auto);
    }
    k.parse::<usize>().map(KMode::Fixed).map_err(|_| usage(format!("--k expects an integer or `auto`, got `{k}`")))
}

fn planner_config(k: &str, solver: SolverArg, max_exact: usize) -> Result<PlannerConfig, Failure> {
    Ok(PlannerConfig {
        k_mode: parse_k(k)?,
        solver: match solver {
            SolverArg::Exact => Solver::Exact,
            SolverArg::Kcenter => Solver::Kcenter,
        },
        max_exact_n: max_exact,
        ..PlannerConfig::default()
    })
}

fn tracegen(a: TracegenArgs) -> CmdResult {
    let mut manifest = RunManifest::new("tracegen", Some(a.seed), &a);
    let base = load_matrix(&a.base, a.rtt, &mut manifest)?;
    let params = TraceParams {
        knots_per_pair: a.knots,
        jitter_scale: a.jitter,
        duration_ms: a.duration,
        step_ms: a.step,
        seed: a.seed,
    };
    let trace = gen_trace(&base, &params).context("trace generation failed")?;
    let mut o = Outputs::default();
    o.add_with_sidecar(&a.out, trace.to_jsonl_string(), &manifest)?;
    o.commit()?;
    Ok(())
}

fn tiv(a: TivArgs) -> CmdResult {
    let mut manifest = RunManifest::new("tiv", None, &a);
    let m = load_matrix(&a.input.matrix, a.input.rtt, &mut manifest)?;
    let report = tiv_scan(&m).context("cannot scan matrix")?;
    println!("violation fraction: {}", report.violation_fraction);
    for v in &report.violations {
        println!("{} -> {} via {}: relayed {} < direct {}", v.src, v.dst, v.relay, v.relayed_ms, v.direct_ms);
    }
    if let Some(out) = &a.out {
        emit(Some(out), with_manifest(&report, &manifest)?)?;
    }
    Ok(())
}

fn plan(a: PlanArgs) -> CmdResult {
    let mut manifest = RunManifest::new("plan", None, &a);
    let m = load_matrix(&a.input.matrix, a.input.rtt, &mut manifest)?;
    let cfg = planner_config(&a.k, a.solver, a.max_exact)?;
    let plan = make_plan(&m, &cfg).context("planning failed")?;
    emit(a.out.as_deref(), with_manifest(&plan, &manifest)?)?;
    Ok(())
}

fn parse_payload(s: &str) -> Result<PayloadDist, Failure> {
    let bad = || usage(format!("--payload expects N or MIN:MAX, got `{s}`"));
    let parse = |x: &str| x.trim().parse::<u64>().map_err(|_| bad());
    match s.split_once(':') {
        Some((lo, hi)) => Ok(PayloadDist { min_bytes: parse(lo)?, max_bytes: parse(hi)? }),
        None => Ok(PayloadDist::fixed(parse(s)?)),
    }
}

fn load_trace(path: &Path, rtt: bool, manifest: &mut RunManifest) -> anyhow::Result<LatencyTrace> {
    let is_matrix = matches!(path.extension().and_then(|e| e.to_str()), Some("csv" | "json"));
    if is_matrix {
        return Ok(LatencyTrace::constant(load_matrix(path, rtt, manifest)?));
    }
    let bytes = read_input(path, manifest)?;
    let trace = LatencyTrace::read_jsonl(&bytes[..]).with_context(|| format!("invalid trace {}", path.display()))?;
    Ok(if rtt { trace.halved() } else { trace })
}

fn simulate(a: SimulateArgs) -> CmdResult {
    let mut manifest = RunManifest::new("simulate", Some(a.seed), &a);
    let trace = load_trace(&a.trace, a.rtt, &mut manifest)?;
    let plan = match &a.plan {
        Some(p) => {
            let bytes = read_input(p, &mut manifest)?;
            Some(serde_json::from_slice::<GroupPlan>(&bytes).with_context(|| format!("invalid plan {}", p.display()))?)
        }
        None => None,
    };
    let failures = match &a.failures {
        Some(p) => {
            let bytes = read_input(p, &mut manifest)?;
            serde_json::from_slice::<Vec<FailureEvent>>(&bytes)
                .with_context(|| format!("invalid failures file {}", p.display()))?
        }
        None => Vec::new(),
    };
    let cfg = SimConfig {
        rounds: a.rounds,
        round_interval_ms: a.interval,
        mode: match a.mode {
            ModeArg::Baseline => Mode::Baseline,
            ModeArg::Grouped => Mode::Grouped,
        },
        planner: planner_config(&a.k, a.solver, PlannerConfig::default().max_exact_n)?,
        plan,
        min_gain: a.min_gain,
        tiv_routing: !a.no_routing,
        filter: !a.no_filter,
        regroup: !a.no_regroup,
        workload: WorkloadConfig {
            updates_per_node: a.updates,
            keys: a.keys,
            zipf_theta: a.zipf,
            payload: parse_payload(&a.payload)?,
            conflict_ratio: a.conflict,
            dup_ratio: a.dup,
            null_ratio: a.null,
            ..WorkloadConfig::default()
        },
        loss_rate: a.loss,
        retransmit_timeout_ms: a.tau,
        failures,
        seed: a.seed,
    };
    let report = run_simulation(&trace, &cfg).map_err(anyhow::Error::from)?;
    let mut o = Outputs::default();
    if a.out.extension().is_some_and(|e| e == "csv") {
        o.add_with_sidecar(&a.out, report.rounds_csv(), &manifest)?;
    } else {
        o.add(&a.out, with_manifest(&report, &manifest)?);
    }
    o.commit()?;
    Ok(())
}

#[derive(Serialize)]
struct PercentileRow {
    p: f64,
    makespan_ms: f64,
}

#[derive(Serialize)]
struct Summary {
    rounds: usize,
    percentiles: Vec<PercentileRow>,
    mean_makespan_ms: f64,
    totals: geosync::simulator::Totals,
    final_digest: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    comparison: Option<geosync::metrics::Comparison>,
}

fn load_report(path: &Path, manifest: &mut RunManifest) -> anyhow::Result<SimReport> {
    let bytes = read_input(path, manifest)?;
    serde_json::from_slice(&bytes).with_context(|| format!("invalid report {}", path.display()))
}

fn analyze(a: AnalyzeArgs) -> CmdResult {
    let mut manifest = RunManifest::new("analyze", None, &a);
    let ps: Vec<f64> = a
        .percentiles
        .split(',')
        .map(|s| s.trim().parse::<f64>().ok().filter(|p| *p > 0.0 && *p <= 100.0))
        .collect::<Option<_>>()
        .ok_or_else(|| usage(format!("--percentiles expects values in (0, 100], got `{}`", a.percentiles)))?;
    let report = load_report(&a.report, &mut manifest)?;
    let baseline = a.baseline.as_deref().map(|p| load_report(p, &mut manifest)).transpose()?;
    let makespans = report.makespans();
    let percentiles = ps
        .iter()
        .map(|&p| Ok(PercentileRow { p, makespan_ms: percentile(&makespans, p / 100.0)? }))
        .collect::<Result<_, geosync::metrics::MetricsError>>()
        .context("empty report")?;
    let comparison =
        baseline.as_ref().map(|b| compare(&report, b)).transpose().context("reports are not comparable")?;
    let summary = Summary {
        rounds: report.rounds.len(),
        percentiles,
        mean_makespan_ms: report.makespan.mean,
        totals: report.totals,
        final_digest: report.final_digest,
        comparison,
    };

    let mut o = Outputs::default();
    if let Some(p) = &a.cdf {
        let cdf = Cdf::from_samples(&makespans).context("empty report")?;
        o.add_with_sidecar(p, cdf.to_csv(), &manifest)?;
    }
    if let Some(p) = &a.heatmap {
        o.add_with_sidecar(p, heatmap_csv(&comm_heatmap(&report)), &manifest)?;
    }
    let body = with_manifest(&summary, &manifest)?;
    match &a.out {
        Some(p) => o.add(p, body),
        None => print!("{body}"),
    }
    o.commit()?;
    Ok(())
}

#[derive(Serialize)]
struct CoordsReport {
    rounds: usize,
    median_relative_error: Vec<f64>,
    final_median_relative_error: f64,
    coordinates: Vec<geosync::coords::NetCoordinate>,
}

fn coords(a: CoordsArgs) -> CmdResult {
    let mut manifest = RunManifest::new("coords", Some(a.seed), &a);
    let m = load_matrix(&a.input.matrix, a.input.rtt, &mut manifest)?;
    if a.dimension == 0 {
        return Err(usage("--dimension must be at least 1".into()));
    }
    let cfg = VivaldiConfig { dimension: a.dimension, ..VivaldiConfig::default() };
    let mut sys = CoordSystem::new(m.n(), cfg, a.seed);
    let mut curve = Vec::with_capacity(a.rounds);
    for _ in 0..a.rounds {
        sys.full_pair_round(&m);
        curve.push(sys.median_relative_error(&m));
    }
    let report = CoordsReport {
        rounds: a.rounds,
        final_median_relative_error: sys.median_relative_error(&m),
        median_relative_error: curve,
        coordinates: sys.coords().to_vec(),
    };
    emit(a.out.as_deref(), with_manifest(&report, &manifest)?)?;
    Ok(())
}
