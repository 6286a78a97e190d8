mod manifest;
mod map;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use tandem_core::error::{ExperimentError, IoError, OracleError, SimError, SolveError, StructureError};
use tandem_core::experiments::{paper_examples_report, run_batch, BatchReport, ExperimentConfig, RegimeName};
use tandem_core::io::{read_instance_json, read_policy_csv, write_decision_grid_csv, write_json, write_value_policy_csv};
use tandem_core::oracle::{enumerate_policies, value_iteration_capped, OracleResult};
use tandem_core::simulate::{simulate, SimConfig};
use tandem_core::structure::{verify, DecisionFunctions};
use tandem_core::{solve_with, ModelError, SolveOptions, State, SystemParams, TieBreak};

use manifest::{reproducible, Envelope, RunManifest};

#[derive(Parser)]
#[command(name = "tandem", version, about = "Optimal flexible-server allocation in a two-station tandem clearing system")]
struct Cli {
    /// Worker threads for sweeps, simulations and enumeration.
    #[arg(long, global = true, env = "TANDEM_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance and write the value/policy table as CSV.
    Solve(SolveArgs),
    /// Print the optimal policy as a character map.
    Policy(PolicyArgs),
    /// Check the structural claims on one instance and write a JSON report.
    Verify(VerifyArgs),
    /// Run a seeded batch over random instances of a regime.
    Sweep(SweepArgs),
    /// Monte Carlo estimate of the cost from a start state.
    Simulate(SimulateArgs),
    /// Cross-check the solver by enumeration or value iteration.
    Oracle(OracleArgs),
    /// Reproduce the two published counterexamples.
    PaperExamples(OutArgs),
}

#[derive(Args, Serialize)]
struct SolverFlags {
    /// Relative width of the tie band at the argmin.
    #[arg(long, env = "TANDEM_TIE_TOL", default_value_t = tandem_core::solver::TIE_TOLERANCE)]
    tie_tol: f64,
    /// Preferred flexible-server station on ties.
    #[arg(long, env = "TANDEM_TIE_BREAK", value_enum, default_value_t = TieChoice::Upstream)]
    tie_break: TieChoice,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum TieChoice {
    Upstream,
    Downstream,
}

impl SolverFlags {
    fn options(&self) -> SolveOptions {
        SolveOptions {
            tie_tolerance: self.tie_tol,
            tie_break: match self.tie_break {
                TieChoice::Upstream => TieBreak::Upstream,
                TieChoice::Downstream => TieBreak::Downstream,
            },
        }
    }
}

#[derive(Args, Serialize)]
struct OutArgs {
    /// Output file; standard output when omitted.
    #[arg(long, env = "TANDEM_OUT")]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct SolveArgs {
    #[arg(long, env = "TANDEM_INSTANCE")]
    instance: PathBuf,
    #[arg(long, env = "TANDEM_NMAX", default_value_t = 40)]
    nmax: u32,
    /// Also write the decision-function grid to this CSV file.
    #[arg(long)]
    grid: Option<PathBuf>,
    #[command(flatten)]
    out: OutArgs,
    #[command(flatten)]
    solver: SolverFlags,
}

#[derive(Args, Serialize)]
struct PolicyArgs {
    #[arg(long, env = "TANDEM_INSTANCE")]
    instance: PathBuf,
    #[arg(long, env = "TANDEM_NMAX", default_value_t = 20)]
    nmax: u32,
    #[command(flatten)]
    out: OutArgs,
    #[command(flatten)]
    solver: SolverFlags,
}

#[derive(Args, Serialize)]
struct VerifyArgs {
    #[arg(long, env = "TANDEM_INSTANCE")]
    instance: PathBuf,
    #[arg(long, env = "TANDEM_NMAX", default_value_t = 40)]
    nmax: u32,
    /// Also write the decision-function grid to this CSV file.
    #[arg(long)]
    grid: Option<PathBuf>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Serialize)]
struct SweepArgs {
    #[arg(long, env = "TANDEM_REGIME")]
    regime: String,
    #[arg(long, env = "TANDEM_COUNT", default_value_t = 1000)]
    count: u64,
    #[arg(long, env = "TANDEM_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, env = "TANDEM_NMAX", default_value_t = 40)]
    nmax: u32,
    /// Counterexamples and findings kept in the report.
    #[arg(long, default_value_t = 5)]
    keep: usize,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    #[arg(long, env = "TANDEM_INSTANCE")]
    instance: PathBuf,
    /// Start state as `X1,X2`.
    #[arg(long, value_parser = parse_state)]
    start: (u32, u32),
    #[arg(long, env = "TANDEM_REPS", default_value_t = 100_000)]
    reps: u64,
    #[arg(long, env = "TANDEM_SEED", default_value_t = 0)]
    seed: u64,
    /// Policy CSV to follow instead of the optimal policy.
    #[arg(long)]
    policy: Option<PathBuf>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Method {
    Enum,
    Vi,
}

#[derive(Args, Serialize)]
struct OracleArgs {
    #[arg(long, env = "TANDEM_INSTANCE")]
    instance: PathBuf,
    #[arg(long, env = "TANDEM_NMAX", default_value_t = 3)]
    nmax: u32,
    #[arg(long, value_enum, default_value_t = Method::Enum)]
    method: Method,
    /// Span tolerance for value iteration.
    #[arg(long, env = "TANDEM_TOL", default_value_t = tandem_core::oracle::DEFAULT_VI_TOLERANCE)]
    tol: f64,
    #[arg(long, default_value_t = tandem_core::oracle::DEFAULT_VI_MAX_ITERATIONS)]
    max_iterations: u64,
    /// Largest accepted |V_oracle - V_solver|.
    #[arg(long, env = "TANDEM_AGREE_TOL", default_value_t = 1e-6)]
    agree_tol: f64,
    /// Skip dominated actions during enumeration.
    #[arg(long)]
    prune: bool,
    #[command(flatten)]
    out: OutArgs,
}

fn parse_state(s: &str) -> Result<(u32, u32), String> {
    let (a, b) = s.split_once(',').ok_or("expected X1,X2")?;
    let p = |t: &str| t.trim().parse::<u32>().map_err(|e| format!("{t:?}: {e}"));
    Ok((p(a)?, p(b)?))
}

/// A failed run with its exit code: 1 assertion, 2 usage or I/O, 3 validation.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    fn assertion(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }

    fn validation(e: &ModelError) -> Self {
        Failure {
            code: 3,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::usage(e.to_string())
    }
}

impl From<SolveError> for Failure {
    fn from(e: SolveError) -> Self {
        match &e {
            SolveError::Model(m) => Failure::validation(m),
            SolveError::DomainTooSmall { .. } => Failure::usage(e.to_string()),
            _ => Failure::assertion(e.to_string()),
        }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Model(m) => Failure::validation(&m),
            IoError::Solve(s) => s.into(),
            other => Failure::usage(other.to_string()),
        }
    }
}

impl From<StructureError> for Failure {
    fn from(e: StructureError) -> Self {
        match e {
            StructureError::Solve(s) => s.into(),
            StructureError::DomainTooSmall(_) => Failure::usage(e.to_string()),
            other => Failure::assertion(other.to_string()),
        }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Solve(s) => s.into(),
            ExperimentError::Structure(s) => s.into(),
            ExperimentError::GoldenMismatch(m) => Failure::assertion(m),
            other => Failure::usage(other.to_string()),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Solve(s) => s.into(),
            SimError::NoReplications => Failure::usage(e.to_string()),
            other => Failure::assertion(other.to_string()),
        }
    }
}

impl From<OracleError> for Failure {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::Solve(s) => s.into(),
            OracleError::MaxIterationsExceeded { .. } => Failure::assertion(e.to_string()),
            other => Failure::usage(other.to_string()),
        }
    }
}

fn load_instance(path: &Path) -> Result<SystemParams, Failure> {
    let f = File::open(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    Ok(read_instance_json(BufReader::new(f))?)
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Failure::usage(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn emit<T: Serialize>(out: &Option<PathBuf>, manifest: &RunManifest, report: &T) -> Result<(), Failure> {
    let mut w = sink(out)?;
    write_json(&Envelope { manifest, report }, &mut w)?;
    w.flush()?;
    Ok(())
}

fn cmd_solve(a: &SolveArgs) -> Result<(), Failure> {
    let p = load_instance(&a.instance)?;
    let (table, policy) = solve_with(&p, a.nmax, &a.solver.options())?;
    let mut w = sink(&a.out.out)?;
    write_value_policy_csv(&table, &policy, &mut w)?;
    w.flush()?;
    if let Some(g) = &a.grid {
        let fns = DecisionFunctions::new(&table)?;
        write_decision_grid_csv(&fns, BufWriter::new(File::create(g)?))?;
    }
    Ok(())
}

fn cmd_policy(a: &PolicyArgs) -> Result<(), Failure> {
    let p = load_instance(&a.instance)?;
    let (_, policy) = solve_with(&p, a.nmax, &a.solver.options())?;
    let mut w = sink(&a.out.out)?;
    w.write_all(map::render(&policy, a.nmax, a.nmax).as_bytes())?;
    w.flush()?;
    Ok(())
}

fn cmd_verify(a: &VerifyArgs) -> Result<(), Failure> {
    let p = load_instance(&a.instance)?;
    let (table, policy) = tandem_core::solve(&p, a.nmax)?;
    let report = verify(&table, &policy)?;
    if let Some(g) = &a.grid {
        let fns = DecisionFunctions::new(&table)?;
        write_decision_grid_csv(&fns, BufWriter::new(File::create(g)?))?;
    }
    let manifest = RunManifest::new("verify", a).input(&a.instance)?;
    emit(&a.out.out, &manifest, &report)?;
    let failed: Vec<&str> = report.failures().map(|v| v.claim.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::assertion(format!("failed claims: {}", failed.join(", "))))
    }
}

fn summarize(report: &BatchReport) -> String {
    let violations: Vec<String> = report
        .claims
        .iter()
        .filter(|(_, t)| t.violations > 0)
        .map(|(k, t)| format!("{k} {}/{}", t.violations, t.checked))
        .collect();
    format!(
        "{}: {} instances, violations={}{}",
        report.regime,
        report.instances,
        report.total_violations(),
        if violations.is_empty() { String::new() } else { format!(" ({})", violations.join(", ")) }
    )
}

fn cmd_sweep(a: &SweepArgs) -> Result<(), Failure> {
    let regime: RegimeName = a.regime.parse()?;
    let mut cfg = ExperimentConfig::new(regime).with_count(a.count).with_seed(a.seed).with_n_max(a.nmax);
    cfg.keep = a.keep;
    let mut report = run_batch(&cfg)?;
    if reproducible() {
        report = report.without_timing();
    }
    let manifest = RunManifest::new("sweep", &cfg).seed(a.seed);
    emit(&a.out.out, &manifest, &report)?;
    eprintln!("{}", summarize(&report));
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::assertion(summarize(&report)))
    }
}

#[derive(Serialize)]
struct SimulationReport {
    mean: f64,
    se: f64,
    reps: u64,
    digest: String,
    /// Exact cost of the followed policy from the start state.
    exact: f64,
    z: f64,
}

fn cmd_simulate(a: &SimulateArgs) -> Result<(), Failure> {
    let p = load_instance(&a.instance)?;
    let start = State::new(a.start.0, a.start.1);
    let mut manifest = RunManifest::new("simulate", a).seed(a.seed).input(&a.instance)?;
    let policy = match &a.policy {
        Some(path) => {
            manifest = manifest.input(path)?;
            read_policy_csv(BufReader::new(File::open(path)?), &p)?
        }
        None => tandem_core::solve(&p, start.total().max(1))?.1,
    };
    if start.total() > policy.n_max {
        return Err(Failure::usage(format!("start {start} lies outside the policy domain n_max = {}", policy.n_max)));
    }
    let exact = tandem_core::evaluate_policy(&p, &policy, policy.n_max)?.get(start).expect("in domain");
    let r = simulate(&p, &policy, &SimConfig::new(start, a.reps, a.seed))?;
    let z = if r.se > 0.0 { (r.mean - exact) / r.se } else { 0.0 };
    let report = SimulationReport {
        mean: r.mean,
        se: r.se,
        reps: r.reps,
        digest: r.digest,
        exact,
        z,
    };
    emit(&a.out.out, &manifest, &report)
}

fn cmd_oracle(a: &OracleArgs) -> Result<(), Failure> {
    let p = load_instance(&a.instance)?;
    let result: OracleResult = match a.method {
        Method::Enum => enumerate_policies(&p, a.nmax, a.prune)?,
        Method::Vi => value_iteration_capped(&p, a.nmax, a.tol, a.max_iterations)?,
    };
    let manifest = RunManifest::new("oracle", a).input(&a.instance)?;
    emit(&a.out.out, &manifest, &result)?;
    if result.agrees(a.agree_tol) {
        Ok(())
    } else {
        Err(Failure::assertion(format!(
            "oracle disagrees with the solver by {} at {}",
            result.residual, result.worst_state
        )))
    }
}

fn cmd_paper_examples(a: &OutArgs) -> Result<(), Failure> {
    let mut report = paper_examples_report()?;
    if reproducible() {
        report = report.without_timing();
    }
    let manifest = RunManifest::new("paper-examples", a);
    emit(&a.out, &manifest, &report)?;
    for (claim, t) in &report.claims {
        eprintln!("{} {claim}", if t.violations == 0 { "ok  " } else { "FAIL" });
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::assertion("golden mismatch"))
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::usage(e.to_string()))?;
    }
    match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Policy(a) => cmd_policy(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::PaperExamples(a) => cmd_paper_examples(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
