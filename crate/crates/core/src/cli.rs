//! The `cglens` command line.
//!
//! Exit codes: 0 success, 1 verification failed, 2 bad input (unreadable or
//! invalid files, flags or problems, including non-SPD `H`), 3 solver
//! breakdown. `batch` exits with the largest code of its runs.

use std::ffi::OsString;
use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::cg::{run_cg, CgOptions, CgTrace, DirectionMode, DirectionScaling, TerminationReason};
use crate::error::{Error, Result};
use crate::generate::{generate_problem, ProblemKind, ProblemSpec};
use crate::io::{
    load_json, load_problem, oracle_to_json, report_to_json, save_problem, trace_backend, trace_from_json, trace_to_json,
    write_json, HessianStorage, MmLayout,
};
use crate::quadratic::QuadraticProblem;
use crate::scalar::{Backend, Scalar};
use crate::subspace::oracle_points;
use crate::verify::{verify_trace, Tolerances, VerificationReport, CHECK_NAMES};
use crate::Rational;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_BAD_INPUT: i32 = 2;
pub const EXIT_BREAKDOWN: i32 = 3;

/// Environment variable holding `check=value` tolerance overrides.
pub const TOL_OVERRIDES_ENV: &str = "CGLENS_TOL_OVERRIDES";

#[derive(Debug, Parser)]
#[command(name = "cglens", version, about = "Traced conjugate gradients with exact verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a generated problem to a JSON file (and optionally H as Matrix Market).
    Generate(GenerateArgs),
    /// Run CG and print r, the final gradient norm and q(x_r).
    Solve(RunArgs),
    /// Run CG (or read a saved trace) and check every derivation condition.
    Verify(VerifyArgs),
    /// Write the brute-force subspace minimizers for every k.
    Oracle(OracleArgs),
    /// Run a JSON manifest of problems and configurations in parallel.
    Batch(BatchArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    Diag,
    Laplacian1d,
    #[value(name = "rand_spd", alias = "rand-spd")]
    RandSpd,
    #[value(name = "int_spd", alias = "int-spd")]
    IntSpd,
}

impl From<KindArg> for ProblemKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Diag => ProblemKind::Diag,
            KindArg::Laplacian1d => ProblemKind::Laplacian1d,
            KindArg::RandSpd => ProblemKind::RandSpd,
            KindArg::IntSpd => ProblemKind::IntSpd,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BackendArg {
    F64,
    Rational,
}

impl From<BackendArg> for Backend {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::F64 => Backend::F64,
            BackendArg::Rational => Backend::Rational,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DirectionArg {
    Recursive,
    #[value(alias = "gradient_sum")]
    GradientSum,
    #[value(alias = "shortest_residuals")]
    ShortestResiduals,
}

impl From<DirectionArg> for DirectionMode {
    fn from(d: DirectionArg) -> Self {
        match d {
            DirectionArg::Recursive => DirectionMode::Recursive,
            DirectionArg::GradientSum => DirectionMode::GradientSum,
            DirectionArg::ShortestResiduals => DirectionMode::ShortestResiduals,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScalingArg {
    #[value(alias = "cg_standard")]
    Cg,
    Unit,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MmArg {
    Coordinate,
    Array,
}

#[derive(Debug, Clone, Args)]
struct ProblemArgs {
    /// Problem file in the JSON problem format.
    #[arg(long, conflicts_with_all = ["kind", "n", "cond", "seed"])]
    problem: Option<PathBuf>,
    /// Generated problem kind.
    #[arg(long, value_enum, requires = "n")]
    kind: Option<KindArg>,
    #[arg(long)]
    n: Option<usize>,
    /// Condition number (rand_spd).
    #[arg(long)]
    cond: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ProblemArgs {
    fn spec(&self) -> Option<ProblemSpec> {
        let kind = self.kind?;
        Some(ProblemSpec {
            kind: kind.into(),
            n: self.n.unwrap_or(0),
            condition: self.cond,
            seed: self.seed,
            spectrum: None,
        })
    }

    fn load<T: Scalar>(&self) -> Result<QuadraticProblem<T>> {
        match (&self.problem, self.spec()) {
            (Some(path), _) => load_problem(path),
            (None, Some(spec)) => generate_problem(&spec),
            (None, None) => Err(Error::InvalidSpec("give --problem <file> or --kind <kind> --n <n>".into())),
        }
    }
}

#[derive(Debug, Clone, Args)]
struct SolverArgs {
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Float stopping tolerance on ‖g_k‖ / max(‖g_0‖, 1).
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long, value_enum, default_value = "recursive")]
    direction: DirectionArg,
    #[arg(long, value_enum, default_value = "cg")]
    scaling: ScalingArg,
}

impl SolverArgs {
    fn backend(&self) -> Backend {
        self.backend.map(Backend::from).unwrap_or(Backend::F64)
    }

    fn options<T: Scalar>(&self) -> Result<CgOptions<T>> {
        let mut opts = CgOptions::default();
        if let Some(tol) = self.tol {
            if !(tol >= 0.0) || !tol.is_finite() {
                return Err(Error::InvalidSpec(format!("--tol must be finite and >= 0, got {tol}")));
            }
            opts.tol = T::from_f64(tol).unwrap_or_else(T::zero);
        }
        opts.max_iter = self.max_iter;
        opts.direction = self.direction.into();
        opts.scaling = match self.scaling {
            ScalingArg::Cg => DirectionScaling::CgStandard,
            ScalingArg::Unit => DirectionScaling::Unit,
        };
        Ok(opts)
    }
}

#[derive(Debug, Clone, Args)]
struct RunArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Write the trace JSON here.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Append a summary row to this CSV file.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
struct VerifyArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Verify this saved trace instead of running the solver.
    #[arg(long)]
    input_trace: Option<PathBuf>,
    /// Write the verification report JSON here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
struct OracleArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Write the oracle JSON here (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    kind: KindArg,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    cond: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Explicit diagonal for `diag`, comma separated (`1,1/2,3`).
    #[arg(long, value_delimiter = ',')]
    spectrum: Option<Vec<String>>,
    #[arg(long, value_enum, default_value = "rational")]
    backend: BackendArg,
    /// Output JSON path.
    #[arg(long)]
    out: PathBuf,
    /// Store H in a Matrix Market file next to the JSON file.
    #[arg(long, value_enum)]
    mm: Option<MmArg>,
}

#[derive(Debug, Clone, Args)]
struct BatchArgs {
    /// JSON manifest: `{"runs": [{"problem": "p.json" | "kind": ..., "n": ..., "backend": ..., ...}]}`.
    manifest: PathBuf,
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Directory for one report JSON per run.
    #[arg(long)]
    report_dir: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    threads: Option<usize>,
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_BAD_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Solve(a) => dispatch(a.solver.backend(), a, cmd_solve::<f64>, cmd_solve::<Rational>),
        Command::Verify(a) => verify_backend(a).and_then(|b| {
            dispatch(b, a, cmd_verify::<f64>, cmd_verify::<Rational>)
        }),
        Command::Oracle(a) => dispatch(a.run.solver.backend(), a, cmd_oracle::<f64>, cmd_oracle::<Rational>),
        Command::Batch(a) => cmd_batch(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_BAD_INPUT
        }
    }
}

fn dispatch<A>(backend: Backend, args: &A, f: impl Fn(&A) -> Result<i32>, q: impl Fn(&A) -> Result<i32>) -> Result<i32> {
    match backend {
        Backend::F64 => f(args),
        Backend::Rational => q(args),
    }
}

/// A saved trace fixes the backend; an explicit `--backend` must agree.
fn verify_backend(a: &VerifyArgs) -> Result<Backend> {
    let Some(path) = &a.input_trace else {
        return Ok(a.run.solver.backend());
    };
    let from_trace = trace_backend(&load_json(path)?)?;
    match a.run.solver.backend {
        Some(b) if Backend::from(b) != from_trace => Err(Error::InvalidSpec(format!(
            "--backend {} but the trace was written by the {from_trace} backend",
            Backend::from(b)
        ))),
        _ => Ok(from_trace),
    }
}

fn tolerances() -> Result<Tolerances> {
    let mut t = Tolerances::default();
    if let Ok(spec) = std::env::var(TOL_OVERRIDES_ENV) {
        t.apply_overrides(&spec)?;
    }
    Ok(t)
}

fn cmd_generate(a: &GenerateArgs) -> Result<i32> {
    let mut spec = ProblemSpec {
        kind: a.kind.into(),
        n: a.n,
        condition: a.cond,
        seed: a.seed,
        spectrum: None,
    };
    if let Some(s) = &a.spectrum {
        spec = spec.with_spectrum(s.clone());
    }
    let storage = match a.mm {
        None => HessianStorage::Dense,
        Some(MmArg::Coordinate) => HessianStorage::MatrixMarket(MmLayout::Coordinate),
        Some(MmArg::Array) => HessianStorage::MatrixMarket(MmLayout::Array),
    };
    let written = match Backend::from(a.backend) {
        Backend::F64 => save_problem(&generate_problem::<f64>(&spec)?, &a.out, storage)?,
        Backend::Rational => save_problem(&generate_problem::<Rational>(&spec)?, &a.out, storage)?,
    };
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(EXIT_OK)
}

fn print_summary<T: Scalar>(problem: &QuadraticProblem<T>, trace: &CgTrace<T>) -> Result<()> {
    let last = trace.records.last().expect("trace has records");
    println!("problem   {}", trace.problem_id);
    println!("backend   {}", trace.backend);
    println!("n         {}", trace.n);
    println!("r         {}", trace.r());
    println!("reason    {}", trace.termination_reason.as_str());
    println!("|g_r|^2   {}", last.grad_norm_sq.to_literal());
    println!("|g_r|     {:e}", last.grad_norm_sq.to_f64().sqrt());
    println!("q(x_r)    {}", problem.evaluate(&last.x)?.to_literal());
    if let Some(d) = &trace.diagnostic {
        println!("note      {d}");
    }
    Ok(())
}

fn solve_exit(trace: &CgTrace<impl Scalar>) -> i32 {
    if trace.termination_reason == TerminationReason::Breakdown {
        EXIT_BREAKDOWN
    } else {
        EXIT_OK
    }
}

fn cmd_solve<T: Scalar>(a: &RunArgs) -> Result<i32> {
    let problem = a.problem.load::<T>()?;
    let trace = run_cg(&problem, &a.solver.options()?)?;
    print_summary(&problem, &trace)?;
    if let Some(path) = &a.trace {
        write_json(path, &trace_to_json(&trace))?;
    }
    if let Some(path) = &a.csv {
        append_csv(path, &[csv_row(&trace, None)])?;
    }
    Ok(solve_exit(&trace))
}

fn verify_exit<T: Scalar>(trace: &CgTrace<T>, report: &VerificationReport<T>) -> i32 {
    if trace.termination_reason == TerminationReason::Breakdown {
        EXIT_BREAKDOWN
    } else if report.overall {
        EXIT_OK
    } else {
        EXIT_FAILED
    }
}

fn print_report<T: Scalar>(report: &VerificationReport<T>) {
    for c in &report.checks {
        println!(
            "{:4} {:34} measured {:>12.3e}  tol {:>8.1e}",
            if c.passed { "ok" } else { "FAIL" },
            c.name,
            c.measured.to_f64(),
            c.tolerance.to_f64()
        );
    }
    println!("overall   {}", if report.overall { "pass" } else { "FAIL" });
}

fn cmd_verify<T: Scalar>(a: &VerifyArgs) -> Result<i32> {
    let tolerances = tolerances()?;
    let problem = a.run.problem.load::<T>()?;
    let trace = match &a.input_trace {
        Some(path) => trace_from_json::<T>(load_json(path)?)?,
        None => run_cg(&problem, &a.run.solver.options()?)?,
    };
    let report = verify_trace(&problem, &trace, &tolerances)?;
    print_summary(&problem, &trace)?;
    print_report(&report);
    if let Some(path) = &a.run.trace {
        write_json(path, &trace_to_json(&trace))?;
    }
    if let Some(path) = &a.report {
        write_json(path, &report_to_json(&report))?;
    }
    if let Some(path) = &a.run.csv {
        append_csv(path, &[csv_row(&trace, Some(&report))])?;
    }
    Ok(verify_exit(&trace, &report))
}

fn cmd_oracle<T: Scalar>(a: &OracleArgs) -> Result<i32> {
    let problem = a.run.problem.load::<T>()?;
    let trace = run_cg(&problem, &a.run.solver.options()?)?;
    let points = oracle_points(&problem, &trace)?;
    let json = oracle_to_json(&trace, &points);
    match &a.out {
        Some(path) => write_json(path, &json)?,
        None => println!("{}", serde_json::to_string_pretty(&json)?),
    }
    if let Some(path) = &a.run.trace {
        write_json(path, &trace_to_json(&trace))?;
    }
    Ok(solve_exit(&trace))
}

// ---------------------------------------------------------------- CSV

pub fn csv_header() -> Vec<String> {
    let mut h: Vec<String> = ["problem_id", "n", "backend", "direction", "scaling", "r", "termination_reason", "overall"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend(CHECK_NAMES.iter().map(|s| s.to_string()));
    h
}

fn csv_row<T: Scalar>(trace: &CgTrace<T>, report: Option<&VerificationReport<T>>) -> Vec<String> {
    let mut row = vec![
        trace.problem_id.clone(),
        trace.n.to_string(),
        trace.backend.to_string(),
        trace.direction.as_str().to_string(),
        serde_json::to_value(trace.scaling)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default(),
        trace.r().to_string(),
        trace.termination_reason.as_str().to_string(),
        report.map(|r| r.overall.to_string()).unwrap_or_default(),
    ];
    for name in CHECK_NAMES {
        row.push(
            report
                .and_then(|r| r.check(name))
                .map(|c| c.measured.to_literal())
                .unwrap_or_default(),
        );
    }
    row
}

/// Appends rows, writing the header first if the file is new or empty.
fn append_csv(path: &Path, rows: &[Vec<String>]) -> Result<()> {
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::Writer::from_writer(file);
    if fresh {
        w.write_record(csv_header())?;
    }
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------- batch

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct BatchEntry {
    #[serde(default)]
    problem: Option<PathBuf>,
    #[serde(default)]
    kind: Option<ProblemKind>,
    #[serde(default)]
    n: Option<usize>,
    #[serde(default)]
    condition: Option<f64>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    spectrum: Option<Vec<String>>,
    #[serde(default = "default_backend")]
    backend: Backend,
    #[serde(default = "default_direction")]
    direction: DirectionMode,
    #[serde(default)]
    scaling: Option<String>,
    #[serde(default)]
    tol: Option<f64>,
    #[serde(default)]
    max_iter: Option<usize>,
}

fn default_backend() -> Backend {
    Backend::F64
}

fn default_direction() -> DirectionMode {
    DirectionMode::Recursive
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    runs: Vec<BatchEntry>,
}

struct BatchOutcome {
    code: i32,
    row: Option<Vec<String>>,
    report: Option<(String, serde_json::Value)>,
}

impl BatchEntry {
    fn load<T: Scalar>(&self, base: &Path) -> Result<QuadraticProblem<T>> {
        match (&self.problem, self.kind) {
            (Some(p), None) => load_problem(&base.join(p)),
            (None, Some(kind)) => {
                let mut spec = ProblemSpec {
                    kind,
                    n: self.n.unwrap_or(0),
                    condition: self.condition,
                    seed: self.seed,
                    spectrum: None,
                };
                if let Some(s) = &self.spectrum {
                    spec = spec.with_spectrum(s.clone());
                }
                generate_problem(&spec)
            }
            _ => Err(Error::InvalidSpec("each run needs exactly one of \"problem\" or \"kind\"".into())),
        }
    }

    fn options<T: Scalar>(&self) -> Result<CgOptions<T>> {
        let mut opts = CgOptions::default();
        if let Some(tol) = self.tol {
            opts.tol = T::from_f64(tol).ok_or_else(|| Error::InvalidSpec(format!("bad tol {tol}")))?;
        }
        opts.max_iter = self.max_iter;
        opts.direction = self.direction;
        opts.scaling = match self.scaling.as_deref().unwrap_or("cg") {
            "cg" | "cg_standard" => DirectionScaling::CgStandard,
            "unit" => DirectionScaling::Unit,
            other => return Err(Error::InvalidSpec(format!("unknown scaling {other:?}"))),
        };
        Ok(opts)
    }

    fn run<T: Scalar>(&self, base: &Path, tolerances: &Tolerances) -> Result<BatchOutcome> {
        let problem = self.load::<T>(base)?;
        let trace = run_cg(&problem, &self.options()?)?;
        let report = verify_trace(&problem, &trace, tolerances)?;
        Ok(BatchOutcome {
            code: verify_exit(&trace, &report),
            row: Some(csv_row(&trace, Some(&report))),
            report: Some((trace.problem_id.clone(), report_to_json(&report))),
        })
    }

    fn execute(&self, base: &Path, tolerances: &Tolerances) -> BatchOutcome {
        let result = match self.backend {
            Backend::F64 => self.run::<f64>(base, tolerances),
            Backend::Rational => self.run::<Rational>(base, tolerances),
        };
        result.unwrap_or_else(|e| {
            eprintln!("error: {e}");
            BatchOutcome {
                code: EXIT_BAD_INPUT,
                row: None,
                report: None,
            }
        })
    }
}

fn cmd_batch(a: &BatchArgs) -> Result<i32> {
    let tolerances = tolerances()?;
    let manifest: Manifest = serde_json::from_value(load_json(&a.manifest)?)?;
    let base = a.manifest.parent().unwrap_or(Path::new(".")).to_path_buf();
    if let Some(dir) = &a.report_dir {
        fs::create_dir_all(dir)?;
    }
    let threads = a
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
        .clamp(1, manifest.runs.len().max(1));

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<BatchOutcome>>> = Mutex::new((0..manifest.runs.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(entry) = manifest.runs.get(i) else { break };
                let outcome = entry.execute(&base, &tolerances);
                results.lock().expect("batch results lock")[i] = Some(outcome);
            });
        }
    });

    // single writer, rows in manifest order
    let results = results.into_inner().expect("batch results lock");
    let mut code = EXIT_OK;
    let mut rows = Vec::new();
    for (i, outcome) in results.into_iter().enumerate() {
        let outcome = outcome.expect("every run completes");
        code = code.max(outcome.code);
        if let (Some(dir), Some((id, json))) = (&a.report_dir, &outcome.report) {
            write_json(&dir.join(format!("{i:04}-{id}.json")), json)?;
        }
        if let Some(row) = outcome.row {
            println!("{:4} {} {} r={}", if outcome.code == EXIT_OK { "ok" } else { "FAIL" }, row[0], row[2], row[5]);
            rows.push(row);
        }
    }
    if let Some(path) = &a.csv {
        append_csv(path, &rows)?;
    }
    Ok(code)
}
