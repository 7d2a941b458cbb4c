use clap::{Args, Parser, Subcommand, ValueEnum};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use szolp::solver::{Solver, SolverConfig};
use szolp::SolverError;
use szolp_cli::checks::{self, Check};
use szolp_cli::problem::{self, LoadError, SmoothnessOverride, Source};
use szolp_cli::trace::{write_trace, Format, Summary};

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_LOAD: u8 = 3;
const EXIT_INFEASIBLE_START: u8 = 4;
const EXIT_RUN_ERROR: u8 = 5;
const EXIT_OUTPUT: u8 = 6;

#[derive(Parser)]
#[command(name = "szolp", version, about = "Safe zeroth-order optimization with LP subproblems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a problem and write its iteration trace and summary.
    Run(RunArgs),
    /// Run invariant suites and report pass/fail per suite.
    Check(CheckArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Registered problem name.
    #[arg(long, conflicts_with = "case", required_unless_present = "case")]
    problem: Option<String>,
    /// Matpower-style case file for an OPF problem.
    #[arg(long)]
    case: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05, allow_negative_numbers = true)]
    eps0: f64,
    #[arg(long, default_value_t = 1e-6, allow_negative_numbers = true)]
    eps_min: f64,
    #[arg(long, default_value_t = 200)]
    k_switch: usize,
    #[arg(long, default_value_t = 10_000)]
    max_iters: usize,
    /// Uniform curvature bound for every function.
    #[arg(long = "M", allow_negative_numbers = true)]
    curvature: Option<f64>,
    /// Uniform Lipschitz bound for every function.
    #[arg(long = "L", allow_negative_numbers = true)]
    lipschitz: Option<f64>,
    /// CSV with columns `lipschitz,curvature`, one row per function.
    #[arg(long, conflicts_with_all = ["curvature", "lipschitz"])]
    smoothness: Option<PathBuf>,
    /// Trace path; defaults to `<name>-trace.<format>` in SZOLP_TRACE_DIR or
    /// the working directory.
    #[arg(long)]
    trace_out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    /// Seed for the `random-qp` problem.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write every subproblem tableau next to the trace.
    #[arg(long)]
    lp_debug: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Jsonl,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Jsonl => Format::Jsonl,
        }
    }
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, value_enum, default_value_t = Suite::All)]
    suite: Suite,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    Lp,
    Gradient,
    Safety,
    Descent,
    Localset,
    Kkt,
    Prop1,
    Powerflow,
    Opf,
    All,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => run_command(args),
        Command::Check(args) => check_command(args),
    }
}

fn fail(code: u8, message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(code)
}

fn run_command(args: RunArgs) -> ExitCode {
    let config = SolverConfig {
        eps0: args.eps0,
        eps_min: args.eps_min,
        k_switch: args.k_switch,
        max_iterations: args.max_iters,
        lp_debug: args.lp_debug,
        ..SolverConfig::default()
    };
    if let Err(e) = config.validate() {
        return fail(EXIT_USAGE, e);
    }
    let mut overrides = SmoothnessOverride {
        lipschitz: args.lipschitz,
        curvature: args.curvature,
        per_function: None,
    };
    if let Some(path) = &args.smoothness {
        match problem::read_smoothness_file(path) {
            Ok(v) => overrides.per_function = Some(v),
            Err(e) => return fail(EXIT_LOAD, e),
        }
    }
    let source = match (&args.problem, &args.case) {
        (Some(name), None) => Source::Named(name.clone()),
        (None, Some(path)) => Source::CaseFile(path.clone()),
        _ => unreachable!("clap enforces exactly one source"),
    };
    let loaded = match problem::load(&source, &overrides, args.seed) {
        Ok(p) => p,
        Err(e @ LoadError::Smoothness(_)) => return fail(EXIT_USAGE, e),
        Err(e) => return fail(EXIT_LOAD, e),
    };

    let format = Format::from(args.format);
    let trace_path = args.trace_out.clone().unwrap_or_else(|| {
        let dir = std::env::var_os("SZOLP_TRACE_DIR").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
        dir.join(format!("{}-trace.{}", loaded.name, format.extension()))
    });
    if let Some(dir) = trace_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        if let Err(e) = std::fs::create_dir_all(dir) {
            return fail(EXIT_OUTPUT, format!("cannot create {}: {e}", dir.display()));
        }
    }

    let mut solver = match Solver::new(&*loaded.problem, &loaded.start, config) {
        Ok(s) => s,
        Err(e @ SolverError::InfeasibleStart { .. }) => return fail(EXIT_INFEASIBLE_START, e),
        Err(e @ SolverError::Config(_)) => return fail(EXIT_USAGE, e),
        Err(e) => return fail(EXIT_RUN_ERROR, e),
    };
    if args.lp_debug {
        let path = sibling(&trace_path, "lp.txt");
        match File::create(&path) {
            Ok(f) => solver = solver.with_lp_dump(Box::new(BufWriter::new(f))),
            Err(e) => return fail(EXIT_OUTPUT, format!("cannot create {}: {e}", path.display())),
        }
    }
    let report = solver.run();
    let summary = Summary::from_report(&loaded.name, &report, loaded.labels.as_deref());

    let written = File::create(&trace_path)
        .map_err(|e| e.to_string())
        .and_then(|f| write_trace(&report.trace, format, BufWriter::new(f)).map_err(|e| e.to_string()))
        .and_then(|_| {
            let path = sibling(&trace_path, "summary.json");
            let mut f = File::create(&path).map_err(|e| e.to_string())?;
            serde_json::to_writer_pretty(&mut f, &summary).map_err(|e| e.to_string())?;
            f.write_all(b"\n").map_err(|e| e.to_string())
        });
    print!("{}", summary.render());
    println!("trace              {}", trace_path.display());
    if let Err(e) = written {
        return fail(EXIT_OUTPUT, format!("cannot write {}: {e}", trace_path.display()));
    }
    match &report.error {
        Some(e) => fail(EXIT_RUN_ERROR, e),
        None => ExitCode::SUCCESS,
    }
}

/// `dir/name-trace.csv` -> `dir/name-trace.<suffix>`.
fn sibling(trace: &Path, suffix: &str) -> PathBuf {
    trace.with_extension(suffix)
}

fn check_command(args: CheckArgs) -> ExitCode {
    let want = |s: Suite| args.suite == s || args.suite == Suite::All;
    let seed = args.seed;
    let mut results: Vec<Check> = Vec::new();
    if want(Suite::Lp) {
        results.push(checks::lp_equivalence(seed, 1000));
    }
    if want(Suite::Gradient) {
        results.push(checks::gradient_bound(seed, 1000));
    }
    if want(Suite::Safety) || want(Suite::Descent) {
        let stats = checks::random_qp_runs(seed, 50);
        if want(Suite::Safety) {
            results.push(checks::safety_check(&stats));
        }
        if want(Suite::Descent) {
            results.push(checks::descent_check(&stats));
        }
    }
    if want(Suite::Localset) {
        results.push(checks::localset_safety(seed, 200));
    }
    if want(Suite::Kkt) {
        let rows = checks::kkt_table();
        println!("{:<12} {:>12} {:>12} {:>12} {:>8} {:>8}", "problem", "stationarity", "complement", "distance", "iters", "seconds");
        for r in &rows {
            println!(
                "{:<12} {:>12.3e} {:>12.3e} {:>12.3e} {:>8} {:>8.3}",
                r.problem, r.stationarity, r.complementarity, r.distance, r.iterations, r.seconds
            );
        }
        results.push(checks::kkt_check(&rows, &["one-d", "qp-corner", "disk-linear"]));
    }
    if want(Suite::Prop1) {
        results.push(checks::proposition1(seed, 100));
    }
    if want(Suite::Powerflow) {
        results.push(checks::powerflow_checks(seed));
    }
    if want(Suite::Opf) {
        let outcome = checks::opf_experiment();
        results.push(checks::opf_cost_check(&outcome));
        results.push(checks::opf_active_check(&outcome));
    }
    for r in &results {
        println!("{r}");
    }
    if results.iter().all(|r| r.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_CHECK_FAILED)
    }
}
