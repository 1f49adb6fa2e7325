//! Command-line front end: `solve`, `bench`, `trace`, `check` and `list`.

use std::f64::consts::FRAC_PI_2;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use arcsearch::arc::{point_on_arc, x_on_arc};
use arcsearch::kkt::residual;
use arcsearch::model::{check_derivatives_with, CheckTolerances, GradientFault};
use arcsearch::problems::{self, BenchmarkEntry, PROBLEM_SETS};
use arcsearch::solver::solve_from;
use arcsearch::{init_check, solve_observed, NlpProblem, Variant};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

pub mod artifact;
pub mod settings;

use artifact::{BenchRow, BenchTable, RunArtifact, BENCH_SCHEMA, CSV_HEADER};
use settings::{Settings, SolverFlags};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_INIT: u8 = 2;
pub const EXIT_NOT_CONVERGED: u8 = 3;
pub const EXIT_USAGE: u8 = 64;

#[derive(Debug)]
pub struct UsageError(pub String);

#[derive(Parser, Debug)]
#[command(name = "arcsearch", version, about = "Arc-search interior-point solver for smooth constrained problems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve one registered problem from its interior start
    Solve {
        problem: String,
        #[command(flatten)]
        flags: SolverFlags,
        /// Write the run artifact as JSON
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Run a problem set and print a results table
    Bench {
        /// all, hs-subset, table, hand-coded, hard, or a comma-separated list of problems
        set: String,
        #[command(flatten)]
        flags: SolverFlags,
        /// Run variants 1, 2 and 3 on every problem
        #[arg(long)]
        compare_variants: bool,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Write the table to a file instead of stdout
        #[arg(long)]
        output: Option<PathBuf>,
        /// Worker threads; each solve stays single-threaded
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Sample x(α) along every accepted arc as CSV
    Trace {
        problem: String,
        #[command(flatten)]
        flags: SolverFlags,
        /// α samples per arc, equispaced on [0, π/2]
        #[arg(long, default_value_t = 50)]
        samples: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Compare analytic derivatives with finite differences
    Check {
        problem: String,
        /// Tolerance for first and second derivatives
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
        #[arg(long, default_value_t = 1e-4)]
        third_tol: f64,
        #[arg(long, value_enum, default_value_t = CheckPoint::Start)]
        at: CheckPoint,
        /// Corrupt this entry of the objective gradient by 1e-2
        #[arg(long)]
        inject_gradient_fault: Option<usize>,
    },
    /// List registered problems
    List,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CheckPoint {
    /// The documented interior start
    Start,
    /// The reference solution, when known
    Solution,
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Solve { problem, flags, json } => cmd_solve(&problem, &flags, json.as_deref()),
        Command::Bench { set, flags, compare_variants, format, output, jobs } => {
            cmd_bench(&set, &flags, compare_variants, format, output.as_deref(), jobs)
        }
        Command::Trace { problem, flags, samples, output } => cmd_trace(&problem, &flags, samples, output.as_deref()),
        Command::Check { problem, tol, third_tol, at, inject_gradient_fault } => {
            cmd_check(&problem, tol, third_tol, at, inject_gradient_fault)
        }
        Command::List => cmd_list(),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Usage(UsageError(msg))) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}

enum Failure {
    Usage(UsageError),
    Io(io::Error),
}

impl From<UsageError> for Failure {
    fn from(e: UsageError) -> Self {
        Failure::Usage(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e)
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Io(e.into())
    }
}

fn lookup(name: &str) -> Result<BenchmarkEntry, UsageError> {
    problems::get_problem(name).map_err(|e| UsageError(e.to_string()))
}

fn sink(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn fmt_x(x: &[f64]) -> String {
    let parts: Vec<String> = x.iter().map(|v| format!("{v:.6}")).collect();
    format!("({})", parts.join(", "))
}

fn cmd_solve(name: &str, flags: &SolverFlags, json: Option<&Path>) -> Result<u8, Failure> {
    let entry = lookup(name)?;
    let settings = Settings::load(flags)?;
    let cfg = settings.config_for(&entry, None)?;
    let report = match solve_from(entry.problem.as_ref(), &entry.start(), &cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {}: {e}", entry.name);
            return Ok(EXIT_INIT);
        }
    };
    println!(
        "Prob {}  Obj {:.10}  Iter {}  Seconds {:.3}  ConvPhi {:.4e}  status {}",
        entry.name, report.objective, report.iterations, report.seconds, report.phi, report.status
    );
    println!("x = {}", fmt_x(report.iterate.x.as_slice()));
    if let Some(msg) = &report.message {
        println!("note: {msg}");
    }
    if let Some(path) = json {
        let artifact = RunArtifact::new(&entry.name, &cfg, &report);
        let mut out = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut out, &artifact).map_err(io::Error::from)?;
        out.flush()?;
    }
    Ok(if report.converged() { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

fn resolve_set(set: &str) -> Result<Vec<BenchmarkEntry>, UsageError> {
    if set.trim().is_empty() {
        return Err(UsageError(format!("empty problem set; use one of {} or a list of names", PROBLEM_SETS.join(", "))));
    }
    if let Some(entries) = problems::problem_set(set) {
        return Ok(entries);
    }
    set.split(',').map(|n| lookup(n.trim())).collect()
}

fn bench_row(entry: &BenchmarkEntry, settings: &Settings, variant: Option<Variant>) -> Result<BenchRow, UsageError> {
    let cfg = settings.config_for(entry, variant)?;
    let (status, obj, iter, seconds, phi) = match solve_from(entry.problem.as_ref(), &entry.start(), &cfg) {
        Ok(r) => (r.status.to_string(), r.objective, r.iterations, r.seconds, r.phi),
        Err(_) => ("init_error".to_string(), f64::NAN, 0, 0.0, f64::NAN),
    };
    let reference = entry.reference_objective;
    let table = entry.table;
    Ok(BenchRow {
        prob: entry.name.clone(),
        obj,
        iter,
        seconds,
        conv_phi: phi,
        variant: cfg.variant,
        rhs: cfg.rhs(),
        status,
        ref_obj: reference,
        obj_delta: (obj - reference) / reference.abs().max(1.0),
        ref_iter: table.map(|t| t.iterations),
        iter_delta: table.map(|t| iter as i64 - t.iterations as i64),
        ref_conv_phi: table.map(|t| t.conv_phi),
    })
}

fn cmd_bench(set: &str, flags: &SolverFlags, compare: bool, format: Format, output: Option<&Path>, jobs: usize) -> Result<u8, Failure> {
    if jobs == 0 {
        return Err(UsageError("--jobs must be at least 1".into()).into());
    }
    let entries = resolve_set(set)?;
    let settings = Settings::load(flags)?;
    let variants: Vec<Option<Variant>> = if compare { Variant::ALL.iter().copied().map(Some).collect() } else { vec![None] };
    let tasks: Vec<(&BenchmarkEntry, Option<Variant>)> =
        entries.iter().flat_map(|e| variants.iter().map(move |v| (e, *v))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| io::Error::other(e.to_string()))?;
    let rows: Vec<BenchRow> =
        pool.install(|| tasks.par_iter().map(|(e, v)| bench_row(e, &settings, *v)).collect::<Result<_, _>>())?;

    let mut out = sink(output)?;
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(CSV_HEADER)?;
            for r in &rows {
                w.write_record(r.csv_record())?;
            }
            w.flush()?;
        }
        Format::Json => {
            let table = BenchTable { schema: BENCH_SCHEMA.to_string(), rows };
            serde_json::to_writer_pretty(&mut out, &table).map_err(io::Error::from)?;
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(EXIT_OK)
}

/// Rows `iter, alpha, x1..xn, phi`: `samples` points of every accepted arc
/// (the first equal to the iterate the arc starts from), then one row with
/// `alpha = 0` for the final iterate.
fn cmd_trace(name: &str, flags: &SolverFlags, samples: usize, output: Option<&Path>) -> Result<u8, Failure> {
    if samples < 2 {
        return Err(UsageError("--samples must be at least 2".into()).into());
    }
    let entry = lookup(name)?;
    let settings = Settings::load(flags)?;
    let cfg = settings.config_for(&entry, None)?;
    let prob = entry.problem.as_ref();
    let v0 = match init_check(prob, &entry.start()) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {}: {e}", entry.name);
            return Ok(EXIT_INIT);
        }
    };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut k = 0usize;
    let report = solve_observed(prob, &v0, &cfg, &mut |v, step| {
        for j in 0..samples {
            let alpha = FRAC_PI_2 * j as f64 / (samples - 1) as f64;
            let x = if j == 0 { v.x.clone() } else { x_on_arc(v, &step.arc, alpha) };
            let phi = residual(prob, &point_on_arc(v, &step.arc, alpha)).map(|r| r.merit()).unwrap_or(f64::NAN);
            let mut row = vec![k as f64, alpha];
            row.extend(x.iter());
            row.push(phi);
            rows.push(row);
        }
        k += 1;
    });
    let mut last = vec![report.iterations as f64, 0.0];
    last.extend(report.iterate.x.iter());
    last.push(report.phi);
    rows.push(last);

    let mut out = sink(output)?;
    let mut w = csv::Writer::from_writer(&mut out);
    let mut header = vec!["iter".to_string(), "alpha".to_string()];
    header.extend((1..=prob.n()).map(|i| format!("x{i}")));
    header.push("phi".to_string());
    w.write_record(&header)?;
    for row in &rows {
        let mut rec = vec![format!("{}", row[0] as usize)];
        rec.extend(row[1..].iter().map(|v| format!("{v:?}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    drop(w);
    out.flush()?;
    eprintln!("{}: {} after {} iterations", entry.name, report.status, report.iterations);
    Ok(if report.converged() { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

fn cmd_check(name: &str, tol: f64, third_tol: f64, at: CheckPoint, fault: Option<usize>) -> Result<u8, Failure> {
    if !(tol > 0.0 && third_tol > 0.0) {
        return Err(UsageError("tolerances must be positive".into()).into());
    }
    let entry = lookup(name)?;
    let x = match at {
        CheckPoint::Start => entry.interior_start.clone(),
        CheckPoint::Solution => entry
            .reference_solution
            .clone()
            .ok_or_else(|| UsageError(format!("{} has no reference solution", entry.name)))?,
    };
    let tols = CheckTolerances { first: tol, second: tol, third: third_tol };
    let report = match fault {
        Some(index) => {
            if index >= entry.problem.n() {
                return Err(UsageError(format!("fault index {index} out of range for n = {}", entry.problem.n())).into());
            }
            let faulty = GradientFault { inner: entry.problem.clone(), index, offset: 1e-2 };
            check_derivatives_with(&faulty, &x, tols)
        }
        None => check_derivatives_with(entry.problem.as_ref(), &x, tols),
    }
    .map_err(|e| UsageError(e.to_string()))?;
    for c in &report.checks {
        let at = c.worst_entry.map(|(i, j)| format!(" at ({i},{j})")).unwrap_or_default();
        println!(
            "{:<12} {:>10.3e}{at:<10} {}",
            c.callback,
            c.max_rel_error,
            if c.passed { "ok" } else { "FAIL" }
        );
    }
    println!("{}: {}", entry.name, if report.passed { "all derivatives agree" } else { "derivative mismatch" });
    Ok(if report.passed { EXIT_OK } else { EXIT_FAILURE })
}

fn cmd_list() -> Result<u8, Failure> {
    println!("{:<7} {:>3} {:>3} {:>3} {:>18}  source", "name", "n", "m", "p", "reference f");
    for e in problems::all() {
        let p = e.problem.as_ref();
        println!(
            "{:<7} {:>3} {:>3} {:>3} {:>18}  {}",
            e.name,
            p.n(),
            p.m(),
            p.p(),
            e.reference_objective,
            serde_json::to_value(e.source).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
        );
    }
    Ok(EXIT_OK)
}
