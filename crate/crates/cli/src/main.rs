mod bench;
mod record;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{ArgGroup, Args, Parser, Subcommand};
use ovcp_core::oracle::events::{summarize, EventSummary};
use ovcp_core::{
    brute_force_cp, brute_force_ov, failing_pair_rate, generate_instance, measure_events,
    read_instance, solve, write_instance, EventConfig, EventReport, Evaluator, InstanceParams,
    ProblemKind, SolverConfig,
};
use serde::Serialize;

use bench::{BenchSetup, CalibrationSetup};
use record::{millis, Params, RunRecord, VERSION};

/// Average-case Orthogonal Vectors and Closest Pair: generator, grouped
/// solvers, brute-force oracle, diagnostics and benchmarks.
#[derive(Parser)]
#[command(name = "ovcp", version, arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random instance file.
    Gen(GenArgs),
    /// Run the grouped solver on an instance file.
    Solve(SolveArgs),
    /// Run the brute-force oracle on an instance file.
    Oracle(OracleArgs),
    /// Measure concentration events and the failing-pair rate.
    Diagnose(DiagnoseArgs),
    /// Solver versus oracle on generated instances, as CSV.
    Bench(BenchArgs),
    /// Pick (q, s) from pilot runs and write the calibration file.
    Calibrate(CalibrateArgs),
}

#[derive(Args)]
#[command(group(ArgGroup::new("dim").required(true).args(["d", "c"])))]
struct GenArgs {
    #[arg(long)]
    kind: ProblemKind,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: Option<usize>,
    /// d = round(c · log₂ n).
    #[arg(long)]
    c: Option<f64>,
    /// Coordinate density, or `auto` for √(1/c). CP accepts only 0.5.
    #[arg(long, default_value = "auto")]
    p: String,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long)]
    q: Option<u32>,
    #[arg(long)]
    s: Option<usize>,
    #[arg(long = "scale-denom")]
    scale: Option<u64>,
    #[arg(long, default_value_t = Evaluator::Direct)]
    evaluator: Evaluator,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    strict: bool,
    #[arg(long)]
    threads: Option<usize>,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            q: self.q,
            s: self.s,
            scale: self.scale,
            evaluator: self.evaluator,
            strict: self.strict,
            threads: self.threads,
            ..SolverConfig::default()
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    json_out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    json_out: Option<PathBuf>,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    q: u32,
    #[arg(long)]
    s: usize,
    #[arg(long)]
    samples: usize,
    /// E3 exponent constant; defaults to 1/10000 (OV) or 0.5 (CP).
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    json_out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    #[arg(long)]
    c: f64,
    #[arg(long, default_value = "ov")]
    kind: ProblemKind,
    #[arg(long)]
    seeds: u64,
    #[arg(long, value_delimiter = ',')]
    q: Vec<u32>,
    #[arg(long, value_delimiter = ',')]
    s: Vec<usize>,
    /// Takes (q, s) from a calibration file when --q / --s are absent.
    #[arg(long)]
    calibration: Option<PathBuf>,
    #[arg(long, default_value_t = Evaluator::Direct)]
    evaluator: Evaluator,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    csv: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    #[arg(long)]
    c: f64,
    #[arg(long, default_value = "ov")]
    kind: ProblemKind,
    /// Number of pilot seeds, counted from --seed-base.
    #[arg(long, default_value_t = 3)]
    seeds: u64,
    /// Pilot seeds start here so they never coincide with bench seeds.
    #[arg(long, default_value_t = 1_000_000)]
    seed_base: u64,
    #[arg(long, value_delimiter = ',', default_value = "2,4,6")]
    q: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32,64")]
    s: Vec<usize>,
    /// Largest acceptable brute-forced fraction on any pilot instance.
    #[arg(long, default_value_t = 0.25)]
    target: f64,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Gen(a) => cmd_gen(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Diagnose(a) => cmd_diagnose(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Calibrate(a) => cmd_calibrate(a),
    }
}

fn emit_json(value: &impl Serialize, out: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_gen(a: GenArgs) -> Result<ExitCode> {
    let d = match (a.d, a.c) {
        (Some(d), _) => d,
        (None, Some(c)) => {
            if !(c.is_finite() && c > 0.0) {
                bail!("--c must be a positive number");
            }
            bench::dimension_for(a.n, c)
        }
        (None, None) => unreachable!("clap enforces --d or --c"),
    };
    let params = match a.kind {
        ProblemKind::Cp => {
            if a.p != "auto" && a.p.parse::<f64>().ok() != Some(0.5) {
                bail!("closest pair instances fix p = 0.5 (got --p {})", a.p);
            }
            InstanceParams::cp(a.n, d, a.seed)
        }
        ProblemKind::Ov => {
            let p = if a.p == "auto" {
                // c from the rounded d keeps √(1/c) inside the critical band
                if a.n < 2 || d == 0 {
                    bail!("--p auto needs n ≥ 2 and d ≥ 1");
                }
                (1.0 / ovcp_core::instance::dimension_ratio(a.n, d)).sqrt()
            } else {
                a.p.parse::<f64>().with_context(|| format!("--p {} is not a number", a.p))?
            };
            InstanceParams::ov(a.n, d, p, a.seed)
        }
    };
    let inst = generate_instance(params)?;
    write_instance(&inst, &a.out)?;
    let p = &inst.params;
    println!("kind={} n={} d={} p={} seed={}", p.kind, p.n, p.d, p.p, p.seed);
    Ok(ExitCode::SUCCESS)
}

fn cmd_solve(a: SolveArgs) -> Result<ExitCode> {
    let inst = read_instance(&a.input)?;
    let report = solve(&inst, &a.solver.config())?;
    emit_json(&RunRecord::solve(&inst, &report), a.json_out.as_deref())?;
    Ok(match (inst.kind(), &report.found) {
        (ProblemKind::Ov, None) => ExitCode::from(1),
        _ => ExitCode::SUCCESS,
    })
}

fn cmd_oracle(a: OracleArgs) -> Result<ExitCode> {
    let inst = read_instance(&a.input)?;
    let started = Instant::now();
    let pair = match inst.kind() {
        ProblemKind::Ov => brute_force_ov(&inst).map(|(i, j)| (i, j, 0)),
        ProblemKind::Cp => Some(brute_force_cp(&inst)?),
    };
    let record = RunRecord::oracle(&inst, pair, started.elapsed());
    emit_json(&record, a.json_out.as_deref())?;
    Ok(if pair.is_none() {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}

#[derive(Serialize)]
struct RateRecord {
    failing: u64,
    cells: u64,
    rate: f64,
}

#[derive(Serialize)]
struct DiagnoseRecord {
    version: &'static str,
    command: &'static str,
    params: Params,
    epsilon: f64,
    events: EventSummary,
    failing_rate: RateRecord,
    reports: Vec<EventReport>,
    timing: record::Timing,
}

fn cmd_diagnose(a: DiagnoseArgs) -> Result<ExitCode> {
    let started = Instant::now();
    let inst = read_instance(&a.input)?;
    let events = EventConfig {
        s: a.s,
        epsilon: a.epsilon,
    };
    let reports = measure_events(&inst, &events, a.samples)?;
    let summary = summarize(&inst, a.s, &reports)?;
    let cfg = SolverConfig::default().with_q(a.q).with_s(a.s);
    let eff = cfg.resolve(&inst)?;
    let rate = failing_pair_rate(&inst, &cfg)?;

    let mut params = Params::of(&inst);
    params.q = Some(eff.q);
    params.s = Some(eff.s);
    params.scale = Some(eff.scale);
    let record = DiagnoseRecord {
        version: VERSION,
        command: "diagnose",
        params,
        epsilon: events.epsilon_for(inst.kind()),
        events: summary,
        failing_rate: RateRecord {
            failing: rate.failing,
            cells: rate.cells,
            rate: rate.as_f64(),
        },
        reports,
        timing: record::Timing {
            eval_ms: 0.0,
            fallback_ms: 0.0,
            total_ms: millis(started.elapsed()),
        },
    };
    emit_json(&record, a.json_out.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

/// Explicit list, else the calibrated value, else the per-instance default.
fn pick<T: Copy>(given: &[T], calibrated: Option<T>) -> Vec<Option<T>> {
    if given.is_empty() {
        vec![calibrated]
    } else {
        given.iter().map(|&v| Some(v)).collect()
    }
}

fn cmd_bench(a: BenchArgs) -> Result<ExitCode> {
    let calibrated = a.calibration.as_deref().map(bench::read_calibration).transpose()?;
    let qs: Vec<Option<u32>> = pick(&a.q, calibrated.as_ref().map(|c| c.chosen.q));
    let ss: Vec<Option<usize>> = pick(&a.s, calibrated.as_ref().map(|c| c.chosen.s));
    let setup = BenchSetup {
        kind: a.kind,
        ns: a.n,
        c: a.c,
        seeds: a.seeds,
        qs,
        ss,
        base: SolverConfig {
            evaluator: a.evaluator,
            threads: a.threads,
            ..SolverConfig::default()
        },
    };
    let rows = bench::run_bench(&setup)?;
    bench::write_csv(&rows, &a.csv)?;

    let solver_rows = rows.iter().filter(|r| r.method == "solver");
    let disagreements = rows.iter().filter(|r| !r.agrees).count() / 2;
    let worst = solver_rows
        .filter_map(|r| r.failing_fraction)
        .fold(0.0f64, f64::max);
    println!(
        "{} rows written to {}; max brute-forced fraction {worst:.4}; {disagreements} disagreements",
        rows.len(),
        a.csv.display()
    );
    if disagreements > 0 {
        bail!("solver and oracle disagree on {disagreements} runs");
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_calibrate(a: CalibrateArgs) -> Result<ExitCode> {
    let setup = CalibrationSetup {
        kind: a.kind,
        ns: a.n,
        c: a.c,
        seeds: (a.seed_base..a.seed_base + a.seeds).collect(),
        qs: a.q,
        ss: a.s,
        target: a.target,
        base: SolverConfig {
            threads: a.threads,
            ..SolverConfig::default()
        },
    };
    let cal = bench::calibrate(&setup)?;
    emit_json(&cal, Some(&a.out))?;
    println!("chosen q={} s={} (written to {})", cal.chosen.q, cal.chosen.s, a.out.display());
    Ok(ExitCode::SUCCESS)
}
