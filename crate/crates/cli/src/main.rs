//! `mecalloc`: scenario generation, single solves and parameter sweeps.
//!
//! Exit codes: 0 success, 2 usage, 3 infeasible, 4 no convergence, 1 other.

// `!(v > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use mecalloc_core::bench::{run_sweep, trace_csv, ScenarioSource, Strategy, SweepParameter, SweepSpec};
use mecalloc_core::orchestrator::{evaluate, InitStrategy};
use mecalloc_core::scenario::{generate, GenParams, ScenarioDocument};
use mecalloc_core::{Error, SolveConfig};

const OUT_DIR_ENV: &str = "MECALLOC_OUT_DIR";

#[derive(Parser)]
#[command(name = "mecalloc", version, about = "Multi-AP edge offloading energy minimizer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a generated scenario as JSON.
    Generate {
        #[command(flatten)]
        gen: GenArgs,
        /// Output file [default: $MECALLOC_OUT_DIR/scenario-seed<SEED>.json]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve one scenario; writes a solution JSON and a trace CSV.
    Solve(SolveArgs),
    /// Solve every (value, strategy) pair of a parameter sweep.
    Sweep(SweepArgs),
}

#[derive(Args, Clone)]
struct GenArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    users: usize,
    #[arg(long, default_value_t = 4)]
    aps: usize,
    /// Side of the square region in meters.
    #[arg(long, default_value_t = 200.0)]
    region_m: f64,
    #[arg(long, default_value_t = 1e7)]
    bandwidth_hz: f64,
    /// Noise power spectral density in W/Hz [default: 10^-20.4]
    #[arg(long)]
    noise_psd: Option<f64>,
    #[arg(long, default_value_t = 1.5e6)]
    task_bits: f64,
    #[arg(long, default_value_t = 0.5)]
    deadline_s: f64,
    #[arg(long, default_value_t = 1e3)]
    cycles_per_bit: f64,
    #[arg(long, default_value_t = 2.5e10)]
    capacity_cps: f64,
}

impl GenArgs {
    fn params(&self) -> GenParams {
        let defaults = GenParams::default();
        GenParams {
            num_users: self.users,
            num_aps: self.aps,
            region_m: self.region_m,
            bandwidth_hz: self.bandwidth_hz,
            noise_psd_w_per_hz: self.noise_psd.unwrap_or(defaults.noise_psd_w_per_hz),
            task_bits: self.task_bits,
            deadline_s: self.deadline_s,
            cycles_per_bit: self.cycles_per_bit,
            capacity_cps: self.capacity_cps,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Iterative,
    BinaryBestAp,
    FixedEqual,
}

#[derive(Clone, Copy, ValueEnum)]
enum Init {
    Equal,
    Random,
    #[value(name = "best-ap-90")]
    BestAp90,
    Binary,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::Iterative)]
    method: Method,
    #[arg(long, value_enum, default_value_t = Init::Equal)]
    init: Init,
    /// Outer stop threshold in mJ.
    #[arg(long, default_value_t = 1e-2)]
    eps_mj: f64,
    /// Seed of the random initialization.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    max_outer_iters: usize,
    /// Solution JSON [default: $MECALLOC_OUT_DIR/solution.json]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Trace CSV [default: $MECALLOC_OUT_DIR/trace.csv]
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Scenario JSON; generated from the generator flags when absent.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[command(flatten)]
    gen: GenArgs,
    #[arg(long, default_value = "deadline_s")]
    parameter: String,
    /// Strictly increasing comma-separated values.
    #[arg(long, value_delimiter = ',', default_value = "0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")]
    values: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "iterative-equal,iterative-binary,binary-best-ap")]
    strategies: Vec<String>,
    /// Seed of `iterative-random`.
    #[arg(long, default_value_t = 42)]
    init_seed: u64,
    #[arg(long, default_value_t = 1e-2)]
    eps_mj: f64,
    /// Worker threads; 0 uses every hardware thread.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Sweep CSV [default: $MECALLOC_OUT_DIR/sweep-<PARAMETER>.csv]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Omit the leading `# generated` line.
    #[arg(long)]
    no_timestamp: bool,
}

enum Failure {
    Usage(String),
    Solver(Error),
    NotConverged(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Solver(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Solver(e.into())
    }
}

fn output_path(explicit: Option<PathBuf>, default_name: &str) -> PathBuf {
    explicit.unwrap_or_else(|| {
        std::env::var_os(OUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_default()
            .join(default_name)
    })
}

fn write_file(path: &Path, text: &str) -> std::io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)
}

fn timestamp() -> String {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    format!("unix={secs}")
}

fn cmd_generate(gen: GenArgs, out: Option<PathBuf>) -> Result<(), Failure> {
    let params = gen.params();
    let doc = generate(&params)?;
    let path = output_path(out, &format!("scenario-seed{}.json", params.seed));
    write_file(&path, &doc.to_json()?)?;
    let clamped = doc.provenance.as_ref().map_or(0, |p| p.clamped_distances);
    println!(
        "wrote {}: {} users, {} APs, seed {}, {} clamped distances",
        path.display(),
        doc.scenario.num_users,
        doc.scenario.num_aps,
        params.seed,
        clamped
    );
    Ok(())
}

fn cmd_solve(args: SolveArgs) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&args.scenario)?;
    let scenario = ScenarioDocument::from_json(&text)?.scenario;
    if !(args.eps_mj > 0.0) {
        return Err(Failure::Usage(format!("--eps-mj must be positive, got {}", args.eps_mj)));
    }
    let cfg = SolveConfig {
        max_outer_iters: args.max_outer_iters,
        ..SolveConfig::for_scenario(&scenario).with_epsilon_mj(args.eps_mj)
    };
    let init = match args.init {
        Init::Equal => InitStrategy::EqualSplit,
        Init::Random => InitStrategy::UniformRandom { seed: args.seed },
        Init::BestAp90 => InitStrategy::BestApWeighted {
            weight: InitStrategy::PROP3_WEIGHT,
        },
        Init::Binary => InitStrategy::BinaryBestAp,
    };
    let strategy = match args.method {
        Method::Iterative => Strategy::Iterative { init },
        Method::BinaryBestAp => Strategy::BinaryBestAp,
        Method::FixedEqual => Strategy::FixedEqual,
    };
    let solution = strategy.run(&scenario, &cfg)?;
    let metrics = evaluate(&scenario, &solution);
    let doc = serde_json::json!({
        "strategy": strategy.name(),
        "epsilon_j": cfg.epsilon_j,
        "solution": solution,
        "metrics": metrics,
    });
    let out = output_path(args.out, "solution.json");
    write_file(&out, &serde_json::to_string_pretty(&doc).map_err(Error::from)?)?;
    let trace = output_path(args.trace, "trace.csv");
    write_file(&trace, &trace_csv(&solution))?;
    println!(
        "{}: energy {:.8e} mJ, {} outer iterations, converged={}, {} multi-AP users",
        strategy.name(),
        metrics.energy_mj,
        solution.trace.outer_iterations(),
        solution.converged,
        metrics.multi_ap_user_count
    );
    println!("wrote {} and {}", out.display(), trace.display());
    if solution.converged {
        Ok(())
    } else {
        Err(Failure::NotConverged(format!(
            "no convergence within {} outer iterations",
            cfg.max_outer_iters
        )))
    }
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Failure> {
    let parameter: SweepParameter = args.parameter.parse().map_err(|e: Error| Failure::Usage(e.to_string()))?;
    let strategies = args
        .strategies
        .iter()
        .map(|s| Strategy::parse(s.trim(), args.init_seed))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let source = match args.scenario {
        Some(p) => ScenarioSource::Path(p),
        None => ScenarioSource::Generate(args.gen.params()),
    };
    let spec = SweepSpec {
        parameter,
        values: args.values,
        strategies,
        source,
        epsilon_j: args.eps_mj * 1e-3,
    };
    spec.check().map_err(|e| Failure::Usage(e.to_string()))?;
    let result = run_sweep(&spec, args.threads)?;
    let ts = (!args.no_timestamp).then(timestamp);
    let out = output_path(args.out, &format!("sweep-{}.csv", parameter.name()));
    write_file(&out, &result.to_csv(ts.as_deref()))?;
    for line in result.monotonicity_summary() {
        println!("{line}");
    }
    for name in result.rows.iter().map(|r| r.strategy.as_str()).collect::<std::collections::BTreeSet<_>>() {
        let shares: Vec<f64> = result
            .rows_for(name)
            .map(|r| r.mean_max_load_share)
            .filter(|v| v.is_finite())
            .collect();
        if !shares.is_empty() {
            println!(
                "{name}: mean max load share over multi-AP users {:.4} (averaged over {} points)",
                shares.iter().sum::<f64>() / shares.len() as f64,
                shares.len()
            );
        }
    }
    let failed = result.rows.iter().filter(|r| r.error.is_some()).count();
    println!("wrote {} ({} rows, {failed} failed)", out.display(), result.rows.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Generate { gen, out } => cmd_generate(gen, out),
        Command::Solve(args) => cmd_solve(args),
        Command::Sweep(args) => cmd_sweep(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::NotConverged(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(4)
        }
        Err(Failure::Solver(e)) => {
            eprintln!("error: {e}");
            if e.is_infeasible() {
                ExitCode::from(3)
            } else if e.is_convergence() {
                ExitCode::from(4)
            } else if matches!(e, Error::InvalidValue(_)) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
