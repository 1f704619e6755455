//! Parameter sweeps, solve strategies and CSV output.
//!
//! Sweep CSV header (one row per value and strategy, sorted by value then
//! strategy name):
//!
//! ```text
//! parameter,value,strategy,energy_mj,outer_iterations,mean_max_load_share,min_max_load_share,multi_ap_user_count,converged,status
//! ```
//!
//! Reals are printed with 9 significant digits; load-share columns are empty
//! when no user is served by two or more APs, and `status` is `ok` or the
//! error of a failed point.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Scenario, SolveConfig};
use crate::orchestrator::{
    best_snr_assignment, evaluate, initialize, solve_fixed_assignment, solve_fixed_data, solve_iterative,
    InitStrategy, Solution,
};
use crate::scenario::{generate, GenParams, ScenarioDocument};

pub const SWEEP_HEADER: &str = "parameter,value,strategy,energy_mj,outer_iterations,mean_max_load_share,min_max_load_share,multi_ap_user_count,converged,status";
pub const TRACE_HEADER: &str = "outer_iter,energy_mj,inner_iters,wall_time_s";

/// A real with 9 significant digits.
pub fn fmt_real(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.8e}")
    } else {
        String::new()
    }
}

/// Iterative solve from an initialization, or one of the fixed baselines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Strategy {
    Iterative { init: InitStrategy },
    /// Whole task to the best-gain AP, bandwidth and compute optimized.
    BinaryBestAp,
    /// Equal data split held fixed, bandwidth and compute optimized.
    FixedEqual,
}

impl Strategy {
    pub const NAMES: [&'static str; 6] = [
        "iterative-equal",
        "iterative-random",
        "iterative-best-ap-90",
        "iterative-binary",
        "binary-best-ap",
        "fixed-equal",
    ];

    /// Parses a strategy name; `seed` feeds `iterative-random`.
    pub fn parse(name: &str, seed: u64) -> Result<Self> {
        let init = |init| Ok(Strategy::Iterative { init });
        match name {
            "iterative-equal" => init(InitStrategy::EqualSplit),
            "iterative-random" => init(InitStrategy::UniformRandom { seed }),
            "iterative-best-ap-90" => init(InitStrategy::BestApWeighted {
                weight: InitStrategy::PROP3_WEIGHT,
            }),
            "iterative-binary" => init(InitStrategy::BinaryBestAp),
            "binary-best-ap" => Ok(Strategy::BinaryBestAp),
            "fixed-equal" => Ok(Strategy::FixedEqual),
            other => Err(Error::InvalidValue(format!(
                "unknown strategy {other:?}; expected one of {}",
                Self::NAMES.join(", ")
            ))),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Strategy::Iterative { init } => match init {
                InitStrategy::BestApWeighted { weight } if *weight == InitStrategy::PROP3_WEIGHT => {
                    "iterative-best-ap-90".into()
                }
                other => format!("iterative-{}", other.name()),
            },
            Strategy::BinaryBestAp => "binary-best-ap".into(),
            Strategy::FixedEqual => "fixed-equal".into(),
        }
    }

    pub fn run(&self, scenario: &Scenario, cfg: &SolveConfig) -> Result<Solution> {
        match self {
            Strategy::Iterative { init } => solve_iterative(scenario, init, cfg),
            Strategy::BinaryBestAp => solve_fixed_assignment(scenario, &best_snr_assignment(scenario), cfg),
            Strategy::FixedEqual => solve_fixed_data(scenario, initialize(scenario, &InitStrategy::EqualSplit)?, cfg),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    DeadlineS,
    BandwidthHz,
    CapacityCps,
    TaskBits,
}

impl SweepParameter {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParameter::DeadlineS => "deadline_s",
            SweepParameter::BandwidthHz => "bandwidth_hz",
            SweepParameter::CapacityCps => "capacity_cps",
            SweepParameter::TaskBits => "task_bits",
        }
    }

    /// Copy of `base` with every user or AP set to `value`.
    pub fn apply(&self, base: &Scenario, value: f64) -> Scenario {
        let mut s = base.clone();
        match self {
            SweepParameter::DeadlineS => s.tasks.iter_mut().for_each(|t| t.deadline_s = value),
            SweepParameter::BandwidthHz => s.bandwidth_hz = value,
            SweepParameter::CapacityCps => s.compute_capacity.iter_mut().for_each(|c| *c = value),
            SweepParameter::TaskBits => s.tasks.iter_mut().for_each(|t| t.input_bits = value),
        }
        s
    }
}

impl FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "deadline_s" => Ok(SweepParameter::DeadlineS),
            "bandwidth_hz" => Ok(SweepParameter::BandwidthHz),
            "capacity_cps" => Ok(SweepParameter::CapacityCps),
            "task_bits" => Ok(SweepParameter::TaskBits),
            other => Err(Error::InvalidValue(format!("unknown sweep parameter {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioSource {
    Path(PathBuf),
    Generate(GenParams),
}

impl ScenarioSource {
    pub fn load(&self) -> Result<Scenario> {
        match self {
            ScenarioSource::Path(p) => Ok(ScenarioDocument::from_json(&std::fs::read_to_string(p)?)?.scenario),
            ScenarioSource::Generate(params) => Ok(generate(params)?.scenario),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    pub strategies: Vec<Strategy>,
    pub source: ScenarioSource,
    pub epsilon_j: f64,
}

impl SweepSpec {
    pub fn check(&self) -> Result<()> {
        if self.strategies.is_empty() {
            return Err(Error::InvalidValue("sweep needs at least one strategy".into()));
        }
        if self.values.is_empty() || self.values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidValue("sweep values must be positive and finite".into()));
        }
        if self.values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidValue("sweep values must be strictly increasing".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub strategy: String,
    pub energy_mj: f64,
    pub outer_iterations: usize,
    /// Over users with two or more active pairs; NaN when there are none.
    pub mean_max_load_share: f64,
    pub min_max_load_share: f64,
    pub multi_ap_user_count: usize,
    pub converged: bool,
    pub error: Option<String>,
}

impl SweepRow {
    fn from_outcome(value: f64, strategy: String, scenario: &Scenario, outcome: Result<Solution>) -> Self {
        match outcome {
            Ok(sol) => {
                let metrics = evaluate(scenario, &sol);
                let threshold = SolveConfig::for_scenario(scenario).activity_threshold_bits;
                let shares = metrics.multi_ap_load_shares(scenario, &sol, threshold);
                let (mean, min) = if shares.is_empty() {
                    (f64::NAN, f64::NAN)
                } else {
                    (
                        shares.iter().sum::<f64>() / shares.len() as f64,
                        shares.iter().copied().fold(f64::INFINITY, f64::min),
                    )
                };
                SweepRow {
                    value,
                    strategy,
                    energy_mj: metrics.energy_mj,
                    outer_iterations: sol.trace.outer_iterations(),
                    mean_max_load_share: mean,
                    min_max_load_share: min,
                    multi_ap_user_count: metrics.multi_ap_user_count,
                    converged: sol.converged,
                    error: None,
                }
            }
            Err(e) => SweepRow {
                value,
                strategy,
                energy_mj: f64::NAN,
                outer_iterations: 0,
                mean_max_load_share: f64::NAN,
                min_max_load_share: f64::NAN,
                multi_ap_user_count: 0,
                converged: false,
                error: Some(e.to_string()),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub parameter: SweepParameter,
    pub rows: Vec<SweepRow>,
}

/// One point of a sweep, exactly as an isolated solve would run it.
pub fn solve_point(
    base: &Scenario,
    parameter: SweepParameter,
    value: f64,
    strategy: &Strategy,
    epsilon_j: f64,
) -> (Scenario, Result<Solution>) {
    let scenario = parameter.apply(base, value);
    let cfg = SolveConfig {
        epsilon_j,
        ..SolveConfig::for_scenario(&scenario)
    };
    let outcome = scenario.check().and_then(|_| strategy.run(&scenario, &cfg));
    (scenario, outcome)
}

/// Runs every (value, strategy) solve on a pool of `threads` workers
/// (0 = one per hardware thread).
pub fn run_sweep(spec: &SweepSpec, threads: usize) -> Result<SweepResult> {
    spec.check()?;
    let base = spec.source.load()?;
    let jobs: Vec<(f64, Strategy)> = spec
        .values
        .iter()
        .flat_map(|&v| spec.strategies.iter().map(move |s| (v, *s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidValue(format!("thread pool: {e}")))?;
    let mut rows: Vec<SweepRow> = pool.install(|| {
        jobs.par_iter()
            .map(|(value, strategy)| {
                let (scenario, outcome) = solve_point(&base, spec.parameter, *value, strategy, spec.epsilon_j);
                SweepRow::from_outcome(*value, strategy.name(), &scenario, outcome)
            })
            .collect()
    });
    rows.sort_by(|a, b| a.value.total_cmp(&b.value).then_with(|| a.strategy.cmp(&b.strategy)));
    Ok(SweepResult {
        parameter: spec.parameter,
        rows,
    })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\"").replace('\n', " "))
    } else {
        s.to_string()
    }
}

impl SweepResult {
    /// CSV text; `timestamp` adds a leading `# generated <timestamp>` line.
    pub fn to_csv(&self, timestamp: Option<&str>) -> String {
        let mut out = String::new();
        if let Some(ts) = timestamp {
            let _ = writeln!(out, "# generated {ts}");
        }
        out.push_str(SWEEP_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                self.parameter.name(),
                fmt_real(r.value),
                r.strategy,
                fmt_real(r.energy_mj),
                r.outer_iterations,
                fmt_real(r.mean_max_load_share),
                fmt_real(r.min_max_load_share),
                r.multi_ap_user_count,
                r.converged,
                csv_field(r.error.as_deref().unwrap_or("ok")),
            );
        }
        out
    }

    pub fn rows_for<'a>(&'a self, strategy: &'a str) -> impl Iterator<Item = &'a SweepRow> + 'a {
        self.rows.iter().filter(move |r| r.strategy == strategy)
    }

    /// Points where `strategy`'s energy rose with the swept value, as
    /// `(value, energy before, energy after)`. Failed points are skipped.
    pub fn increases(&self, strategy: &str) -> Vec<(f64, f64, f64)> {
        let ok: Vec<&SweepRow> = self.rows_for(strategy).filter(|r| r.energy_mj.is_finite()).collect();
        ok.windows(2)
            .filter(|w| w[1].energy_mj > w[0].energy_mj)
            .map(|w| (w[1].value, w[0].energy_mj, w[1].energy_mj))
            .collect()
    }

    /// One line per strategy stating whether energy is non-increasing in the
    /// swept value.
    pub fn monotonicity_summary(&self) -> Vec<String> {
        let mut names: Vec<&str> = self.rows.iter().map(|r| r.strategy.as_str()).collect();
        names.sort();
        names.dedup();
        names
            .into_iter()
            .map(|name| {
                let inc = self.increases(name);
                let failed = self.rows_for(name).filter(|r| r.error.is_some()).count();
                let verdict = if inc.is_empty() {
                    "non-increasing".to_string()
                } else {
                    format!("INCREASES at {} point(s)", inc.len())
                };
                let mut line = format!("{name}: energy vs {} {verdict}", self.parameter.name());
                if failed > 0 {
                    let _ = write!(line, " ({failed} failed point(s))");
                }
                line
            })
            .collect()
    }
}

/// Trace CSV of one solve, columns [`TRACE_HEADER`].
pub fn trace_csv(solution: &Solution) -> String {
    let t = &solution.trace;
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for (k, e) in t.outer_energies_j.iter().enumerate() {
        let _ = writeln!(
            out,
            "{k},{},{},{}",
            fmt_real(e * 1e3),
            t.inner_iteration_counts.get(k).copied().unwrap_or(0),
            fmt_real(t.wall_times_s.get(k).copied().unwrap_or(f64::NAN)),
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_names_roundtrip() {
        for name in Strategy::NAMES {
            assert_eq!(Strategy::parse(name, 1).unwrap().name(), name);
        }
        assert!(Strategy::parse("simplex", 0).is_err());
    }

    #[test]
    fn real_format_has_nine_digits() {
        assert_eq!(fmt_real(0.5), "5.00000000e-1");
        assert_eq!(fmt_real(1.0 / 3.0), "3.33333333e-1");
        assert_eq!(fmt_real(f64::NAN), "");
    }

    #[test]
    fn sweep_rejects_unsorted_values() {
        let spec = SweepSpec {
            parameter: SweepParameter::DeadlineS,
            values: vec![0.5, 0.4],
            strategies: vec![Strategy::FixedEqual],
            source: ScenarioSource::Generate(GenParams::default()),
            epsilon_j: 1e-5,
        };
        assert!(run_sweep(&spec, 1).is_err());
    }

    #[test]
    fn small_sweep_sorted_and_failures_in_row() {
        let spec = SweepSpec {
            parameter: SweepParameter::DeadlineS,
            // 0.05 s cannot fit 1.5e9 cycles at 2.5e10 cps
            values: vec![0.05, 0.5],
            strategies: vec![Strategy::FixedEqual, Strategy::BinaryBestAp],
            source: ScenarioSource::Generate(GenParams::default()),
            epsilon_j: 1e-5,
        };
        let res = run_sweep(&spec, 2).unwrap();
        let keys: Vec<_> = res.rows.iter().map(|r| (r.value, r.strategy.as_str())).collect();
        assert_eq!(
            keys,
            vec![
                (0.05, "binary-best-ap"),
                (0.05, "fixed-equal"),
                (0.5, "binary-best-ap"),
                (0.5, "fixed-equal")
            ]
        );
        assert!(res.rows[0].error.is_some());
        assert!(res.rows[3].error.is_none() && res.rows[3].energy_mj.is_finite());
        let csv = res.to_csv(Some("now"));
        assert!(csv.starts_with("# generated now\n"));
        assert_eq!(csv.lines().nth(1), Some(SWEEP_HEADER));
        assert_eq!(csv.lines().count(), 6);
    }

    #[test]
    fn parameter_apply_touches_every_user() {
        let base = generate(&GenParams::default()).unwrap().scenario;
        let s = SweepParameter::DeadlineS.apply(&base, 0.8);
        assert!(s.tasks.iter().all(|t| t.deadline_s == 0.8));
        let s = SweepParameter::CapacityCps.apply(&base, 1e10);
        assert!(s.compute_capacity.iter().all(|&c| c == 1e10));
        assert_eq!("task_bits".parse::<SweepParameter>().unwrap(), SweepParameter::TaskBits);
    }
}
