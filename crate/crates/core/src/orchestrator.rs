//! The outer alternating loop over data split and joint bandwidth/compute
//! allocation, its initializations, fixed-assignment baselines and metrics.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Stage};
use crate::kkt::{freeze_inactive, solve_bcaa, solve_bcaa_warm, solve_daa, BcaaSolution};
use crate::model::{validate, Allocation, Matrix, Scenario, SolveConfig};
use crate::physics::total_energy;

/// Initial data split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitStrategy {
    EqualSplit,
    /// Each row drawn from M uniforms, normalized to the task size.
    UniformRandom { seed: u64 },
    /// `weight` of the task on the best-gain AP, the rest spread evenly.
    BestApWeighted { weight: f64 },
    /// Whole task on the best-gain AP.
    BinaryBestAp,
}

impl InitStrategy {
    pub const PROP3_WEIGHT: f64 = 0.9;

    pub fn name(&self) -> String {
        match self {
            InitStrategy::EqualSplit => "equal".into(),
            InitStrategy::UniformRandom { .. } => "random".into(),
            InitStrategy::BestApWeighted { weight } => format!("best-ap-{}", (weight * 100.0).round()),
            InitStrategy::BinaryBestAp => "binary".into(),
        }
    }
}

/// Index of the highest-gain AP of `user`, lowest index on ties.
pub fn best_ap(scenario: &Scenario, user: usize) -> usize {
    let row = scenario.gains.row(user);
    let mut best = 0;
    for (j, &g) in row.iter().enumerate() {
        if g > row[best] {
            best = j;
        }
    }
    best
}

pub fn best_snr_assignment(scenario: &Scenario) -> Vec<usize> {
    (0..scenario.num_users).map(|i| best_ap(scenario, i)).collect()
}

fn binary_data(scenario: &Scenario, assignment: &[usize]) -> Result<Matrix> {
    if assignment.len() != scenario.num_users {
        return Err(Error::Dimension(format!(
            "assignment has {} entries for {} users",
            assignment.len(),
            scenario.num_users
        )));
    }
    let mut data = Matrix::zeros(scenario.num_users, scenario.num_aps);
    for (i, &j) in assignment.iter().enumerate() {
        if j >= scenario.num_aps {
            return Err(Error::Dimension(format!("user {i} assigned to missing ap {j}")));
        }
        data[(i, j)] = scenario.tasks[i].input_bits;
    }
    Ok(data)
}

pub fn initialize(scenario: &Scenario, strategy: &InitStrategy) -> Result<Matrix> {
    scenario.check()?;
    let (k, m) = (scenario.num_users, scenario.num_aps);
    let bits = |i: usize| scenario.tasks[i].input_bits;
    Ok(match *strategy {
        InitStrategy::EqualSplit => Matrix::from_fn(k, m, |i, _| bits(i) / m as f64),
        InitStrategy::UniformRandom { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut data = Matrix::zeros(k, m);
            for i in 0..k {
                let draws: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
                let total: f64 = draws.iter().sum();
                for (j, u) in draws.into_iter().enumerate() {
                    data[(i, j)] = bits(i) * u / total;
                }
            }
            data
        }
        InitStrategy::BestApWeighted { weight } => {
            if !(weight > 0.0 && weight <= 1.0) {
                return Err(Error::InvalidValue(format!("weight {weight} outside (0, 1]")));
            }
            Matrix::from_fn(k, m, |i, j| {
                if m == 1 {
                    bits(i)
                } else if j == best_ap(scenario, i) {
                    weight * bits(i)
                } else {
                    (1.0 - weight) * bits(i) / (m - 1) as f64
                }
            })
        }
        InitStrategy::BinaryBestAp => binary_data(scenario, &best_snr_assignment(scenario))?,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    /// Total energy after each joint bandwidth/compute solve; entry 0 is
    /// the initialization.
    pub outer_energies_j: Vec<f64>,
    /// Total energy right after each data-split update.
    pub daa_energies_j: Vec<f64>,
    /// Bandwidth/compute alternations used by each joint solve.
    pub inner_iteration_counts: Vec<usize>,
    /// Cumulative wall time at the end of each outer iteration.
    pub wall_times_s: Vec<f64>,
}

impl SolveTrace {
    /// Outer iterations after the initial joint solve.
    pub fn outer_iterations(&self) -> usize {
        self.outer_energies_j.len().saturating_sub(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub allocation: Allocation,
    pub energy_j: f64,
    pub trace: SolveTrace,
    pub converged: bool,
}

fn allocation_of(data: Matrix, bc: &BcaaSolution) -> Allocation {
    Allocation {
        data,
        bandwidth: bc.bandwidth.clone(),
        compute: bc.compute.clone(),
    }
}

fn finish(scenario: &Scenario, allocation: Allocation, trace: SolveTrace, converged: bool) -> Result<Solution> {
    let energy_j = total_energy(scenario, &allocation)?;
    Ok(Solution {
        allocation,
        energy_j,
        trace,
        converged,
    })
}

/// Runs the outer loop from the initialization `strategy`.
pub fn solve_iterative(scenario: &Scenario, strategy: &InitStrategy, cfg: &SolveConfig) -> Result<Solution> {
    let data = initialize(scenario, strategy)?;
    solve_iterative_from(scenario, data, cfg)
}

/// Runs the outer loop from an explicit initial data split.
///
/// A joint bandwidth/compute solve on the initial split is followed by
/// rounds of data-split update and warm-started joint solve, until one
/// round gains at most `cfg.epsilon_j` or `cfg.max_outer_iters` rounds
/// have run. Pairs whose data falls to the activity threshold are frozen
/// at zero with their bandwidth and compute released.
pub fn solve_iterative_from(scenario: &Scenario, mut data: Matrix, cfg: &SolveConfig) -> Result<Solution> {
    scenario.check()?;
    cfg.check(scenario)?;
    if data.shape() != (scenario.num_users, scenario.num_aps) {
        return Err(Error::Dimension("initial data shape".into()));
    }
    let start = Instant::now();
    let wrap = |iteration: usize, stage: Stage| {
        move |e: Error| Error::Subproblem {
            iteration,
            stage,
            source: Box::new(e),
        }
    };
    freeze_inactive(&mut data, cfg.activity_threshold_bits);
    let mut bc = solve_bcaa(scenario, &data, cfg).map_err(wrap(0, Stage::Bcaa))?;
    let mut trace = SolveTrace {
        outer_energies_j: vec![bc.energy_j],
        inner_iteration_counts: vec![bc.iterations],
        wall_times_s: vec![start.elapsed().as_secs_f64()],
        ..SolveTrace::default()
    };
    // slack for floating-point noise in the descent checks
    let noise = 10.0 * cfg.bisect_tol;
    let mut converged = false;

    for iteration in 1..=cfg.max_outer_iters {
        let previous = bc.energy_j;
        let daa = solve_daa(scenario, &bc.bandwidth, &bc.compute, cfg).map_err(wrap(iteration, Stage::Daa))?;
        let mut next = daa.data;
        freeze_inactive(&mut next, cfg.activity_threshold_bits);
        let mut compute = bc.compute.clone();
        let mut bandwidth = bc.bandwidth.clone();
        for i in 0..scenario.num_users {
            for j in 0..scenario.num_aps {
                if next[(i, j)] == 0.0 {
                    compute[(i, j)] = 0.0;
                    bandwidth[(i, j)] = 0.0;
                }
            }
        }
        let after_daa = total_energy(
            scenario,
            &Allocation {
                data: next.clone(),
                bandwidth,
                compute: compute.clone(),
            },
        )
        .map_err(wrap(iteration, Stage::Daa))?;
        if after_daa > previous * (1.0 + noise) {
            return Err(Error::Consistency(format!(
                "data update raised energy from {previous:e} J to {after_daa:e} J at iteration {iteration}"
            )));
        }
        trace.daa_energies_j.push(after_daa);

        bc = solve_bcaa_warm(scenario, &next, &compute, cfg).map_err(wrap(iteration, Stage::Bcaa))?;
        if bc.energy_j > after_daa * (1.0 + noise) {
            return Err(Error::Consistency(format!(
                "bandwidth/compute update raised energy from {after_daa:e} J to {:e} J at iteration {iteration}",
                bc.energy_j
            )));
        }
        data = next;
        trace.outer_energies_j.push(bc.energy_j);
        trace.inner_iteration_counts.push(bc.iterations);
        trace.wall_times_s.push(start.elapsed().as_secs_f64());
        if previous - bc.energy_j <= cfg.epsilon_j {
            converged = true;
            break;
        }
    }
    finish(scenario, allocation_of(data, &bc), trace, converged)
}

/// Joint bandwidth/compute optimum for a data split held fixed.
pub fn solve_fixed_data(scenario: &Scenario, data: Matrix, cfg: &SolveConfig) -> Result<Solution> {
    scenario.check()?;
    cfg.check(scenario)?;
    let start = Instant::now();
    let bc = solve_bcaa(scenario, &data, cfg)?;
    let trace = SolveTrace {
        outer_energies_j: vec![bc.energy_j],
        inner_iteration_counts: vec![bc.iterations],
        wall_times_s: vec![start.elapsed().as_secs_f64()],
        ..SolveTrace::default()
    };
    finish(scenario, allocation_of(data, &bc), trace, true)
}

/// Every user sends its whole task to the AP given by `assignment`.
pub fn solve_fixed_assignment(scenario: &Scenario, assignment: &[usize], cfg: &SolveConfig) -> Result<Solution> {
    solve_fixed_data(scenario, binary_data(scenario, assignment)?, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub energy_mj: f64,
    /// `max_j L_{i,j} / L_i` per user.
    pub max_load_share_per_user: Vec<f64>,
    /// Users with at least two active pairs.
    pub multi_ap_user_count: usize,
    pub constraint_residuals: BTreeMap<String, f64>,
}

impl Metrics {
    /// Load shares of users served by two or more APs.
    pub fn multi_ap_load_shares(&self, scenario: &Scenario, solution: &Solution, threshold: f64) -> Vec<f64> {
        (0..scenario.num_users)
            .filter(|&i| active_pairs(&solution.allocation, i, threshold) >= 2)
            .map(|i| self.max_load_share_per_user[i])
            .collect()
    }
}

fn active_pairs(alloc: &Allocation, user: usize, threshold: f64) -> usize {
    alloc.data.row(user).iter().filter(|&&v| v > threshold).count()
}

pub fn evaluate(scenario: &Scenario, solution: &Solution) -> Metrics {
    let alloc = &solution.allocation;
    let threshold = SolveConfig::for_scenario(scenario).activity_threshold_bits;
    let max_load_share_per_user: Vec<f64> = (0..scenario.num_users)
        .map(|i| {
            alloc.data.row(i).iter().fold(0.0, |m: f64, &v| m.max(v)) / scenario.tasks[i].input_bits
        })
        .collect();
    let multi_ap_user_count = (0..scenario.num_users)
        .filter(|&i| active_pairs(alloc, i, threshold) >= 2)
        .count();
    let mut constraint_residuals = BTreeMap::new();
    let worst_row = (0..scenario.num_users)
        .map(|i| (alloc.data.row_sum(i) - scenario.tasks[i].input_bits).abs() / scenario.tasks[i].input_bits)
        .fold(0.0, f64::max);
    constraint_residuals.insert("data_row_sum".to_string(), worst_row);
    constraint_residuals.insert(
        "bandwidth_total".to_string(),
        (alloc.bandwidth.total() - scenario.bandwidth_hz).abs() / scenario.bandwidth_hz,
    );
    let worst_col = scenario
        .compute_capacity
        .iter()
        .enumerate()
        .map(|(j, &c)| (alloc.compute.col_sum(j) - c).abs() / c)
        .fold(0.0, f64::max);
    constraint_residuals.insert("compute_column_sum".to_string(), worst_col);
    Metrics {
        energy_mj: solution.energy_j * 1e3,
        max_load_share_per_user,
        multi_ap_user_count,
        constraint_residuals,
    }
}

/// Checks a finished solution against every constraint.
pub fn check_solution(scenario: &Scenario, solution: &Solution, cfg: &SolveConfig) -> Result<()> {
    let report = validate(scenario, &solution.allocation, cfg)?;
    if report.is_empty() {
        Ok(())
    } else {
        Err(Error::Consistency(report.to_string()))
    }
}
