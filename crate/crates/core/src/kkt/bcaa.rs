use crate::error::{Error, Result};
use crate::model::{Allocation, Matrix, Scenario, SolveConfig};
use crate::physics::raw_energy;

use super::{solve_baa, solve_caa, DualVariable, SLACK_MARGIN};

#[derive(Debug, Clone)]
pub struct BcaaSolution {
    pub bandwidth: Matrix,
    pub compute: Matrix,
    pub energy_j: f64,
    /// Completed bandwidth/compute alternations.
    pub iterations: usize,
    /// Energy after each alternation.
    pub energies_j: Vec<f64>,
    /// Duals of the final alternation: β, then one μ per AP.
    pub duals: Vec<DualVariable>,
}

/// Energy of `data` under the given slack and bandwidth.
fn energy_at(scenario: &Scenario, data: &Matrix, bandwidth: &Matrix, slack: &Matrix) -> f64 {
    let mut e = 0.0;
    for i in 0..scenario.num_users {
        for j in 0..scenario.num_aps {
            e += raw_energy(
                scenario.noise_over_gain(i, j),
                bandwidth[(i, j)],
                slack[(i, j)],
                data[(i, j)],
            );
        }
    }
    e
}

/// Compute split proportional to each pair's minimal demand `ηL/D`.
fn proportional_compute(scenario: &Scenario, data: &Matrix) -> Result<Matrix> {
    let (k, m) = (scenario.num_users, scenario.num_aps);
    let demand = Matrix::from_fn(k, m, |i, j| {
        let task = &scenario.tasks[i];
        task.cycles_per_bit * data[(i, j)] / task.deadline_s
    });
    let mut compute = Matrix::zeros(k, m);
    for (j, &capacity) in scenario.compute_capacity.iter().enumerate() {
        let total = demand.col_sum(j);
        if total * (1.0 + SLACK_MARGIN) >= capacity {
            return Err(Error::InfeasibleAp {
                ap: j,
                demand: total,
                capacity,
            });
        }
        for i in 0..k {
            if data[(i, j)] > 0.0 {
                compute[(i, j)] = capacity * demand[(i, j)] / total;
            }
        }
    }
    Ok(compute)
}

/// Joint bandwidth and compute allocation for fixed data `L`, started from
/// a compute split proportional to minimal demand.
pub fn solve_bcaa(scenario: &Scenario, data: &Matrix, cfg: &SolveConfig) -> Result<BcaaSolution> {
    let compute = proportional_compute(scenario, data)?;
    solve_bcaa_warm(scenario, data, &compute, cfg)
}

/// Joint bandwidth and compute allocation for fixed data `L`, started from
/// `compute`.
///
/// Alternates the bandwidth solve (given slack) and the per-AP compute solves
/// (given bandwidth). Each step is an exact block minimization of a convex
/// problem, so energy never increases; iteration stops once an alternation
/// gains less than `cfg.inner_epsilon_j()`.
pub fn solve_bcaa_warm(
    scenario: &Scenario,
    data: &Matrix,
    compute: &Matrix,
    cfg: &SolveConfig,
) -> Result<BcaaSolution> {
    let (k, m) = (scenario.num_users, scenario.num_aps);
    if data.shape() != (k, m) || compute.shape() != (k, m) {
        return Err(Error::Dimension("data/compute shape".into()));
    }
    let mut compute = compute.clone();
    let starved = (0..k).any(|i| (0..m).any(|j| data[(i, j)] > 0.0 && !(compute[(i, j)] > 0.0)));
    if starved {
        compute = proportional_compute(scenario, data)?;
    }
    let mut slack = Allocation {
        data: data.clone(),
        bandwidth: Matrix::zeros(k, m),
        compute: compute.clone(),
    }
    .slack(scenario);
    for i in 0..k {
        for j in 0..m {
            if data[(i, j)] > 0.0 && !(slack[(i, j)] > 0.0) {
                return Err(Error::InfeasiblePair {
                    user: i,
                    ap: j,
                    reason: format!("initial slack {}", slack[(i, j)]),
                });
            }
        }
    }

    let eps = cfg.inner_epsilon_j();
    let mut energies = Vec::new();
    let mut previous = f64::INFINITY;
    for iteration in 1..=cfg.max_inner_iters {
        let baa = solve_baa(scenario, &slack, data, cfg)?;
        let bandwidth = baa.bandwidth;
        let mut duals = vec![baa.dual];
        for j in 0..m {
            let caa = solve_caa(scenario, &bandwidth, data, j, cfg)?;
            for i in 0..k {
                slack[(i, j)] = caa.slack[i];
                compute[(i, j)] = caa.compute[i];
            }
            duals.push(caa.dual);
        }
        let energy = energy_at(scenario, data, &bandwidth, &slack);
        if !energy.is_finite() {
            return Err(Error::NumericallyInfeasible { exponent: f64::INFINITY });
        }
        energies.push(energy);
        if previous - energy < eps {
            return Ok(BcaaSolution {
                bandwidth,
                compute,
                energy_j: energy,
                iterations: iteration,
                energies_j: energies,
                duals,
            });
        }
        previous = energy;
    }
    Err(Error::Convergence {
        what: "bandwidth/compute alternation".into(),
        iterations: cfg.max_inner_iters,
        trace: energies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TaskSpec;

    fn single_ap(gains: &[f64]) -> Scenario {
        Scenario {
            num_users: gains.len(),
            num_aps: 1,
            gains: Matrix::from_rows(gains.iter().map(|&g| vec![g]).collect()).unwrap(),
            tasks: vec![
                TaskSpec {
                    input_bits: 1.5e6,
                    deadline_s: 0.5,
                    cycles_per_bit: 1e3,
                };
                gains.len()
            ],
            bandwidth_hz: 1e7,
            compute_capacity: vec![2.5e10],
            noise_psd: 10f64.powf(-20.4),
        }
    }

    #[test]
    fn single_pair_closed_form() {
        let s = single_ap(&[1e-10]);
        let data = Matrix::filled(1, 1, 1.5e6);
        let sol = solve_bcaa(&s, &data, &SolveConfig::default()).unwrap();
        assert_eq!(sol.bandwidth[(0, 0)], 1e7);
        assert_eq!(sol.compute[(0, 0)], 2.5e10);
        let t = 0.5 - 1.5e9 / 2.5e10;
        let a = s.noise_psd / 1e-10;
        let expected = a * 1e7 * t * (2f64.powf(1.5e6 / (1e7 * t)) - 1.0);
        assert!(((sol.energy_j - expected) / expected).abs() < 1e-12);
    }

    #[test]
    fn symmetric_users_split_both_budgets() {
        let s = single_ap(&[1e-10, 1e-10]);
        let data = Matrix::filled(2, 1, 1.5e6);
        let sol = solve_bcaa(&s, &data, &SolveConfig::default()).unwrap();
        for i in 0..2 {
            assert!((sol.bandwidth[(i, 0)] - 5e6).abs() < 1e-6 * 5e6);
            assert!((sol.compute[(i, 0)] - 1.25e10).abs() < 1e-6 * 1.25e10);
        }
    }

    #[test]
    fn energy_never_increases_across_alternations() {
        let s = single_ap(&[1e-10, 7e-12, 3e-11]);
        let data = Matrix::filled(3, 1, 1.5e6);
        let sol = solve_bcaa(&s, &data, &SolveConfig::default()).unwrap();
        for w in sol.energies_j.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "{:?}", sol.energies_j);
        }
    }

    #[test]
    fn overloaded_ap_rejected() {
        let s = single_ap(&[1e-10; 10]);
        let data = Matrix::filled(10, 1, 1.5e6);
        let e = solve_bcaa(&s, &data, &SolveConfig::default()).unwrap_err();
        assert!(matches!(e, Error::InfeasibleAp { ap: 0, .. }));
    }
}
