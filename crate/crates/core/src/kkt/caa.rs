use crate::error::{Error, Result};
use crate::model::{Matrix, Scenario, SolveConfig};
use crate::physics::phi;

use super::bisect::{bisect, solve_positive, BisectionProblem};
use super::{rescale_to, DualKind, DualOwner, DualVariable, SLACK_MARGIN};

/// Slack and compute for the users of one AP. Inactive users keep `t = D`
/// and `q = 0`.
#[derive(Debug, Clone)]
pub struct CaaSolution {
    pub ap: usize,
    pub slack: Vec<f64>,
    pub compute: Vec<f64>,
    pub dual: DualVariable,
}

struct Job {
    user: usize,
    /// (N0/h)·x
    weight: f64,
    /// L/x
    per_hz: f64,
    cycles: f64,
    deadline: f64,
}

impl Job {
    /// Fraction `w = Q/D` of the deadline spent computing, for dual `mu`.
    ///
    /// Stationarity: `(N0/h)·x·phi(L/(x t)) = μ·W/(D − t)²`; the left side
    /// falls and the right side rises with `t`.
    fn compute_fraction(&self, mu: f64, tol: f64) -> Result<f64> {
        let w_max = 1.0 - SLACK_MARGIN;
        let gap = |w: f64| {
            let t = self.deadline * (1.0 - w);
            let q_time = self.deadline * w;
            self.weight * phi(self.per_hz / t) - mu * self.cycles / (q_time * q_time)
        };
        if gap(w_max) <= 0.0 {
            return Ok(w_max);
        }
        // gap increases with w; walk down until it is negative
        let mut lo = w_max;
        loop {
            lo *= 0.5;
            if lo < 1e-300 {
                return Err(Error::Bracket { lower: lo, upper: w_max });
            }
            if gap(lo) < 0.0 {
                break;
            }
        }
        let log_tol = tol / lo.ln().abs().max(1.0);
        let ln_w = bisect(BisectionProblem::new(|s: f64| gap(s.exp()), lo.ln(), w_max.ln(), 0.0, log_tol))?;
        Ok(ln_w.exp())
    }

    fn compute_for(&self, w: f64) -> f64 {
        self.cycles / (self.deadline * w)
    }
}

/// Slack allocation at AP `ap` for fixed bandwidth `x` and data `L`.
///
/// The capacity constraint `Σ_i ηL/(D − t) ≤ C_j` binds at the optimum
/// because energy falls as compute grows, so the per-AP dual `μ_j` is
/// bisected until allocated compute equals `C_j`.
pub fn solve_caa(
    scenario: &Scenario,
    bandwidth: &Matrix,
    data: &Matrix,
    ap: usize,
    cfg: &SolveConfig,
) -> Result<CaaSolution> {
    if ap >= scenario.num_aps {
        return Err(Error::Dimension(format!("ap {ap} out of range")));
    }
    let shape = (scenario.num_users, scenario.num_aps);
    if bandwidth.shape() != shape || data.shape() != shape {
        return Err(Error::Dimension("bandwidth/data shape".into()));
    }
    let capacity = scenario.compute_capacity[ap];
    let mut jobs = Vec::new();
    for (i, task) in scenario.tasks.iter().enumerate() {
        let l = data[(i, ap)];
        if l <= 0.0 {
            continue;
        }
        let x = bandwidth[(i, ap)];
        if !(x > 0.0) {
            return Err(Error::Domain(format!("pair ({i}, {ap}) carries data without bandwidth")));
        }
        jobs.push(Job {
            user: i,
            weight: scenario.noise_over_gain(i, ap) * x,
            per_hz: l / x,
            cycles: task.cycles_per_bit * l,
            deadline: task.deadline_s,
        });
    }
    let demand: f64 = jobs
        .iter()
        .map(|job| job.compute_for(1.0 - SLACK_MARGIN))
        .sum();
    if demand >= capacity {
        return Err(Error::InfeasibleAp { ap, demand, capacity });
    }

    let mut slack: Vec<f64> = scenario.tasks.iter().map(|t| t.deadline_s).collect();
    let mut compute = vec![0.0; scenario.num_users];
    let tol = cfg.bisect_tol;
    let mu = match jobs.len() {
        0 => 0.0,
        1 => {
            let job = &jobs[0];
            let q_time = job.cycles / capacity;
            let t = job.deadline - q_time;
            job.weight * phi(job.per_hz / t) * q_time * q_time / job.cycles
        }
        n => {
            let guess = jobs
                .iter()
                .map(|job| {
                    let q_time = job.cycles / (capacity / n as f64);
                    let t = (job.deadline - q_time).max(SLACK_MARGIN * job.deadline);
                    job.weight * phi(job.per_hz / t) * q_time * q_time / job.cycles
                })
                .sum::<f64>()
                / n as f64;
            let mut failure = None;
            let total = |mu: f64, failure: &mut Option<Error>| -> f64 {
                let mut sum = 0.0;
                for job in &jobs {
                    match job.compute_fraction(mu, tol) {
                        Ok(w) => sum += job.compute_for(w),
                        Err(e) => {
                            failure.get_or_insert(e);
                        }
                    }
                }
                sum
            };
            let mu = solve_positive(|mu| total(mu, &mut failure), capacity, guess, false, tol);
            if let Some(e) = failure {
                return Err(e);
            }
            mu?
        }
    };

    if !jobs.is_empty() {
        let mut q: Vec<f64> = if jobs.len() == 1 {
            vec![capacity]
        } else {
            jobs.iter()
                .map(|job| Ok(job.compute_for(job.compute_fraction(mu, tol)?)))
                .collect::<Result<_>>()?
        };
        rescale_to(&mut q, capacity, |_| true);
        for (job, qv) in jobs.iter().zip(q) {
            compute[job.user] = qv;
            slack[job.user] = job.deadline - job.cycles / qv;
        }
    }
    Ok(CaaSolution {
        ap,
        slack,
        compute,
        dual: DualVariable {
            kind: DualKind::MuCompute,
            owner: DualOwner::Ap(ap),
            value: mu,
        },
    })
}
