use crate::error::{Error, Result};
use crate::model::{Matrix, Scenario, SolveConfig};
use crate::physics::{marginal_data_cost, LN2};

use super::bisect::{bisect, solve_positive, BisectionProblem};
use super::{rescale_to, DualKind, DualOwner, DualVariable, SLACK_MARGIN};

#[derive(Debug, Clone)]
pub struct DaaSolution {
    pub data: Matrix,
    /// One `ν = −λ` per user.
    pub duals: Vec<DualVariable>,
}

struct Link {
    ap: usize,
    a: f64,
    x: f64,
    q: f64,
    l_max: f64,
}

/// Data split for fixed bandwidth `x` and compute `q`.
///
/// For each user the marginal energy `∂E/∂L_{i,j}` is equalized at the
/// common dual `ν_i` over the APs it uses; an AP stays at zero when its
/// marginal cost at zero data, `ln2·N0/h_{i,j}`, already exceeds `ν_i`.
/// Entries are capped at `(1 − δ)·D_i·q_{i,j}/η`. Pairs without bandwidth or
/// compute are excluded and stay at zero.
pub fn solve_daa(scenario: &Scenario, x: &Matrix, q: &Matrix, cfg: &SolveConfig) -> Result<DaaSolution> {
    let shape = (scenario.num_users, scenario.num_aps);
    if x.shape() != shape || q.shape() != shape {
        return Err(Error::Dimension("bandwidth/compute shape".into()));
    }
    let mut data = Matrix::zeros(shape.0, shape.1);
    let mut duals = Vec::with_capacity(shape.0);
    for (i, task) in scenario.tasks.iter().enumerate() {
        let (d, eta) = (task.deadline_s, task.cycles_per_bit);
        let links: Vec<Link> = (0..shape.1)
            .filter(|&j| x[(i, j)] > 0.0 && q[(i, j)] > 0.0)
            .map(|j| Link {
                ap: j,
                a: scenario.noise_over_gain(i, j),
                x: x[(i, j)],
                q: q[(i, j)],
                l_max: (1.0 - SLACK_MARGIN) * d * q[(i, j)] / eta,
            })
            .collect();
        let reachable: f64 = links.iter().map(|l| l.l_max).sum();
        if reachable <= task.input_bits {
            return Err(Error::InfeasibleUser {
                user: i,
                reachable,
                required: task.input_bits,
            });
        }

        let load_at = |link: &Link, nu: f64| -> Result<f64> {
            if link.a * LN2 >= nu {
                return Ok(0.0);
            }
            let cost = |l: f64| marginal_data_cost(link.a, link.x, link.q, d, eta, l);
            if cost(link.l_max) <= nu {
                return Ok(link.l_max);
            }
            let s = bisect(BisectionProblem::new(
                |s| cost(s * link.l_max),
                0.0,
                1.0,
                nu,
                cfg.bisect_tol,
            ))?;
            Ok(s * link.l_max)
        };

        let (nu, loads) = if links.len() == 1 {
            let nu = marginal_data_cost(links[0].a, links[0].x, links[0].q, d, eta, task.input_bits);
            (nu, vec![task.input_bits])
        } else {
            let mut failure = None;
            let guess = 2.0 * links.iter().map(|l| l.a * LN2).fold(0.0, f64::max);
            let nu = solve_positive(
                |nu| {
                    let mut sum = 0.0;
                    for link in &links {
                        match load_at(link, nu) {
                            Ok(v) => sum += v,
                            Err(e) => {
                                failure.get_or_insert(e);
                            }
                        }
                    }
                    sum
                },
                task.input_bits,
                guess,
                true,
                cfg.bisect_tol,
            )?;
            if let Some(e) = failure {
                return Err(e);
            }
            let mut loads = links
                .iter()
                .map(|link| load_at(link, nu))
                .collect::<Result<Vec<_>>>()?;
            let snapshot = loads.clone();
            rescale_to(&mut loads, task.input_bits, |k| {
                snapshot[k] > 0.0 && snapshot[k] < links[k].l_max
            });
            for (v, link) in loads.iter_mut().zip(&links) {
                *v = v.clamp(0.0, link.l_max);
            }
            (nu, loads)
        };
        for (link, v) in links.iter().zip(loads) {
            data[(i, link.ap)] = v;
        }
        duals.push(DualVariable {
            kind: DualKind::LambdaData,
            owner: DualOwner::User(i),
            value: nu,
        });
    }
    Ok(DaaSolution { data, duals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Allocation, TaskSpec};
    use crate::physics::total_energy;

    fn two_ap_user(g1: f64, g2: f64) -> Scenario {
        Scenario {
            num_users: 1,
            num_aps: 2,
            gains: Matrix::from_rows(vec![vec![g1, g2]]).unwrap(),
            tasks: vec![TaskSpec {
                input_bits: 1.5e6,
                deadline_s: 0.5,
                cycles_per_bit: 1e3,
            }],
            bandwidth_hz: 1e7,
            compute_capacity: vec![2.5e10, 2.5e10],
            noise_psd: 10f64.powf(-20.4),
        }
    }

    #[test]
    fn single_ap_takes_everything() {
        let mut s = two_ap_user(1e-10, 1e-10);
        s.num_aps = 1;
        s.gains = Matrix::filled(1, 1, 1e-10);
        s.compute_capacity = vec![2.5e10];
        let x = Matrix::filled(1, 1, 1e7);
        let q = Matrix::filled(1, 1, 2.5e10);
        let sol = solve_daa(&s, &x, &q, &SolveConfig::default()).unwrap();
        assert_eq!(sol.data[(0, 0)], 1.5e6);
    }

    #[test]
    fn symmetric_aps_split_evenly() {
        let s = two_ap_user(1e-10, 1e-10);
        let x = Matrix::filled(1, 2, 5e6);
        let q = Matrix::filled(1, 2, 2.5e10);
        let sol = solve_daa(&s, &x, &q, &SolveConfig::default()).unwrap();
        assert!((sol.data[(0, 0)] - 7.5e5).abs() < 1e-6 * 7.5e5);
        assert!((sol.data.row_sum(0) - 1.5e6).abs() < 1e-9 * 1.5e6);
    }

    #[test]
    fn dual_direction_increases_load() {
        // larger ν admits more data on every interior link
        let s = two_ap_user(1e-10, 6e-11);
        let x = Matrix::filled(1, 2, 5e6);
        let q = Matrix::filled(1, 2, 2.5e10);
        let base = solve_daa(&s, &x, &q, &SolveConfig::default()).unwrap();
        let mut bigger = s.clone();
        bigger.tasks[0].input_bits *= 1.2;
        let more = solve_daa(&bigger, &x, &q, &SolveConfig::default()).unwrap();
        assert!(more.duals[0].value > base.duals[0].value);
        assert!(more.data[(0, 0)] > base.data[(0, 0)]);
        assert!(more.data[(0, 1)] > base.data[(0, 1)]);
    }

    #[test]
    fn infeasible_user_is_named() {
        let s = two_ap_user(1e-10, 1e-10);
        let x = Matrix::filled(1, 2, 5e6);
        // each AP can process at most D·q/η = 0.5·1e9/1e3 = 5e5 bits
        let q = Matrix::filled(1, 2, 1e9);
        let err = solve_daa(&s, &x, &q, &SolveConfig::default()).unwrap_err();
        assert!(matches!(err, Error::InfeasibleUser { user: 0, .. }));
    }

    #[test]
    fn does_not_increase_energy() {
        let s = two_ap_user(1e-10, 2e-11);
        let x = Matrix::from_rows(vec![vec![3e6, 7e6]]).unwrap();
        let q = Matrix::filled(1, 2, 2.5e10);
        let start = Allocation {
            data: Matrix::from_rows(vec![vec![7.5e5, 7.5e5]]).unwrap(),
            bandwidth: x.clone(),
            compute: q.clone(),
        };
        let sol = solve_daa(&s, &x, &q, &SolveConfig::default()).unwrap();
        let after = Allocation {
            data: sol.data,
            ..start.clone()
        };
        assert!(total_energy(&s, &after).unwrap() <= total_energy(&s, &start).unwrap());
    }
}
