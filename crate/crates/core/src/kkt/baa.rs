use crate::error::{Error, Result};
use crate::model::{Matrix, Scenario, SolveConfig};
use crate::physics::{phi, LN2};

use super::bisect::solve_positive;
use super::{rescale_to, DualKind, DualOwner, DualVariable};

#[derive(Debug, Clone)]
pub struct BaaSolution {
    pub bandwidth: Matrix,
    pub dual: DualVariable,
}

struct Link {
    i: usize,
    j: usize,
    /// (N0/h)·t
    weight: f64,
    /// L/t
    rate: f64,
}

/// Inverts `phi(u) = c` for `u > 0`.
fn invert_phi(c: f64, tol: f64) -> Result<f64> {
    // phi(u) ≈ (u ln2)²/2 near zero
    let guess = (2.0 * c).sqrt() / LN2;
    solve_positive(phi, c, guess.min(64.0), true, tol)
}

/// Bandwidth for fixed slack `t` and data `L`.
///
/// Stationarity in `x_{i,j}` reads `(N0/h)·t·phi(L/(x t)) = β` with
/// `phi(u) = 1 + 2^u(u ln2 − 1)` increasing, so every active pair's
/// bandwidth is a decreasing function of the single dual `β > 0`, which is
/// bisected until the bandwidths sum to `B`.
pub fn solve_baa(scenario: &Scenario, slack: &Matrix, data: &Matrix, cfg: &SolveConfig) -> Result<BaaSolution> {
    let shape = (scenario.num_users, scenario.num_aps);
    if slack.shape() != shape || data.shape() != shape {
        return Err(Error::Dimension("slack/data shape".into()));
    }
    let mut links = Vec::new();
    for i in 0..shape.0 {
        let d = scenario.tasks[i].deadline_s;
        for j in 0..shape.1 {
            let l = data[(i, j)];
            if l <= 0.0 {
                continue;
            }
            let t = slack[(i, j)];
            if !(t > 0.0 && t < d) {
                return Err(Error::Domain(format!(
                    "slack {t} of pair ({i}, {j}) outside (0, {d})"
                )));
            }
            links.push(Link {
                i,
                j,
                weight: scenario.noise_over_gain(i, j) * t,
                rate: l / t,
            });
        }
    }
    if links.is_empty() {
        return Err(Error::Degenerate("no pair carries data".into()));
    }
    let budget = scenario.bandwidth_hz;
    let tol = cfg.bisect_tol;

    let widths = |beta: f64| -> Result<Vec<f64>> {
        links
            .iter()
            .map(|link| Ok(link.rate / invert_phi(beta / link.weight, tol)?))
            .collect()
    };

    let beta = if links.len() == 1 {
        links[0].weight * phi(links[0].rate / budget)
    } else {
        let share = budget / links.len() as f64;
        let guess = links
            .iter()
            .map(|link| link.weight * phi(link.rate / share))
            .sum::<f64>()
            / links.len() as f64;
        let mut failure = None;
        let beta = solve_positive(
            |beta| match widths(beta) {
                Ok(w) => w.iter().sum(),
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            },
            budget,
            guess,
            false,
            tol,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        beta?
    };

    let mut w = if links.len() == 1 {
        vec![budget]
    } else {
        widths(beta)?
    };
    rescale_to(&mut w, budget, |_| true);
    let mut bandwidth = Matrix::zeros(shape.0, shape.1);
    for (link, v) in links.iter().zip(w) {
        bandwidth[(link.i, link.j)] = v;
    }
    Ok(BaaSolution {
        bandwidth,
        dual: DualVariable {
            kind: DualKind::BetaBandwidth,
            owner: DualOwner::Global,
            value: beta,
        },
    })
}
