//! Stationarity-based subproblem solvers.
//!
//! Each solver fixes part of the allocation and finds the rest from the
//! KKT conditions: a nested search where an outer bisection on the dual of
//! the coupling constraint wraps independent inner bisections per pair.
//!
//! - [`solve_daa`]: data split `L` for fixed bandwidth and compute.
//! - [`solve_baa`]: bandwidth `x` for fixed slack.
//! - [`solve_caa`]: slack (equivalently compute) at one AP for fixed bandwidth.
//! - [`solve_bcaa`]: alternates the last two to the joint optimum for fixed `L`.

mod baa;
mod bcaa;
pub mod bisect;
mod caa;
mod daa;

use serde::Serialize;

pub use baa::{solve_baa, BaaSolution};
pub use bcaa::{solve_bcaa, solve_bcaa_warm, BcaaSolution};
pub use bisect::{bisect, solve_positive, BisectionProblem};
pub use caa::{solve_caa, CaaSolution};
pub use daa::{solve_daa, DaaSolution};

use crate::model::Matrix;

/// Slack never drops below `SLACK_MARGIN · D`, keeping `2^{L/(x t)}` finite.
pub const SLACK_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DualKind {
    /// Stored as `ν = −λ ≥ 0`.
    LambdaData,
    BetaBandwidth,
    MuCompute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DualOwner {
    User(usize),
    Global,
    Ap(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DualVariable {
    pub kind: DualKind,
    pub owner: DualOwner,
    pub value: f64,
}

/// Zeroes every entry of `data` at or below `threshold`, moving its bits to
/// the largest entry of the same row. Returns the frozen `(user, ap)` pairs.
pub fn freeze_inactive(data: &mut Matrix, threshold: f64) -> Vec<(usize, usize)> {
    let mut frozen = Vec::new();
    for i in 0..data.rows() {
        let row = data.row_mut(i);
        let mut moved = 0.0;
        for (j, v) in row.iter_mut().enumerate() {
            if *v > 0.0 && *v <= threshold {
                moved += *v;
                *v = 0.0;
                frozen.push((i, j));
            }
        }
        if moved > 0.0 {
            let (jmax, _) = row
                .iter()
                .enumerate()
                .fold((0, f64::MIN), |acc, (j, &v)| if v > acc.1 { (j, v) } else { acc });
            row[jmax] += moved;
        }
    }
    frozen
}

/// Proportionally rescales the entries selected by `adjustable` so that
/// `values` sums to `target`.
pub(crate) fn rescale_to(values: &mut [f64], target: f64, adjustable: impl Fn(usize) -> bool) {
    let total: f64 = values.iter().sum();
    let free: f64 = values
        .iter()
        .enumerate()
        .filter(|(k, _)| adjustable(*k))
        .map(|(_, v)| v)
        .sum();
    if free <= 0.0 {
        return;
    }
    let factor = (free + target - total) / free;
    for (k, v) in values.iter_mut().enumerate() {
        if adjustable(k) {
            *v *= factor;
        }
    }
}
