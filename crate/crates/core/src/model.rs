//! Domain records shared by every solver.
//!
//! All quantities are SI: bits, Hz, seconds, cycles/s, Watts and Joules.
//! Millijoules only appear in reporting code.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Dense row-major matrix, serialized as an array of row arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
            return Err(Error::Dimension(format!(
                "row {i} has {} entries, expected {cols}",
                r.len()
            )));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.rows).map(move |i| self[(i, j)])
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> f64 {
        self.column(j).sum()
    }

    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Serialize for Matrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_seq((0..self.rows).map(|i| self.row(i)))
    }
}

impl<'de> Deserialize<'de> for Matrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        Matrix::from_rows(rows).map_err(serde::de::Error::custom)
    }
}

/// One user's computing task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub input_bits: f64,
    pub deadline_s: f64,
    pub cycles_per_bit: f64,
}

impl TaskSpec {
    /// Total CPU cycles the task needs.
    pub fn required_cycles(&self) -> f64 {
        self.cycles_per_bit * self.input_bits
    }

    fn check(&self, user: usize) -> Result<()> {
        for (name, v) in [
            ("input_bits", self.input_bits),
            ("deadline_s", self.deadline_s),
            ("cycles_per_bit", self.cycles_per_bit),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidValue(format!("task {user}: {name} = {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub num_users: usize,
    pub num_aps: usize,
    /// Linear channel power gain, users × APs.
    pub gains: Matrix,
    pub tasks: Vec<TaskSpec>,
    pub bandwidth_hz: f64,
    /// Cycles/s per AP.
    pub compute_capacity: Vec<f64>,
    /// Noise power spectral density in W/Hz.
    pub noise_psd: f64,
}

impl Scenario {
    /// Structural checks: dimensions, positivity, finiteness, and the
    /// aggregate necessary condition that total minimal compute demand fits
    /// in total capacity.
    pub fn check(&self) -> Result<()> {
        if self.num_users == 0 || self.num_aps == 0 {
            return Err(Error::Dimension("scenario needs at least one user and one AP".into()));
        }
        if self.gains.shape() != (self.num_users, self.num_aps) {
            return Err(Error::Dimension(format!(
                "gains are {:?}, expected ({}, {})",
                self.gains.shape(),
                self.num_users,
                self.num_aps
            )));
        }
        if self.tasks.len() != self.num_users {
            return Err(Error::Dimension(format!(
                "{} tasks for {} users",
                self.tasks.len(),
                self.num_users
            )));
        }
        if self.compute_capacity.len() != self.num_aps {
            return Err(Error::Dimension(format!(
                "{} capacities for {} APs",
                self.compute_capacity.len(),
                self.num_aps
            )));
        }
        if let Some(g) = self.gains.as_slice().iter().find(|g| !(g.is_finite() && **g > 0.0)) {
            return Err(Error::InvalidValue(format!("channel gain {g}")));
        }
        for (i, task) in self.tasks.iter().enumerate() {
            task.check(i)?;
        }
        for (name, v) in [("bandwidth_hz", self.bandwidth_hz), ("noise_psd", self.noise_psd)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidValue(format!("{name} = {v}")));
            }
        }
        if let Some(c) = self.compute_capacity.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
            return Err(Error::InvalidValue(format!("compute capacity {c}")));
        }
        let demand: f64 = self.tasks.iter().map(|t| t.required_cycles() / t.deadline_s).sum();
        let capacity: f64 = self.compute_capacity.iter().sum();
        if demand >= capacity {
            return Err(Error::InfeasibleCapacity { demand, capacity });
        }
        Ok(())
    }

    /// N0 / h for pair (i, j).
    pub fn noise_over_gain(&self, user: usize, ap: usize) -> f64 {
        self.noise_psd / self.gains[(user, ap)]
    }

    pub fn min_input_bits(&self) -> f64 {
        self.tasks.iter().map(|t| t.input_bits).fold(f64::INFINITY, f64::min)
    }

    /// The operating point of pair (i, j) under `alloc`.
    pub fn pair_point(&self, alloc: &Allocation, user: usize, ap: usize) -> PairPoint {
        let task = &self.tasks[user];
        PairPoint::from_compute(
            alloc.data[(user, ap)],
            alloc.bandwidth[(user, ap)],
            alloc.compute[(user, ap)],
            task.deadline_s,
            task.cycles_per_bit,
            self.noise_over_gain(user, ap),
        )
    }
}

/// Data split, bandwidth and compute assignment, each users × APs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub data: Matrix,
    pub bandwidth: Matrix,
    pub compute: Matrix,
}

impl Allocation {
    pub fn zeros(users: usize, aps: usize) -> Self {
        Self {
            data: Matrix::zeros(users, aps),
            bandwidth: Matrix::zeros(users, aps),
            compute: Matrix::zeros(users, aps),
        }
    }

    /// Slack t = D − ηL/q for every pair; inactive pairs get D.
    pub fn slack(&self, scenario: &Scenario) -> Matrix {
        Matrix::from_fn(self.data.rows(), self.data.cols(), |i, j| {
            let task = &scenario.tasks[i];
            let l = self.data[(i, j)];
            if l > 0.0 {
                task.deadline_s - task.cycles_per_bit * l / self.compute[(i, j)]
            } else {
                task.deadline_s
            }
        })
    }
}

/// How a [`PairPoint`] was specified; the other quantity is derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairResource {
    Compute(f64),
    Slack(f64),
}

/// A single (user, AP) operating point.
///
/// Exactly one of compute and slack is stored; the other follows from
/// `t = D − ηL/q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairPoint {
    pub data_bits: f64,
    pub bandwidth_hz: f64,
    pub resource: PairResource,
    pub deadline_s: f64,
    pub cycles_per_bit: f64,
    pub noise_over_gain: f64,
}

impl PairPoint {
    pub fn from_compute(
        data_bits: f64,
        bandwidth_hz: f64,
        compute_cps: f64,
        deadline_s: f64,
        cycles_per_bit: f64,
        noise_over_gain: f64,
    ) -> Self {
        Self {
            data_bits,
            bandwidth_hz,
            resource: PairResource::Compute(compute_cps),
            deadline_s,
            cycles_per_bit,
            noise_over_gain,
        }
    }

    pub fn from_slack(
        data_bits: f64,
        bandwidth_hz: f64,
        slack_s: f64,
        deadline_s: f64,
        cycles_per_bit: f64,
        noise_over_gain: f64,
    ) -> Self {
        Self {
            data_bits,
            bandwidth_hz,
            resource: PairResource::Slack(slack_s),
            deadline_s,
            cycles_per_bit,
            noise_over_gain,
        }
    }

    pub fn slack_s(&self) -> f64 {
        match self.resource {
            PairResource::Slack(t) => t,
            PairResource::Compute(_) if self.data_bits == 0.0 => self.deadline_s,
            PairResource::Compute(q) => self.deadline_s - self.cycles_per_bit * self.data_bits / q,
        }
    }

    /// Allocated cycles/s; zero for a slack-specified point carrying no data.
    pub fn compute_cps(&self) -> f64 {
        match self.resource {
            PairResource::Compute(q) => q,
            PairResource::Slack(_) if self.data_bits == 0.0 => 0.0,
            PairResource::Slack(t) => self.cycles_per_bit * self.data_bits / (self.deadline_s - t),
        }
    }

    /// Computing time Q = ηL/q.
    pub fn compute_time_s(&self) -> f64 {
        self.deadline_s - self.slack_s()
    }
}

/// Tolerances and iteration limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    /// Outer stop threshold in Joules.
    pub epsilon_j: f64,
    /// Relative tolerance for every bisection and budget residual.
    pub bisect_tol: f64,
    pub max_outer_iters: usize,
    /// Cap on bandwidth/compute alternations inside one joint solve.
    pub max_inner_iters: usize,
    /// Pairs carrying at most this many bits are frozen at zero.
    pub activity_threshold_bits: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            epsilon_j: 1e-5,
            bisect_tol: 1e-10,
            max_outer_iters: 100,
            max_inner_iters: 10_000,
            activity_threshold_bits: 1.5,
        }
    }
}

impl SolveConfig {
    /// Defaults with the activity threshold set to 1e−6 of the smallest task.
    pub fn for_scenario(scenario: &Scenario) -> Self {
        Self {
            activity_threshold_bits: 1e-6 * scenario.min_input_bits(),
            ..Self::default()
        }
    }

    pub fn with_epsilon_mj(mut self, eps_mj: f64) -> Self {
        self.epsilon_j = eps_mj * 1e-3;
        self
    }

    /// Tolerance for one decade tighter inner joint solves.
    pub fn inner_epsilon_j(&self) -> f64 {
        self.epsilon_j / 10.0
    }

    pub fn check(&self, scenario: &Scenario) -> Result<()> {
        if !(self.epsilon_j > 0.0 && self.bisect_tol > 0.0 && self.bisect_tol < 1e-2) {
            return Err(Error::InvalidValue(format!(
                "epsilon_j = {}, bisect_tol = {}",
                self.epsilon_j, self.bisect_tol
            )));
        }
        if self.max_outer_iters == 0 || self.max_inner_iters == 0 {
            return Err(Error::InvalidValue("iteration limits must be positive".into()));
        }
        let cap = scenario.min_input_bits() / scenario.num_aps as f64;
        if !(self.activity_threshold_bits >= 0.0 && self.activity_threshold_bits < cap) {
            return Err(Error::InvalidValue(format!(
                "activity threshold {} bits must lie in [0, {cap})",
                self.activity_threshold_bits
            )));
        }
        Ok(())
    }
}

/// A single violated constraint.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "constraint", rename_all = "snake_case")]
pub enum Violation {
    DataRowSum { user: usize, residual: f64 },
    BandwidthTotal { residual: f64 },
    ComputeColumnSum { ap: usize, residual: f64 },
    NonpositiveSlack { user: usize, ap: usize, slack_s: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DataRowSum { user, residual } => {
                write!(f, "data row sum of user {user}: relative residual {residual:.3e}")
            }
            Violation::BandwidthTotal { residual } => {
                write!(f, "total bandwidth: relative residual {residual:.3e}")
            }
            Violation::ComputeColumnSum { ap, residual } => {
                write!(f, "compute column sum of ap {ap}: relative residual {residual:.3e}")
            }
            Violation::NonpositiveSlack { user, ap, slack_s } => {
                write!(f, "nonpositive slack for pair ({user}, {ap}): t = {slack_s:.3e} s")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("all constraints satisfied");
        }
        for (k, v) in self.violations.iter().enumerate() {
            if k > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

fn relative_residual(sum: f64, budget: f64) -> f64 {
    (sum - budget).abs() / budget
}

/// Checks the budget equalities and positive slack of every active pair.
pub fn validate(scenario: &Scenario, alloc: &Allocation, cfg: &SolveConfig) -> Result<ValidationReport> {
    scenario.check()?;
    let shape = (scenario.num_users, scenario.num_aps);
    for (name, m) in [
        ("data", &alloc.data),
        ("bandwidth", &alloc.bandwidth),
        ("compute", &alloc.compute),
    ] {
        if m.shape() != shape {
            return Err(Error::Dimension(format!(
                "{name} matrix is {:?}, expected {shape:?}",
                m.shape()
            )));
        }
        if let Some(v) = m.as_slice().iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidValue(format!("{name} entry {v}")));
        }
    }

    let mut report = ValidationReport::default();
    for (i, task) in scenario.tasks.iter().enumerate() {
        let residual = relative_residual(alloc.data.row_sum(i), task.input_bits);
        if residual > cfg.bisect_tol {
            report.violations.push(Violation::DataRowSum { user: i, residual });
        }
    }
    let residual = relative_residual(alloc.bandwidth.total(), scenario.bandwidth_hz);
    if residual > cfg.bisect_tol {
        report.violations.push(Violation::BandwidthTotal { residual });
    }
    for (j, &cap) in scenario.compute_capacity.iter().enumerate() {
        let residual = relative_residual(alloc.compute.col_sum(j), cap);
        if residual > cfg.bisect_tol {
            report.violations.push(Violation::ComputeColumnSum { ap: j, residual });
        }
    }
    for i in 0..scenario.num_users {
        for j in 0..scenario.num_aps {
            if alloc.data[(i, j)] <= cfg.activity_threshold_bits {
                continue;
            }
            let p = scenario.pair_point(alloc, i, j);
            let slack_s = p.slack_s();
            if !(slack_s > 0.0) || alloc.bandwidth[(i, j)] <= 0.0 {
                report.violations.push(Violation::NonpositiveSlack { user: i, ap: j, slack_s });
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn single_pair(l: f64, d: f64, eta: f64, b: f64, c: f64) -> Scenario {
        Scenario {
            num_users: 1,
            num_aps: 1,
            gains: Matrix::filled(1, 1, 1e-10),
            tasks: vec![TaskSpec {
                input_bits: l,
                deadline_s: d,
                cycles_per_bit: eta,
            }],
            bandwidth_hz: b,
            compute_capacity: vec![c],
            noise_psd: 4e-21,
        }
    }

    fn full(s: &Scenario, q: f64) -> Allocation {
        Allocation {
            data: Matrix::filled(1, 1, s.tasks[0].input_bits),
            bandwidth: Matrix::filled(1, 1, s.bandwidth_hz),
            compute: Matrix::filled(1, 1, q),
        }
    }

    #[test]
    fn single_pair_full_allocation_is_valid() {
        let s = single_pair(1.5e6, 0.5, 1e3, 1e7, 2.5e10);
        let r = validate(&s, &full(&s, 2.5e10), &SolveConfig::default()).unwrap();
        assert!(r.is_empty(), "{r}");
    }

    #[test]
    fn boundary_compute_reports_nonpositive_slack() {
        let s = single_pair(1.5e6, 0.5, 1e3, 1e7, 2.5e10);
        let q = 1e3 * 1.5e6 / 0.5;
        let r = validate(&s, &full(&s, q), &SolveConfig::default()).unwrap();
        assert!(r.violations.iter().any(|v| matches!(
            v,
            Violation::NonpositiveSlack { user: 0, ap: 0, .. }
        )));
        assert!(r.to_string().contains("nonpositive slack"));
    }

    #[test]
    fn structural_errors() {
        let s = single_pair(1.0, 1.0, 1.0, 1.0, 10.0);
        let mut a = full(&s, 10.0);
        a.bandwidth = Matrix::zeros(2, 1);
        assert!(matches!(
            validate(&s, &a, &SolveConfig::default()),
            Err(Error::Dimension(_))
        ));
        let mut a = full(&s, 10.0);
        a.compute[(0, 0)] = f64::NAN;
        assert!(matches!(
            validate(&s, &a, &SolveConfig::default()),
            Err(Error::InvalidValue(_))
        ));
        let mut a = full(&s, 10.0);
        a.data[(0, 0)] = -1.0;
        assert!(validate(&s, &a, &SolveConfig::default()).is_err());
    }

    #[test]
    fn pair_point_slack_and_compute_agree() {
        let p = PairPoint::from_compute(2.0, 1.0, 4.0, 1.0, 1.0, 1.0);
        assert_eq!(p.slack_s(), 0.5);
        let p2 = PairPoint::from_slack(2.0, 1.0, 0.5, 1.0, 1.0, 1.0);
        assert_eq!(p2.compute_cps(), 4.0);
        let idle = PairPoint::from_compute(0.0, 1.0, 4.0, 1.0, 1.0, 1.0);
        assert_eq!(idle.slack_s(), idle.deadline_s);
    }

    #[test]
    fn ragged_matrix_rejected() {
        assert!(Matrix::from_rows(vec![vec![1.0, 2.0], vec![3.0]]).is_err());
        let json = "[[1.0,2.0],[3.0]]";
        assert!(serde_json::from_str::<Matrix>(json).is_err());
    }

    #[test]
    fn config_threshold_bound() {
        let s = single_pair(1.5e6, 0.5, 1e3, 1e7, 2.5e10);
        let mut cfg = SolveConfig::for_scenario(&s);
        assert!(cfg.check(&s).is_ok());
        cfg.activity_threshold_bits = 2e6;
        assert!(cfg.check(&s).is_err());
    }
}
