//! Joint wireless-bandwidth, computing-resource and data-partition allocation
//! for multi-AP mobile edge computing.
//!
//! Users split their offloaded input data across several access points, each
//! hosting an edge server. The library minimizes total uplink transmission
//! energy subject to per-user deadlines, a global bandwidth budget and per-AP
//! compute capacities:
//!
//! - [`model`]: domain records (scenario, allocation, pair operating points)
//!   and constraint validation.
//! - [`physics`]: closed-form rate, power, energy, gradients and Hessians.
//! - [`kkt`]: monotone bisection and the data, bandwidth and compute
//!   subproblem solvers built on their stationarity conditions.
//! - [`orchestrator`]: the outer alternating loop, initializations, baselines
//!   and metrics.
//! - [`scenario`]: reproducible scenario generation with log-distance pathloss.
//! - [`bench`]: parameter sweeps and CSV output used by the CLI.

// `!(v > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod error;
pub mod kkt;
pub mod model;
pub mod orchestrator;
pub mod physics;
pub mod scenario;

pub use error::{Error, Result};
pub use model::{Allocation, Matrix, PairPoint, Scenario, SolveConfig, TaskSpec};
pub use orchestrator::{InitStrategy, Metrics, Solution, SolveTrace};
