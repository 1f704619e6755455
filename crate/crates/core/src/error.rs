use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Which subproblem of the outer loop produced an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Daa,
    Bcaa,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Stage::Daa => f.write_str("data allocation"),
            Stage::Bcaa => f.write_str("bandwidth/compute allocation"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("infeasible pair (user {user}, ap {ap}): {reason}")]
    InfeasiblePair {
        user: usize,
        ap: usize,
        reason: String,
    },
    #[error("nonpositive slack t = {slack_s:e} s with positive data")]
    NonpositiveSlack { slack_s: f64 },
    #[error("pair is numerically infeasible: exponent {exponent:.3e} overflows")]
    NumericallyInfeasible { exponent: f64 },
    #[error("user {user} is infeasible: reachable data {reachable:.6e} bits < required {required:.6e} bits")]
    InfeasibleUser {
        user: usize,
        reachable: f64,
        required: f64,
    },
    #[error("ap {ap} is infeasible: minimum compute demand {demand:.6e} cycles/s >= capacity {capacity:.6e}")]
    InfeasibleAp {
        ap: usize,
        demand: f64,
        capacity: f64,
    },
    #[error("total compute demand {demand:.6e} cycles/s >= total capacity {capacity:.6e}")]
    InfeasibleCapacity { demand: f64, capacity: f64 },
    #[error("bisection bracket [{lower}, {upper}] does not enclose the target")]
    Bracket { lower: f64, upper: f64 },
    #[error("no convergence after {iterations} iterations: {what}")]
    Convergence {
        what: String,
        iterations: usize,
        trace: Vec<f64>,
    },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("internal consistency violated: {0}")]
    Consistency(String),
    #[error("outer iteration {iteration}, {stage}: {source}")]
    Subproblem {
        iteration: usize,
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Unwraps [`Error::Subproblem`] layers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Subproblem { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(
            self.root(),
            Error::InfeasiblePair { .. }
                | Error::InfeasibleCapacity { .. }
                | Error::NonpositiveSlack { .. }
                | Error::InfeasibleUser { .. }
                | Error::InfeasibleAp { .. }
                | Error::NumericallyInfeasible { .. }
        )
    }

    pub fn is_convergence(&self) -> bool {
        matches!(self.root(), Error::Convergence { .. })
    }
}
