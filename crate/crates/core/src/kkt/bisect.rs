use crate::error::{Error, Result};

/// Cap on iterations of a single bisection; enough for any bracket that
/// fits in an f64 at relative tolerance 1e−15.
pub const MAX_BISECT_ITERS: usize = 2_200;

/// A scalar root search `evaluate(v) = target` on a monotone function.
pub struct BisectionProblem<F> {
    pub evaluate: F,
    pub lower: f64,
    pub upper: f64,
    pub target: f64,
    /// Stop once the bracket is no wider than `tol · max(1, |mid|)`.
    pub tol: f64,
    pub max_iters: usize,
}

impl<F: FnMut(f64) -> f64> BisectionProblem<F> {
    pub fn new(evaluate: F, lower: f64, upper: f64, target: f64, tol: f64) -> Self {
        Self {
            evaluate,
            lower,
            upper,
            target,
            tol,
            max_iters: MAX_BISECT_ITERS,
        }
    }
}

/// Bisects a bracketed monotone function (increasing or decreasing).
pub fn bisect<F: FnMut(f64) -> f64>(mut problem: BisectionProblem<F>) -> Result<f64> {
    let (mut lo, mut hi) = (problem.lower, problem.upper);
    let f_lo = (problem.evaluate)(lo) - problem.target;
    if f_lo == 0.0 {
        return Ok(lo);
    }
    let f_hi = (problem.evaluate)(hi) - problem.target;
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.is_nan() || f_hi.is_nan() || f_lo.signum() == f_hi.signum() {
        return Err(Error::Bracket { lower: lo, upper: hi });
    }
    let lo_sign = f_lo.signum();
    for _ in 0..problem.max_iters {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() <= problem.tol * mid.abs().max(1.0) || mid == lo || mid == hi {
            return Ok(mid);
        }
        let f_mid = (problem.evaluate)(mid) - problem.target;
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.is_nan() {
            return Err(Error::Domain(format!("bisection evaluated NaN at {mid}")));
        }
        if f_mid.signum() == lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Convergence {
        what: "bisection".into(),
        iterations: problem.max_iters,
        trace: vec![lo, hi],
    })
}

/// Solves `f(v) = target` for `v > 0` where `f` is monotone on the positive
/// half-line. The bracket is grown geometrically (factor 2) from `guess`,
/// then bisected over `ln v` so the tolerance is relative to `v`.
pub fn solve_positive(
    mut f: impl FnMut(f64) -> f64,
    target: f64,
    guess: f64,
    increasing: bool,
    tol: f64,
) -> Result<f64> {
    let guess = if guess.is_finite() && guess > 0.0 { guess } else { 1.0 };
    // below(v): f(v) lies on the same side of target as values left of the root
    let mut below = |v: f64| {
        let fv = f(v);
        if increasing {
            fv < target
        } else {
            fv > target
        }
    };
    let (mut lo, mut hi) = (guess, guess);
    if below(guess) {
        loop {
            hi *= 2.0;
            if !hi.is_finite() {
                return Err(Error::Bracket { lower: lo, upper: hi });
            }
            if !below(hi) {
                break;
            }
            lo = hi;
        }
    } else {
        loop {
            lo *= 0.5;
            if lo == 0.0 {
                return Err(Error::Bracket { lower: lo, upper: hi });
            }
            if below(lo) {
                break;
            }
            hi = lo;
        }
    }
    if hi == lo {
        return Ok(lo);
    }
    let (ln_lo, ln_hi) = (lo.ln(), hi.ln());
    // width in ln v is the relative width in v
    let log_tol = tol / ln_lo.abs().max(ln_hi.abs()).max(1.0);
    let log_root = bisect(BisectionProblem::new(
        |s: f64| if below(s.exp()) { -1.0 } else { 1.0 },
        ln_lo,
        ln_hi,
        0.0,
        log_tol,
    ))?;
    Ok(log_root.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn linear_root() {
        let r = bisect(BisectionProblem::new(|v| v - 1.0, 0.0, 2.0, 0.0, 1e-12)).unwrap();
        assert_relative_eq!(r, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn dyadic_root() {
        let r = bisect(BisectionProblem::new(|v: f64| v.exp2(), 0.0, 4.0, 8.0, 1e-12)).unwrap();
        assert_relative_eq!(r, 3.0, epsilon = 1e-11);
    }

    #[test]
    fn decreasing_function() {
        let r = bisect(BisectionProblem::new(|v| 5.0 - v, 0.0, 10.0, 1.0, 1e-12)).unwrap();
        assert_relative_eq!(r, 4.0, epsilon = 1e-11);
    }

    #[test]
    fn invalid_bracket() {
        let e = bisect(BisectionProblem::new(|v| v + 1.0, 0.0, 2.0, 0.0, 1e-12));
        assert!(matches!(e, Err(Error::Bracket { .. })));
    }

    #[test]
    fn iteration_cap() {
        let mut p = BisectionProblem::new(|v| v - 1.0, 0.0, 3.0, 0.0, 1e-14);
        p.max_iters = 5;
        assert!(matches!(bisect(p), Err(Error::Convergence { .. })));
    }

    #[test]
    fn positive_search_far_from_guess() {
        let r = solve_positive(|v| v, 3e-20, 1.0, true, 1e-12).unwrap();
        assert_relative_eq!(r, 3e-20, max_relative = 1e-10);
        let r = solve_positive(|v| 1.0 / v, 1e-9, 1.0, false, 1e-12).unwrap();
        assert_relative_eq!(r, 1e9, max_relative = 1e-10);
    }
}
