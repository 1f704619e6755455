//! Closed-form link formulas: Shannon rate over an orthogonal sub-band,
//! the minimal deadline-meeting power, the resulting pair energy
//! `E = (N0/h)·x·t·(2^{L/(x t)} − 1)` and its first and second derivatives.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Allocation, PairPoint, Scenario};

pub const LN2: f64 = std::f64::consts::LN_2;

/// Largest exponent `u` (in `2^u`) accepted before a point is declared
/// numerically infeasible.
pub const MAX_EXPONENT: f64 = 700.0 / LN2;

/// `2^u − 1`, exact for small `u`.
pub(crate) fn exp2_m1(u: f64) -> Result<f64> {
    if u > MAX_EXPONENT {
        return Err(Error::NumericallyInfeasible { exponent: u });
    }
    Ok((u * LN2).exp_m1())
}

/// `1 + 2^u (u ln2 − 1)`: the bracket of the bandwidth and slack partials
/// with its sign flipped. Zero at `u = 0`, strictly increasing for `u > 0`.
pub(crate) fn phi(u: f64) -> f64 {
    let v = u * LN2;
    if v < 1e-2 {
        // Σ_{k≥2} v^k (k−1)/k!
        let mut term = v * v / 2.0;
        let mut sum = term;
        for k in 3..10 {
            term *= v / k as f64;
            sum += term * (k - 1) as f64;
        }
        sum
    } else {
        v.exp_m1() * (v - 1.0) + v
    }
}

/// Energy of a pair given raw coordinates; may return `inf` on overflow.
/// Used inside bracket searches where `inf` compares correctly.
pub(crate) fn raw_energy(noise_over_gain: f64, bandwidth: f64, slack: f64, data: f64) -> f64 {
    if data == 0.0 {
        return 0.0;
    }
    let u = data / (bandwidth * slack);
    noise_over_gain * bandwidth * slack * (u * LN2).exp_m1()
}

fn interior(p: &PairPoint) -> Result<(f64, f64, f64)> {
    let t = p.slack_s();
    let (l, x) = (p.data_bits, p.bandwidth_hz);
    if !(l > 0.0 && x > 0.0 && t > 0.0 && t < p.deadline_s) {
        return Err(Error::Domain(format!(
            "point is not interior: L = {l}, x = {x}, t = {t}, D = {}",
            p.deadline_s
        )));
    }
    Ok((l, x, t))
}

fn checked_slack(p: &PairPoint) -> Result<f64> {
    if !(p.bandwidth_hz > 0.0) {
        return Err(Error::Domain(format!("bandwidth {} must be positive", p.bandwidth_hz)));
    }
    let t = p.slack_s();
    if !(t > 0.0) {
        return Err(Error::NonpositiveSlack { slack_s: t });
    }
    Ok(t)
}

/// Achievable rate in bits/s at transmit power `power_w`.
pub fn rate(power_w: f64, p: &PairPoint) -> Result<f64> {
    let x = p.bandwidth_hz;
    if !(x > 0.0) {
        return Err(Error::Domain(format!("bandwidth {x} must be positive")));
    }
    if !(power_w >= 0.0) {
        return Err(Error::Domain(format!("power {power_w} must be nonnegative")));
    }
    Ok(x * (power_w / (x * p.noise_over_gain)).ln_1p() / LN2)
}

/// The smallest power whose rate delivers `L` bits within the slack `t`.
pub fn min_power(p: &PairPoint) -> Result<f64> {
    if p.data_bits == 0.0 {
        return Ok(0.0);
    }
    let t = checked_slack(p)?;
    let x = p.bandwidth_hz;
    let min_rate = p.data_bits / t;
    Ok(p.noise_over_gain * x * exp2_m1(min_rate / x)?)
}

/// Uplink energy of the pair at minimal power. Transmission time then
/// equals the slack exactly.
pub fn pair_energy(p: &PairPoint) -> Result<f64> {
    if p.data_bits == 0.0 {
        return Ok(0.0);
    }
    let t = checked_slack(p)?;
    let x = p.bandwidth_hz;
    let u = p.data_bits / (x * t);
    Ok(p.noise_over_gain * x * t * exp2_m1(u)?)
}

/// Sum of pair energies over every pair carrying data.
pub fn total_energy(scenario: &Scenario, alloc: &Allocation) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..scenario.num_users {
        for j in 0..scenario.num_aps {
            if alloc.data[(i, j)] == 0.0 {
                continue;
            }
            let p = scenario.pair_point(alloc, i, j);
            total += pair_energy(&p).map_err(|e| Error::InfeasiblePair {
                user: i,
                ap: j,
                reason: e.to_string(),
            })?;
        }
    }
    Ok(total)
}

/// Partial derivatives of [`pair_energy`]: in `L` at fixed compute, in `x`
/// at fixed slack, in `t` at fixed data and bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyGradient {
    pub d_dl: f64,
    pub d_dx: f64,
    pub d_dt: f64,
}

/// Marginal energy per bit at fixed compute `q`; `+inf` on overflow.
pub(crate) fn marginal_data_cost(a: f64, x: f64, q: f64, d: f64, eta: f64, l: f64) -> f64 {
    let t = d - eta * l / q;
    let v = l / (x * t) * LN2;
    let c = x * eta / q;
    // the coefficient of e^v is positive whenever e^v can overflow
    a * ((d * LN2 / t - c) * v.exp() + c)
}

pub fn partials(p: &PairPoint) -> Result<EnergyGradient> {
    let (l, x, t) = interior(p)?;
    let a = p.noise_over_gain;
    let u = l / (x * t);
    if u > MAX_EXPONENT {
        return Err(Error::NumericallyInfeasible { exponent: u });
    }
    let q = p.compute_cps();
    let ph = phi(u);
    Ok(EnergyGradient {
        d_dl: marginal_data_cost(a, x, q, p.deadline_s, p.cycles_per_bit, l),
        d_dx: -a * t * ph,
        d_dt: -a * x * ph,
    })
}

/// Variable pair of a 2×2 Hessian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HessianPair {
    /// Data and bandwidth, compute held fixed.
    LX,
    /// Data and compute, bandwidth held fixed.
    LQ,
    /// Bandwidth and slack, data held fixed.
    XT,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HessianDiag {
    pub pair: HessianPair,
    pub matrix: [[f64; 2]; 2],
    pub determinant: f64,
}

impl HessianDiag {
    fn new(pair: HessianPair, h11: f64, h12: f64, h22: f64) -> Self {
        Self {
            pair,
            matrix: [[h11, h12], [h12, h22]],
            determinant: h11 * h22 - h12 * h12,
        }
    }

    pub fn is_positive_definite(&self) -> bool {
        self.matrix[0][0] > 0.0 && self.determinant > 0.0
    }
}

/// Second derivatives of `E(L, x, t)` with all three treated as free.
struct SecondOrder {
    ll: f64,
    lx: f64,
    lt: f64,
    xx: f64,
    tt: f64,
    xt: f64,
    t: f64,
}

fn second_order(a: f64, l: f64, x: f64, t: f64) -> SecondOrder {
    let u = l / (x * t);
    let s = (u * LN2).exp();
    let k = a * LN2 * LN2 * s;
    let ph = phi(u);
    SecondOrder {
        ll: k / (x * t),
        lx: -k * u / x,
        lt: -k * u / t,
        xx: k * t * u * u / x,
        tt: k * x * u * u / t,
        xt: a * (LN2 * LN2 * u * u * s - ph),
        t: -a * x * ph,
    }
}

/// Analytic 2×2 Hessian of [`pair_energy`] over the chosen variable pair.
pub fn hessian_diag(p: &PairPoint, pair: HessianPair) -> Result<HessianDiag> {
    let (l, x, t) = interior(p)?;
    let u = l / (x * t);
    if u > MAX_EXPONENT {
        return Err(Error::NumericallyInfeasible { exponent: u });
    }
    let e = second_order(p.noise_over_gain, l, x, t);
    let eta = p.cycles_per_bit;
    let q = p.compute_cps();
    // t(L, q) = D − ηL/q
    let t_l = -eta / q;
    let t_q = eta * l / (q * q);
    let t_lq = eta / (q * q);
    let t_qq = -2.0 * eta * l / (q * q * q);
    Ok(match pair {
        HessianPair::LX => HessianDiag::new(
            pair,
            e.ll + 2.0 * t_l * e.lt + t_l * t_l * e.tt,
            e.lx + t_l * e.xt,
            e.xx,
        ),
        HessianPair::LQ => HessianDiag::new(
            pair,
            e.ll + 2.0 * t_l * e.lt + t_l * t_l * e.tt,
            t_q * e.lt + t_l * t_q * e.tt + t_lq * e.t,
            t_q * t_q * e.tt + t_qq * e.t,
        ),
        HessianPair::XT => HessianDiag::new(pair, e.xx, e.xt, e.tt),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn fd_step(v: f64) -> f64 {
        (1e-6 * v.abs()).max(1e-9)
    }

    // Independent scalar formula, kept separate from the library path.
    fn energy_lq(a: f64, l: f64, x: f64, q: f64, d: f64, eta: f64) -> f64 {
        let t = d - eta * l / q;
        a * x * t * (LN2 * l / (x * t)).exp_m1()
    }

    #[test]
    fn rate_examples() {
        let p = PairPoint::from_slack(1.0, 1.0, 1.0, 2.0, 1.0, 1.0);
        assert_relative_eq!(rate(1.0, &p).unwrap(), 1.0);
        assert_eq!(rate(0.0, &p).unwrap(), 0.0);
        assert_relative_eq!(rate(3.0, &p).unwrap(), 2.0, epsilon = 1e-15);
        let bad = PairPoint::from_slack(1.0, 0.0, 1.0, 2.0, 1.0, 1.0);
        assert!(matches!(rate(1.0, &bad), Err(Error::Domain(_))));
    }

    #[test]
    fn min_power_examples() {
        let zero = PairPoint::from_slack(0.0, 1.0, 2.0, 2.0, 1.0, 1.0);
        assert_eq!(min_power(&zero).unwrap(), 0.0);
        let p = PairPoint::from_slack(2.0, 1.0, 1.0, 2.0, 1.0, 1.0);
        assert_relative_eq!(min_power(&p).unwrap(), 3.0, epsilon = 1e-14);
        let infeasible = PairPoint::from_compute(2.0, 1.0, 1.0, 2.0, 1.0, 1.0);
        assert!(matches!(
            min_power(&infeasible),
            Err(Error::NonpositiveSlack { .. })
        ));
    }

    #[test]
    fn min_power_fills_the_slack_at_default_magnitudes() {
        let p = PairPoint::from_compute(3.75e5, 3.125e5, 3.125e9, 0.5, 1e3, 1.2e-10);
        let power = min_power(&p).unwrap();
        let tx_time = p.data_bits / rate(power, &p).unwrap();
        let total = tx_time + p.compute_time_s();
        assert_relative_eq!(total, p.deadline_s, max_relative = 1e-12);
    }

    #[test]
    fn pair_energy_examples() {
        let zero = PairPoint::from_compute(0.0, 0.1, 1.0, 0.1, 0.5, 1.0);
        assert_eq!(pair_energy(&zero).unwrap(), 0.0);
        // t = 0.05, exponent 20
        let p = PairPoint::from_compute(0.1, 0.1, 1.0, 0.1, 0.5, 1.0);
        assert_relative_eq!(pair_energy(&p).unwrap(), 5242.875, max_relative = 1e-12);
        let wide = PairPoint { bandwidth_hz: 0.2, ..p };
        assert!(pair_energy(&wide).unwrap() <= pair_energy(&p).unwrap());
    }

    #[test]
    fn overflowing_exponent_is_rejected() {
        let p = PairPoint::from_slack(1e4, 1.0, 1.0, 2.0, 1.0, 1.0);
        assert!(matches!(
            pair_energy(&p),
            Err(Error::NumericallyInfeasible { .. })
        ));
    }

    #[test]
    fn partials_limits() {
        // L → 0⁺: d/dL → N0/h · ln2
        let p = PairPoint::from_compute(1e-9, 1.0, 1.0, 1.0, 1.0, 1.0);
        let g = partials(&p).unwrap();
        assert_relative_eq!(g.d_dl, LN2, max_relative = 1e-6);
        // huge bandwidth: d/dx → 0⁻
        let p = PairPoint::from_slack(1.0, 1e8, 0.5, 1.0, 1.0, 1.0);
        let g = partials(&p).unwrap();
        assert!(g.d_dx < 0.0 && g.d_dx > -1e-15);
        let boundary = PairPoint::from_slack(0.0, 1.0, 1.0, 1.0, 1.0, 1.0);
        assert!(partials(&boundary).is_err());
    }

    #[test]
    fn phi_series_matches_direct_form() {
        for u in [1e-6, 1e-4, 1e-3, 0.014, 0.5, 3.0] {
            let v = u * LN2;
            let direct = 1.0 + v.exp() * (v - 1.0);
            let rel = ((phi(u) - direct) / phi(u)).abs();
            assert!(rel < 1e-6 || u < 1e-3, "u = {u}: {} vs {direct}", phi(u));
        }
        assert_relative_eq!(phi(1e-6), (1e-6 * LN2).powi(2) / 2.0, max_relative = 1e-5);
    }

    #[test]
    fn counterexample_point_l_x() {
        let p = PairPoint::from_compute(0.1, 0.1, 1.0, 0.1, 0.5, 1.0);
        let h = hessian_diag(&p, HessianPair::LX).unwrap();
        let d = h.matrix[0][0] * h.matrix[1][1] - h.matrix[0][1] * h.matrix[1][0];
        assert_eq!(d, h.determinant);
        assert_relative_eq!(h.matrix[0][1], h.matrix[1][0]);
    }

    fn hessian_fd(f: impl Fn(f64, f64) -> f64, v1: f64, v2: f64) -> [[f64; 2]; 2] {
        let (h1, h2) = (fd_step(v1) * 100.0, fd_step(v2) * 100.0);
        let d11 = (f(v1 + h1, v2) - 2.0 * f(v1, v2) + f(v1 - h1, v2)) / (h1 * h1);
        let d22 = (f(v1, v2 + h2) - 2.0 * f(v1, v2) + f(v1, v2 - h2)) / (h2 * h2);
        let d12 = (f(v1 + h1, v2 + h2) - f(v1 + h1, v2 - h2) - f(v1 - h1, v2 + h2)
            + f(v1 - h1, v2 - h2))
            / (4.0 * h1 * h2);
        [[d11, d12], [d12, d22]]
    }

    fn assert_hessian_close(analytic: &HessianDiag, fd: [[f64; 2]; 2]) {
        let scale = analytic.matrix[0][0].abs().max(analytic.matrix[1][1].abs());
        for (r, fd_row) in fd.iter().enumerate() {
            for (c, &b) in fd_row.iter().enumerate() {
                let a = analytic.matrix[r][c];
                let err = (a - b).abs() / a.abs().max(1e-3 * scale);
                assert!(err < 1e-4, "{:?}[{r}][{c}]: analytic {a}, fd {b}", analytic.pair);
            }
        }
    }

    proptest! {
        #[test]
        fn partials_match_finite_differences(
            a in 1e-11f64..1e-9, l in 1e4f64..1.5e6, x in 1e5f64..5e6,
            frac in 0.05f64..0.9, d in 0.2f64..1.0,
        ) {
            let eta = 1e3;
            // choose q so that t = frac·D
            let q = eta * l / (d * (1.0 - frac));
            let t = frac * d;
            prop_assume!(l / (x * t) < 30.0);
            let p = PairPoint::from_compute(l, x, q, d, eta, a);
            let g = partials(&p).unwrap();
            let hl = fd_step(l);
            let fd_l = (energy_lq(a, l + hl, x, q, d, eta) - energy_lq(a, l - hl, x, q, d, eta)) / (2.0 * hl);
            let e_xt = |x: f64, t: f64| a * x * t * (LN2 * l / (x * t)).exp_m1();
            let hx = fd_step(x);
            let fd_x = (e_xt(x + hx, t) - e_xt(x - hx, t)) / (2.0 * hx);
            let ht = fd_step(t);
            let fd_t = (e_xt(x, t + ht) - e_xt(x, t - ht)) / (2.0 * ht);
            prop_assert!(((g.d_dl - fd_l) / fd_l).abs() < 1e-5, "dL {} vs {}", g.d_dl, fd_l);
            prop_assert!(((g.d_dx - fd_x) / fd_x).abs() < 1e-5, "dx {} vs {}", g.d_dx, fd_x);
            prop_assert!(((g.d_dt - fd_t) / fd_t).abs() < 1e-5, "dt {} vs {}", g.d_dt, fd_t);
            prop_assert!(g.d_dl > 0.0 && g.d_dx <= 0.0 && g.d_dt <= 0.0);
        }

        #[test]
        fn hessians_match_finite_differences(
            l in 0.2f64..3.0, x in 0.3f64..3.0, frac in 0.2f64..0.9,
        ) {
            let (a, d, eta) = (1.0, 1.0, 1.0);
            let q = eta * l / (d * (1.0 - frac));
            let t = frac * d;
            let p = PairPoint::from_compute(l, x, q, d, eta, a);
            let lx = hessian_diag(&p, HessianPair::LX).unwrap();
            assert_hessian_close(&lx, hessian_fd(|l, x| energy_lq(a, l, x, q, d, eta), l, x));
            let lq = hessian_diag(&p, HessianPair::LQ).unwrap();
            assert_hessian_close(&lq, hessian_fd(|l, q| energy_lq(a, l, x, q, d, eta), l, q));
            let xt = hessian_diag(&p, HessianPair::XT).unwrap();
            let e_xt = |x: f64, t: f64| a * x * t * (LN2 * l / (x * t)).exp_m1();
            assert_hessian_close(&xt, hessian_fd(e_xt, x, t));
            prop_assert!(xt.is_positive_definite());
            prop_assert!(lx.matrix[0][0] > 0.0 && lx.matrix[1][1] > 0.0 && xt.matrix[1][1] > 0.0);
        }

        #[test]
        fn minimal_power_energy_identity(
            l in 1e3f64..1.5e6, x in 1e5f64..5e6, frac in 0.05f64..0.99, a in 1e-11f64..1e-9,
        ) {
            let d = 0.5;
            let t = frac * d;
            prop_assume!(l / (x * t) < 40.0);
            let p = PairPoint::from_slack(l, x, t, d, 1e3, a);
            let power = min_power(&p).unwrap();
            let tx = l / rate(power, &p).unwrap();
            prop_assert!(((tx - t) / t).abs() < 1e-9);
            let e = pair_energy(&p).unwrap();
            prop_assert!(((e - power * tx) / e).abs() < 1e-9);
        }

        #[test]
        fn energy_monotone_in_each_coordinate(
            l in 1e3f64..1e6, x in 1e5f64..5e6, frac in 0.1f64..0.8,
        ) {
            let (d, a) = (0.5, 1e-10);
            let t = frac * d;
            prop_assume!(l / (x * t) < 30.0);
            let e = |l: f64, x: f64, t: f64| pair_energy(&PairPoint::from_slack(l, x, t, d, 1e3, a)).unwrap();
            let base = e(l, x, t);
            prop_assert!(e(l * 1.01, x, t) > base);
            prop_assert!(e(l, x * 1.01, t) < base);
            prop_assert!(e(l, x, t * 1.01) < base);
        }
    }
}
