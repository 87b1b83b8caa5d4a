//! Closed-form degrees-of-freedom expressions, evaluated in exact rational
//! arithmetic.
//!
//! Ratios `M/N` are partitioned into half-open intervals `(1/t, 1/(t-1)]`; a
//! ratio equal to `1/t` belongs to the `(t+1)` interval. Configurations with
//! `M > N` are evaluated at `M = N`.

use num_integer::binomial;
use num_rational::Ratio;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Rational = Ratio<i64>;

fn rat(n: i64) -> Rational {
    Rational::from_integer(n)
}

fn frac(n: i64, d: i64) -> Rational {
    Rational::new(n, d)
}

/// Per-user, sum and per-relay-dimension DoF of one configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DofResult {
    #[serde(with = "crate::wire::ratio_text")]
    pub d_user: Rational,
    #[serde(with = "crate::wire::ratio_text")]
    pub d_sum: Rational,
    #[serde(with = "crate::wire::ratio_text")]
    pub d_relay: Rational,
    /// The value is known to equal the DoF capacity.
    pub capacity_tight: bool,
}

impl DofResult {
    fn new(k: usize, n: u64, d_user: Rational, capacity_tight: bool) -> Self {
        let d_sum = d_user * rat(k as i64);
        Self {
            d_user,
            d_sum,
            d_relay: d_sum / rat(n as i64),
            capacity_tight,
        }
    }

    /// Half-duplex operation halves every DoF figure.
    pub fn half_duplex(self) -> Self {
        let h = frac(1, 2);
        Self {
            d_user: self.d_user * h,
            d_sum: self.d_sum * h,
            d_relay: self.d_relay * h,
            capacity_tight: self.capacity_tight,
        }
    }
}

/// Coefficients of one pattern order `t` for a given `(M, N, K)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternCoefficients {
    pub t: usize,
    pub alpha_t: i64,
    pub beta_t: i64,
    /// Per-user DoF with order-`t` units topped up by order-`(t+1)` units.
    #[serde(with = "crate::wire::ratio_text")]
    pub gamma_t1: Rational,
    /// Per-user DoF with the relay filled by order-`t` units only.
    #[serde(with = "crate::wire::ratio_text")]
    pub gamma_t2: Rational,
    /// Corner ratio where the two coincide.
    #[serde(with = "crate::wire::ratio_text")]
    pub theta_t: Rational,
    /// Improved breakpoint; only defined for `t <= K - 2`.
    #[serde(with = "crate::wire::ratio_text::option")]
    pub tau_t: Option<Rational>,
}

fn check_system(m: u64, n: u64, k: usize) -> Result<()> {
    if k < 3 {
        return Err(Error::InvalidConfig(format!("K must be at least 3, got {k}")));
    }
    if m == 0 || n == 0 {
        return Err(Error::InvalidConfig(format!("antenna counts must be positive, got M={m}, N={n}")));
    }
    Ok(())
}

/// `alpha_t = C(K-1, t-1) (t-1)` and `beta_t = C(K, t) (t-1)^2`.
pub fn alpha_beta(k: usize, t: usize) -> Result<(i64, i64)> {
    if k < 3 || t < 2 || t > k {
        return Err(Error::InvalidPatternOrder { t, k });
    }
    Ok(alpha_beta_ext(k, t))
}

/// Same as [`alpha_beta`] but also accepts `t = K + 1`, the unaligned
/// full-multiplexing unit, for which the coefficients are `(K-1, K(K-1))`.
pub(crate) fn alpha_beta_ext(k: usize, t: usize) -> (i64, i64) {
    let (ki, ti) = (k as i64, t as i64);
    if t == k + 1 {
        return (ki - 1, ki * (ki - 1));
    }
    (
        binomial(ki - 1, ti - 1) * (ti - 1),
        binomial(ki, ti) * (ti - 1) * (ti - 1),
    )
}

/// `min(M, 2N/K)`.
pub fn outer_bound_per_user(m: u64, n: u64, k: usize) -> Result<DofResult> {
    check_system(m, n, k)?;
    let d = rat(m as i64).min(frac(2 * n as i64, k as i64));
    Ok(DofResult::new(k, n, d, false))
}

/// `t` such that `M/N ∈ (1/t, 1/(t-1)]`; 2 when `M >= N`.
pub fn regime_index(m: u64, n: u64) -> usize {
    if m >= n {
        return 2;
    }
    (n / m) as usize + 1
}

/// Corner ratio `theta_t = (t-1)/(t beta_t) + 1/t`.
pub fn theta(k: usize, t: usize) -> Result<Rational> {
    let (_, beta) = alpha_beta(k, t)?;
    let ti = t as i64;
    Ok(frac(ti - 1, ti * beta) + frac(1, ti))
}

/// Improved breakpoint `tau_t = alpha_{t+1}(t-1+beta_t) / (t alpha_t beta_{t+1})`,
/// defined for `2 <= t <= K-2`.
pub fn tau(k: usize, t: usize) -> Result<Rational> {
    if k < 4 || t < 2 || t + 2 > k {
        return Err(Error::InvalidPatternOrder { t, k });
    }
    let (a, b) = alpha_beta_ext(k, t);
    let (a1, b1) = alpha_beta_ext(k, t + 1);
    let ti = t as i64;
    Ok(frac(a1 * (ti - 1 + b), ti * a * b1))
}

/// Ratio bounds `((K-1)/(K(K-2)), 1/(K(K-1)) + 1/2)` of the capacity-achieving
/// ranges `(0, lo]` and `[hi, inf)`.
pub fn capacity_ranges(k: usize) -> (Rational, Rational) {
    let ki = k as i64;
    (frac(ki - 1, ki * (ki - 2)), frac(1, ki * (ki - 1)) + frac(1, 2))
}

fn is_capacity_tight(ratio: Rational, k: usize) -> bool {
    let (lo, hi) = capacity_ranges(k);
    ratio <= lo || ratio >= hi
}

fn gamma_pair(m: i64, n: i64, k: usize, t: usize) -> (Rational, Rational) {
    let (a, b) = alpha_beta_ext(k, t);
    let (a1, b1) = alpha_beta_ext(k, t + 1);
    let ti = t as i64;
    let excess = frac(ti * m - n, ti - 1);
    let gamma1 = excess * a + (rat(n) - excess * b) * frac(a1, b1);
    let gamma2 = frac(a * n, b);
    (gamma1, gamma2)
}

/// All coefficients of pattern order `t`, `2 <= t <= K-1`.
pub fn gamma_theta_tau(m: u64, n: u64, k: usize, t: usize) -> Result<PatternCoefficients> {
    check_system(m, n, k)?;
    if t < 2 || t + 1 > k {
        return Err(Error::InvalidPatternOrder { t, k });
    }
    let (alpha_t, beta_t) = alpha_beta_ext(k, t);
    let (gamma_t1, gamma_t2) = gamma_pair(m as i64, n as i64, k, t);
    Ok(PatternCoefficients {
        t,
        alpha_t,
        beta_t,
        gamma_t1,
        gamma_t2,
        theta_t: theta(k, t)?,
        tau_t: tau(k, t).ok(),
    })
}

/// Per-user DoF of order-`t` alignment with next-order filling, before any
/// relay antenna deactivation.
pub fn achievable_basic(m: u64, n: u64, k: usize) -> Result<DofResult> {
    check_system(m, n, k)?;
    let m_eff = m.min(n);
    let ratio = frac(m_eff as i64, n as i64);
    let tight = is_capacity_tight(ratio, k);
    if ratio <= frac(1, k as i64) {
        return Ok(DofResult::new(k, n, rat(m_eff as i64), tight));
    }
    let t = regime_index(m_eff, n);
    let (g1, g2) = gamma_pair(m_eff as i64, n as i64, k, t);
    Ok(DofResult::new(k, n, g1.min(g2), tight))
}

/// Per-user DoF with relay antenna deactivation towards corner points.
pub fn achievable_improved(m: u64, n: u64, k: usize) -> Result<DofResult> {
    check_system(m, n, k)?;
    let m_eff = m.min(n);
    let ratio = frac(m_eff as i64, n as i64);
    let (lo, hi) = capacity_ranges(k);
    if k == 3 || ratio <= lo || ratio >= hi {
        return achievable_basic(m, n, k);
    }
    let t = improved_order(ratio, k)?;
    let ni = n as i64;
    let d = if ratio <= tau(k, t)? {
        let (a1, b1) = alpha_beta_ext(k, t + 1);
        frac(a1 * ni, b1)
    } else {
        let (a, b) = alpha_beta_ext(k, t);
        let ti = t as i64;
        rat(m_eff as i64) * frac(ti * a, ti - 1 + b)
    };
    Ok(DofResult::new(k, n, d, false))
}

/// `t ∈ [2, K-2]` with `ratio ∈ (theta_{t+1}, theta_t]`.
pub(crate) fn improved_order(ratio: Rational, k: usize) -> Result<usize> {
    for t in 2..=k.saturating_sub(2) {
        if ratio > theta(k, t + 1)? && ratio <= theta(k, t)? {
            return Ok(t);
        }
    }
    Err(Error::InternalPlanError(format!(
        "ratio {ratio} is outside the improvable range for K={k}"
    )))
}

/// Whether `(M, N)` is one of the ranges where the improved scheme moves the
/// relay to a corner point by disabling relay dimensions.
pub fn deactivation_target(m: u64, n: u64, k: usize) -> Result<Option<(usize, Rational)>> {
    check_system(m, n, k)?;
    let m_eff = m.min(n);
    let ratio = frac(m_eff as i64, n as i64);
    let (lo, hi) = capacity_ranges(k);
    if k == 3 || ratio <= lo || ratio >= hi {
        return Ok(None);
    }
    let t = improved_order(ratio, k)?;
    if ratio > tau(k, t)? {
        Ok(Some((t, theta(k, t)?)))
    } else {
        Ok(None)
    }
}

/// Normalized sum DoF `d_sum / N` as `K -> infinity`.
pub fn asymptotic_dof(ratio: Rational, improved: bool) -> Result<Rational> {
    if ratio <= Rational::zero() {
        return Err(Error::InvalidConfig(format!("ratio must be positive, got {ratio}")));
    }
    if ratio > frac(1, 2) {
        return Ok(rat(2));
    }
    let inv = ratio.recip();
    if !improved {
        let t = inv.to_integer() + 1;
        return Ok(frac(t, t - 1));
    }
    // ratio ∈ (1/(t+1), 1/t]
    let t = inv.to_integer();
    let knee = frac((t + 1) * (t - 1), t * t * t);
    if ratio <= knee {
        Ok(frac(t + 1, t))
    } else {
        Ok(ratio * frac(t * t, t - 1))
    }
}

/// `basic(sigma M, sigma N) == sigma * basic(M, N)`.
pub fn scaling_check(m: u64, n: u64, k: usize, sigma: u64) -> Result<bool> {
    let base = achievable_basic(m, n, k)?;
    let scaled = achievable_basic(sigma * m, sigma * n, k)?;
    Ok(scaled.d_user == base.d_user * rat(sigma as i64))
}

/// `d_user / N` for a reduced ratio `p/q`; depends on the ratio only.
pub fn per_relay_dim(ratio: Rational, k: usize, improved: bool) -> Result<Rational> {
    if ratio <= Rational::zero() {
        return Err(Error::InvalidConfig(format!("ratio must be positive, got {ratio}")));
    }
    let (p, q) = (*ratio.numer() as u64, *ratio.denom() as u64);
    let r = if improved {
        achievable_improved(p, q, k)?
    } else {
        achievable_basic(p, q, k)?
    };
    Ok(r.d_user / rat(q as i64))
}

/// Capacity flag for a ratio.
pub fn ratio_capacity_tight(ratio: Rational, k: usize) -> bool {
    is_capacity_tight(ratio.min(Rational::one()), k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_beta_values() {
        assert_eq!(alpha_beta(4, 3).unwrap(), (6, 16));
        assert_eq!(alpha_beta(4, 2).unwrap(), (3, 6));
        assert_eq!(alpha_beta(3, 3).unwrap(), (2, 4));
        assert!(matches!(alpha_beta(4, 5), Err(Error::InvalidPatternOrder { .. })));
        assert!(alpha_beta(4, 1).is_err());
        // K-1 and K closed forms
        for k in 3..=9usize {
            let ki = k as i64;
            assert_eq!(alpha_beta(k, k).unwrap(), (ki - 1, (ki - 1) * (ki - 1)));
            assert_eq!(alpha_beta(k, k - 1).unwrap(), ((ki - 1) * (ki - 2), ki * (ki - 2) * (ki - 2)));
        }
    }

    #[test]
    fn outer_bound_examples() {
        assert_eq!(outer_bound_per_user(2, 3, 3).unwrap().d_user, rat(2));
        assert_eq!(outer_bound_per_user(10, 3, 3).unwrap().d_user, rat(2));
        let r = outer_bound_per_user(1, 100, 4).unwrap();
        assert_eq!(r.d_user, rat(1));
        assert!(!r.capacity_tight);
    }

    #[test]
    fn regime_examples() {
        assert_eq!(regime_index(2, 5), 3);
        assert_eq!(regime_index(1, 3), 4);
        assert_eq!(regime_index(5, 5), 2);
        assert_eq!(regime_index(9, 5), 2);
    }

    #[test]
    fn basic_examples() {
        let r = achievable_basic(2, 3, 3).unwrap();
        assert_eq!(r.d_user, rat(2));
        assert_eq!(r.d_sum, rat(6));
        assert_eq!(r.d_relay, rat(2));
        assert!(r.capacity_tight);
        assert_eq!(achievable_basic(1, 2, 4).unwrap().d_user, frac(3, 4));
        let r = achievable_basic(3, 8, 4).unwrap();
        assert_eq!(r.d_user, rat(3));
        assert_eq!(r.d_user, frac(3 * 8, 8));
    }

    #[test]
    fn gamma_theta_tau_examples() {
        let c = gamma_theta_tau(1, 2, 4, 2).unwrap();
        assert_eq!(c.theta_t, frac(7, 12));
        assert_eq!(c.tau_t, Some(frac(7, 16)));
        let c = gamma_theta_tau(1, 2, 4, 3).unwrap();
        assert_eq!(c.theta_t, frac(3, 8));
        assert_eq!(c.tau_t, None);
        assert!(gamma_theta_tau(1, 2, 4, 4).is_err());

        // hand substitution at (K, t, M, N) = (4, 2, 7, 12):
        // alpha_2 = 3, beta_2 = 6, alpha_3 = 6, beta_3 = 16, tM - N = 2
        // gamma_1 = 3*2/1 + 6*(12 - 6*2/1)/16 = 6, gamma_2 = 3*12/6 = 6
        let c = gamma_theta_tau(7, 12, 4, 2).unwrap();
        assert_eq!(c.gamma_t1, rat(6));
        assert_eq!(c.gamma_t2, rat(6));
    }

    #[test]
    fn improved_examples() {
        assert_eq!(achievable_improved(7, 16, 4).unwrap().d_user, rat(6));
        assert_eq!(achievable_improved(1, 2, 4).unwrap().d_user, frac(6, 7));
        let r = achievable_improved(3, 5, 4).unwrap();
        assert_eq!(r.d_user, frac(5, 2));
        assert!(r.capacity_tight);
        // K = 3 falls back to the basic (capacity) result
        assert_eq!(achievable_improved(3, 5, 3).unwrap(), achievable_basic(3, 5, 3).unwrap());
    }

    #[test]
    fn asymptotic_examples() {
        assert_eq!(asymptotic_dof(frac(2, 5), false).unwrap(), frac(3, 2));
        assert_eq!(asymptotic_dof(frac(1, 3), true).unwrap(), frac(3, 2));
        // 8/27 < 3/10 <= 1/3, so the linear branch applies: (3/10) * 9 / 2
        assert_eq!(asymptotic_dof(frac(3, 10), true).unwrap(), frac(27, 20));
        assert_eq!(asymptotic_dof(frac(3, 4), true).unwrap(), rat(2));
        assert!(asymptotic_dof(rat(0), false).is_err());
    }

    #[test]
    fn scaling_examples() {
        assert!(scaling_check(2, 3, 3, 5).unwrap());
        assert!(scaling_check(1, 2, 4, 7).unwrap());
        assert!(scaling_check(3, 8, 4, 1).unwrap());
    }

    #[test]
    fn half_duplex_halves() {
        let r = achievable_basic(2, 3, 3).unwrap().half_duplex();
        assert_eq!(r.d_user, rat(1));
        assert_eq!(r.d_sum, rat(3));
    }

    #[test]
    fn rejects_small_k() {
        assert!(achievable_basic(1, 2, 2).is_err());
        assert!(outer_bound_per_user(0, 2, 3).is_err());
    }

    #[test]
    fn deactivation_targets() {
        assert_eq!(deactivation_target(1, 2, 4).unwrap(), Some((2, frac(7, 12))));
        assert_eq!(deactivation_target(7, 16, 4).unwrap(), None);
        assert_eq!(deactivation_target(2, 3, 3).unwrap(), None);
    }
}
