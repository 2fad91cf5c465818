//! Self-checks: closed forms against brute-force enumeration, and structural
//! invariants of the chain and the stability functions.

use std::f64::consts::E;

use serde::Serialize;

use crate::arrivals::{frame_arrival_pmf, frame_arrival_pmf_by_convolution, poisson_tail_bound, ArrivalModel};
use crate::chain::{drift_from_row, ChainSpec, FramePolicy};
use crate::error::Result;
use crate::format::fmt_sig;
use crate::math::compensated_sum;
use crate::occupancy::{brute_force_xi, expected_successes, xi, xi_upper_bound, SuccessLaw};
use crate::stability::{alpha_star, mpr_gain_at_unit_alpha, phi, spr_boundary};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed value of the checked quantity.
    pub observed: f64,
    /// Limit it is compared against.
    pub limit: f64,
    pub detail: String,
}

impl Check {
    fn at_most(name: &'static str, observed: f64, limit: f64, detail: String) -> Self {
        Check {
            name,
            passed: observed <= limit,
            observed,
            limit,
            detail,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {:<28} observed={} limit={} {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            fmt_sig(self.observed),
            fmt_sig(self.limit),
            self.detail
        )
    }
}

fn laws(capacities: &[u32]) -> Vec<SuccessLaw> {
    let mut v = vec![SuccessLaw::Spr];
    v.extend(capacities.iter().map(|&m| SuccessLaw::Mpr { capacity: m }));
    v
}

/// Largest entrywise gap between `xi` and enumeration for `h, L <= n`.
pub fn oracle_equivalence(n: usize, capacities: &[u32]) -> Result<Check> {
    let mut worst = 0.0f64;
    let mut at = String::new();
    for law in laws(capacities) {
        for h in 1..=n {
            for l in 1..=n {
                let a = xi(h, l, law)?;
                let b = brute_force_xi(h, l, law)?;
                let k_top = a.xi.len().max(b.xi.len());
                for k in 0..k_top {
                    let d = (a.prob(k) - b.prob(k)).abs();
                    if d > worst {
                        worst = d;
                        at = format!("at {law} h={h} L={l} k={k}");
                    }
                }
            }
        }
    }
    Ok(Check::at_most("oracle-equivalence", worst, 1e-12, at))
}

/// `sum_k k xi_hk = r_h` and, for SPR, `r_h = h (1 - 1/L)^(h-1)`.
pub fn mean_identities(n: usize, capacities: &[u32]) -> Result<Check> {
    let mut worst = 0.0f64;
    let mut at = String::new();
    for law in laws(capacities) {
        for h in 1..=n {
            for l in 1..=n {
                let r = expected_successes(h, l, law)?;
                let mut d = (xi(h, l, law)?.mean() - r).abs();
                if law == SuccessLaw::Spr {
                    let closed = h as f64 * (1.0 - 1.0 / l as f64).powi(h as i32 - 1);
                    d = d.max((closed - r).abs());
                }
                if d > worst {
                    worst = d;
                    at = format!("at {law} h={h} L={l}");
                }
            }
        }
    }
    Ok(Check::at_most("mean-identities", worst, 1e-10, at))
}

/// SPR maximiser at 1 with value `e^-1`.
pub fn spr_maximiser() -> Result<Check> {
    let s = alpha_star(1, 1e-10)?;
    let err = ((s.alpha - 1.0).abs() / 1e-8).max((s.phi - 1.0 / E).abs() / 1e-10);
    Ok(Check::at_most(
        "spr-maximiser",
        err,
        1.0,
        format!("alpha*={} phi*={} (scaled error)", fmt_sig(s.alpha), fmt_sig(s.phi)),
    ))
}

/// `alpha*(M)` inside `[(M-1)/e, M]`; observed value is the largest
/// distance outside the interval.
pub fn alpha_star_brackets(ms: std::ops::RangeInclusive<u32>) -> Result<Check> {
    let mut worst = 0.0f64;
    let mut detail = String::new();
    for m in ms {
        let s = alpha_star(m, 1e-10)?;
        let lo = (m as f64 - 1.0) / E;
        let out = (lo - s.alpha).max(s.alpha - m as f64).max(0.0);
        if out > worst || detail.is_empty() {
            worst = worst.max(out);
            detail = format!("M={m} alpha*={}", fmt_sig(s.alpha));
        }
        if !s.sign_change {
            worst = worst.max(f64::INFINITY);
            detail = format!("M={m}: derivative has no sign change on the bracket");
        }
    }
    Ok(Check::at_most("alpha-star-bracket", worst, 0.0, detail))
}

/// `Phi(1, M) / e^-1 in [2.5, 3 - 1/M]`; observed is the largest excursion.
pub fn gain_band(ms: std::ops::RangeInclusive<u32>) -> Result<Check> {
    let mut worst = 0.0f64;
    let mut detail = String::new();
    for m in ms {
        let g = phi(1.0, m)? / (-1.0f64).exp();
        let direct = mpr_gain_at_unit_alpha(m)?;
        let out = (2.5 - g).max(g - (3.0 - 1.0 / m as f64)).max(0.0).max((g - direct).abs() - 1e-12);
        if out > worst {
            worst = out;
            detail = format!("M={m} gain={}", fmt_sig(g));
        }
    }
    // at M=3 the ratio is 2.5 up to rounding
    Ok(Check::at_most("mpr-gain-band", worst, 1e-12, detail))
}

/// Counts states in `hs` where the SPR drift under `Proportional(1)` does not
/// have the sign predicted by `Lambda` against `e^-1`.
pub fn drift_sign_window(lambda: f64, hs: std::ops::RangeInclusive<usize>) -> Result<Check> {
    let spec = ChainSpec::new(
        FramePolicy::Proportional { alpha: 1.0 },
        ArrivalModel::poisson(lambda)?,
        SuccessLaw::Spr,
    )?;
    let want_negative = lambda < spr_boundary(1.0)?;
    let mut bad = 0usize;
    let mut first = None;
    for h in hs.clone() {
        let d = spec.drift(h)?;
        if (want_negative && d >= 0.0) || (!want_negative && d <= 0.0) {
            bad += 1;
            first.get_or_insert(h);
        }
    }
    Ok(Check::at_most(
        "drift-sign-window",
        bad as f64,
        0.0,
        format!(
            "Lambda={} expects {} on {}..={}{}",
            lambda,
            if want_negative { "D<0" } else { "D>0" },
            hs.start(),
            hs.end(),
            first.map_or(String::new(), |h| format!(", first miss h={h}"))
        ),
    ))
}

/// Row normalisation and row-vs-closed-form drift on small configurations.
pub fn row_consistency() -> Result<Check> {
    let mut worst = 0.0f64;
    let mut at = String::new();
    for law in laws(&[2, 3]) {
        for l in 1..=6 {
            for lambda in [0.0, 0.2, 0.5] {
                let spec = ChainSpec::new(FramePolicy::Fixed { frame_len: l }, ArrivalModel::poisson(lambda)?, law)?;
                for row in spec.rows(0..=6, None)? {
                    let norm = (row.total() + row.tail_mass - 1.0).abs() * 1e2;
                    let drift = (drift_from_row(&row)? - spec.drift(row.h)?).abs();
                    let d = norm.max(drift);
                    if d > worst {
                        worst = d;
                        at = format!("at {law} L={l} Lambda={lambda} h={}", row.h);
                    }
                }
            }
        }
    }
    Ok(Check::at_most("row-consistency", worst, 1e-8, at))
}

/// Drift bounds on profiles for a few policies.
pub fn drift_bounds() -> Result<Check> {
    let mut count = 0usize;
    let mut detail = String::new();
    for law in laws(&[2, 4]) {
        for policy in [
            FramePolicy::Proportional { alpha: 1.0 },
            FramePolicy::Proportional { alpha: 2.5 },
            FramePolicy::Fixed { frame_len: 8 },
        ] {
            let spec = ChainSpec::new(policy, ArrivalModel::poisson(0.4)?, law)?;
            let v = spec.drift_profile(0..=80, true)?.bound_violations();
            if let Some(first) = v.first() {
                detail = format!("{law} {policy:?}: {} at h={}", first.which, first.h);
            }
            count += v.len();
        }
    }
    Ok(Check::at_most("drift-bounds", count as f64, 0.0, detail))
}

/// Closed-form Poisson frame law against explicit convolution.
pub fn arrival_convolution() -> Result<Check> {
    let mut worst = 0.0f64;
    for rate in [0.05, 0.3, 1.2] {
        let m = ArrivalModel::poisson(rate)?;
        for l in [1, 5, 17, 60] {
            let a = frame_arrival_pmf(&m, l, None)?;
            let b = frame_arrival_pmf_by_convolution(&m, l, a.n_max())?;
            for n in 0..=a.n_max() {
                worst = worst.max((a.prob(n) - b.prob(n)).abs());
            }
        }
    }
    Ok(Check::at_most("arrival-convolution", worst, 1e-10, String::new()))
}

/// Chernoff bound dominates the exact Poisson cdf on `mu = 1..50`,
/// `x = 0.1 mu .. 0.9 mu`; observed is the largest `cdf - bound`.
pub fn tail_bound_dominance() -> Result<Check> {
    let mut worst = f64::NEG_INFINITY;
    for mu in 1..=50 {
        let mu = mu as f64;
        for i in 1..=9 {
            let x = 0.1 * i as f64 * mu;
            let cdf = poisson_cdf(mu, x.floor() as usize);
            worst = worst.max(cdf - poisson_tail_bound(mu, x)?);
        }
    }
    Ok(Check::at_most("poisson-tail-bound", worst, 0.0, "max(cdf - bound)".into()))
}

fn poisson_cdf(mu: f64, x: usize) -> f64 {
    let mut term = (-mu).exp();
    let mut terms = vec![term];
    for n in 1..=x {
        term *= mu / n as f64;
        terms.push(term);
    }
    compensated_sum(terms)
}

/// `xi_upper_bound >= xi` on the oracle range.
pub fn xi_bound_validity(n: usize) -> Result<Check> {
    let mut worst = f64::NEG_INFINITY;
    let mut at = String::new();
    for h in 1..=n {
        for l in 1..=n {
            let d = xi(h, l, SuccessLaw::Spr)?;
            for k in 0..=h.min(l) {
                let gap = d.prob(k) - xi_upper_bound(h, l, k)?;
                if gap > worst {
                    worst = gap;
                    at = format!("h={h} L={l} k={k}");
                }
            }
        }
    }
    Ok(Check::at_most("xi-upper-bound", worst, 1e-15, at))
}

/// Every check, in a fixed order.
pub fn run_all() -> Result<Vec<Check>> {
    Ok(vec![
        oracle_equivalence(6, &[1, 2, 3])?,
        mean_identities(6, &[1, 2, 3])?,
        spr_maximiser()?,
        alpha_star_brackets(2..=10)?,
        gain_band(3..=12)?,
        drift_sign_window(0.25, 20..=2000)?,
        drift_sign_window(0.45, 20..=2000)?,
        row_consistency()?,
        drift_bounds()?,
        arrival_convolution()?,
        tail_bound_dominance()?,
        xi_bound_validity(6)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for c in run_all().unwrap() {
            assert!(c.passed, "{}", c.line());
        }
    }
}
