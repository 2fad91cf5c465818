//! Occupancy combinatorics of `h` packets thrown uniformly into `L` slots.
//!
//! The central object is the success-count distribution `xi_h(k)`: the
//! probability that exactly `k` of the `h` packets are received in one frame.
//! Under single-packet reception (SPR) a packet is received iff it is alone in
//! its slot; under multipacket reception with capacity `M` (MPR-M) every packet
//! in a slot holding at most `M` packets is received.
//!
//! Two exact routes are provided. For small sizes (`h, L <= 64` by default)
//! the counts are computed with big integers and divided once, so the result is
//! the correctly rounded probability. Above that, normalised slot tables are
//! built bin by bin from nonnegative terms only, which avoids the cancellation
//! in the alternating inclusion-exclusion form.

mod exact;
mod oracle;
mod tables;

use std::fmt;

use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::math::{binomial_pmf, ln_factorial};

pub use oracle::{brute_force_xi, brute_force_xi_capped, DEFAULT_ORACLE_CAP};

use exact::{normalise, spr_counts, ExactMprTables};
use tables::FloatTables;

/// Reception model of a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "lowercase")]
pub enum SuccessLaw {
    /// Single packet reception.
    Spr,
    /// Multipacket reception: up to `capacity` simultaneous packets decode.
    Mpr { capacity: u32 },
}

impl SuccessLaw {
    pub fn mpr(capacity: u32) -> Result<Self> {
        let law = SuccessLaw::Mpr { capacity };
        law.validate()?;
        Ok(law)
    }

    pub fn validate(self) -> Result<()> {
        match self {
            SuccessLaw::Mpr { capacity: 0 } => Err(invalid("MPR capacity must be at least 1")),
            _ => Ok(()),
        }
    }

    /// Effective capacity `M` (1 under SPR).
    pub fn capacity(self) -> usize {
        match self {
            SuccessLaw::Spr => 1,
            SuccessLaw::Mpr { capacity } => capacity as usize,
        }
    }

    /// Packets received from a slot holding `occupancy` packets.
    #[inline]
    pub fn slot_successes(self, occupancy: usize) -> usize {
        if occupancy >= 1 && occupancy <= self.capacity() {
            occupancy
        } else {
            0
        }
    }

    /// Largest possible number of successes in a frame.
    pub fn max_successes(self, h: usize, l: usize) -> usize {
        h.min(l.saturating_mul(self.capacity()))
    }
}

impl fmt::Display for SuccessLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SuccessLaw::Spr => write!(f, "SPR"),
            SuccessLaw::Mpr { capacity } => write!(f, "MPR-{capacity}"),
        }
    }
}

/// Per-slot occupancy law: `Bin(h, 1/L)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OccupancyPmf {
    pub h: usize,
    pub frame_len: usize,
    /// `pmf[x]` for `x = 0..=h`.
    pub pmf: Vec<f64>,
}

impl OccupancyPmf {
    pub fn prob(&self, x: usize) -> f64 {
        self.pmf.get(x).copied().unwrap_or(0.0)
    }

    /// Expected number of slots holding exactly `x` packets.
    pub fn expected_slots(&self, x: usize) -> f64 {
        self.frame_len as f64 * self.prob(x)
    }
}

pub fn occupancy_pmf(h: usize, l: usize) -> Result<OccupancyPmf> {
    if l == 0 {
        return Err(invalid("frame length must be at least 1"));
    }
    let p = 1.0 / l as f64;
    let pmf = (0..=h).map(|x| binomial_pmf(h as u64, x as u64, p)).collect();
    Ok(OccupancyPmf { h, frame_len: l, pmf })
}

/// Which computation produced a [`SuccessDistribution`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum XiMethod {
    ExactRational,
    SlotTables,
    BruteForce,
    Empirical,
}

/// `xi[k]` = probability that exactly `k` packets succeed, for
/// `k = 0..=min(h, L*M)`.
#[derive(Debug, Clone, Serialize)]
pub struct SuccessDistribution {
    pub h: usize,
    pub frame_len: usize,
    pub law: SuccessLaw,
    pub xi: Vec<f64>,
    pub method: XiMethod,
    #[serde(skip)]
    pub exact: Option<Vec<BigRational>>,
}

impl SuccessDistribution {
    pub fn prob(&self, k: usize) -> f64 {
        self.xi.get(k).copied().unwrap_or(0.0)
    }

    pub fn mean(&self) -> f64 {
        self.xi.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
    }

    pub fn total(&self) -> f64 {
        self.xi.iter().sum()
    }

    /// Exact probabilities as `p/q` strings, when the rational route ran.
    pub fn exact_strings(&self) -> Option<Vec<String>> {
        self.exact
            .as_ref()
            .map(|v| v.iter().map(|r| r.to_string()).collect())
    }

    /// Total-variation distance to another distribution over the same counts.
    pub fn tv_distance(&self, other: &SuccessDistribution) -> f64 {
        let n = self.xi.len().max(other.xi.len());
        0.5 * (0..n).map(|k| (self.prob(k) - other.prob(k)).abs()).sum::<f64>()
    }
}

/// Limits for [`SuccessKernel`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XiConfig {
    /// Largest `h` and `L` handled by the big-integer route.
    pub exact_limit: usize,
    /// Largest `(L+1)(h+1)^2` accepted for the floating-point tables.
    pub work_cap: u128,
}

impl Default for XiConfig {
    fn default() -> Self {
        XiConfig {
            exact_limit: 64,
            work_cap: 500_000_000,
        }
    }
}

/// Reusable engine for `xi_h(k)` over a range of `(h, L)`.
///
/// The slot tables depend only on the capacity, so one kernel sized for the
/// largest backlog and frame length serves every smaller pair.
#[derive(Debug, Clone)]
pub struct SuccessKernel {
    law: SuccessLaw,
    config: XiConfig,
    max_h: usize,
    max_l: usize,
    exact_mpr: Option<ExactMprTables>,
    float: Option<FloatTables>,
}

impl SuccessKernel {
    pub fn new(law: SuccessLaw, max_h: usize, max_l: usize) -> Result<Self> {
        Self::with_config(law, max_h, max_l, XiConfig::default())
    }

    pub fn with_config(law: SuccessLaw, max_h: usize, max_l: usize, config: XiConfig) -> Result<Self> {
        law.validate()?;
        if max_l == 0 {
            return Err(invalid("frame length must be at least 1"));
        }
        let exact_h = max_h.min(config.exact_limit);
        let exact_l = max_l.min(config.exact_limit);
        let exact_mpr = match law {
            SuccessLaw::Mpr { .. } if config.exact_limit >= 1 => {
                Some(ExactMprTables::new(law.capacity(), exact_h, exact_l))
            }
            _ => None,
        };
        let float = if max_h > config.exact_limit || max_l > config.exact_limit {
            let work = (max_l as u128 + 1) * (max_h as u128 + 1) * (max_h as u128 + 1);
            if work > config.work_cap {
                return Err(Error::CapExceeded {
                    what: "success-count slot tables (L+1)(h+1)^2",
                    size: work,
                    cap: config.work_cap,
                });
            }
            Some(FloatTables::new(law.capacity(), max_h, max_l))
        } else {
            None
        };
        Ok(SuccessKernel {
            law,
            config,
            max_h,
            max_l,
            exact_mpr,
            float,
        })
    }

    pub fn law(&self) -> SuccessLaw {
        self.law
    }

    pub fn max_h(&self) -> usize {
        self.max_h
    }

    pub fn max_l(&self) -> usize {
        self.max_l
    }

    pub fn xi(&self, h: usize, l: usize) -> Result<SuccessDistribution> {
        if l == 0 {
            return Err(invalid("frame length must be at least 1"));
        }
        if h > self.max_h || l > self.max_l {
            return Err(invalid(format!(
                "(h={h}, L={l}) outside kernel range (h<={}, L<={})",
                self.max_h, self.max_l
            )));
        }
        let exact_ok = h <= self.config.exact_limit && l <= self.config.exact_limit;
        let (xi, method, exact) = if h == 0 {
            (vec![1.0], XiMethod::ExactRational, None)
        } else if exact_ok {
            let counts = match (&self.exact_mpr, self.law) {
                (_, SuccessLaw::Spr) => spr_counts(h, l),
                (Some(t), _) => t.counts(h, l),
                (None, _) => unreachable!("MPR kernel always has exact tables"),
            };
            let (exact, xi) = normalise(counts, h, l);
            (xi, XiMethod::ExactRational, Some(exact))
        } else {
            let tables = self.float.as_ref().expect("slot tables built for this range");
            (tables.xi(h, l), XiMethod::SlotTables, None)
        };
        Ok(SuccessDistribution {
            h,
            frame_len: l,
            law: self.law,
            xi,
            method,
            exact,
        })
    }
}

/// SPR success-count distribution.
pub fn xi_spr(h: usize, l: usize) -> Result<SuccessDistribution> {
    SuccessKernel::new(SuccessLaw::Spr, h, l)?.xi(h, l)
}

/// MPR-`m` success-count distribution.
pub fn xi_mpr(h: usize, l: usize, m: u32) -> Result<SuccessDistribution> {
    SuccessKernel::new(SuccessLaw::mpr(m)?, h, l)?.xi(h, l)
}

pub fn xi(h: usize, l: usize, law: SuccessLaw) -> Result<SuccessDistribution> {
    SuccessKernel::new(law, h, l)?.xi(h, l)
}

/// Expected number of received packets `r_h` in closed form.
///
/// SPR: `h (1 - 1/L)^(h-1)`, the expected number of singleton slots.
/// MPR: `L sum_{x=1..M} x P[Bin(h, 1/L) = x]`.
pub fn expected_successes(h: usize, l: usize, law: SuccessLaw) -> Result<f64> {
    law.validate()?;
    if l == 0 {
        return Err(invalid("frame length must be at least 1"));
    }
    if h == 0 {
        return Ok(0.0);
    }
    let q = 1.0 - 1.0 / l as f64;
    Ok(match law {
        SuccessLaw::Spr => h as f64 * q.powi(h as i32 - 1),
        SuccessLaw::Mpr { .. } => {
            let p = 1.0 / l as f64;
            let top = law.capacity().min(h);
            l as f64
                * (1..=top)
                    .map(|x| x as f64 * binomial_pmf(h as u64, x as u64, p))
                    .sum::<f64>()
        }
    })
}

/// Poisson approximation of the number of slots holding exactly `j` packets.
///
/// Only meaningful while `rho_j` stays bounded as `h, L` grow; no error bound
/// is certified.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoissonOccupancyApprox {
    pub h: usize,
    pub frame_len: usize,
    /// `rho[j] = L e^(-h/L) (h/L)^j / j!` for `j = 0..=j_max`.
    pub rho: Vec<f64>,
}

impl PoissonOccupancyApprox {
    /// Approximate probability of exactly `count` slots with `j` packets.
    pub fn pmf(&self, j: usize, count: u64) -> f64 {
        let rho = self.rho[j];
        if rho == 0.0 {
            return if count == 0 { 1.0 } else { 0.0 };
        }
        (-rho + count as f64 * rho.ln() - ln_factorial(count)).exp()
    }

    /// Approximate `xi_h(0)` under capacity `m`: no slot holds `1..=m` packets.
    pub fn all_fail(&self, m: usize) -> f64 {
        (-self.rho[1..=m].iter().sum::<f64>()).exp()
    }
}

pub fn poisson_occupancy(h: usize, l: usize, j_max: usize) -> Result<PoissonOccupancyApprox> {
    if l == 0 {
        return Err(invalid("frame length must be at least 1"));
    }
    if j_max == 0 {
        return Err(invalid("j_max must be at least 1"));
    }
    let alpha = h as f64 / l as f64;
    let rho = (0..=j_max)
        .map(|j| {
            if alpha == 0.0 {
                return if j == 0 { l as f64 } else { 0.0 };
            }
            ((l as f64).ln() - alpha + j as f64 * alpha.ln() - ln_factorial(j as u64)).exp()
        })
        .collect();
    Ok(PoissonOccupancyApprox { h, frame_len: l, rho })
}

/// Upper bound `(1 - k/(2L))^(k/2)` on the SPR probability of exactly `k`
/// successes.
///
/// The closed form does not dominate `xi_1(1) = 1`, so a single packet gets the
/// trivial bound 1.
pub fn xi_upper_bound(h: usize, l: usize, k: usize) -> Result<f64> {
    if l == 0 {
        return Err(invalid("frame length must be at least 1"));
    }
    if k > h.min(l) {
        return Err(invalid(format!("k={k} exceeds min(h, L)={}", h.min(l))));
    }
    if h == 1 {
        return Ok(1.0);
    }
    Ok(xi_upper_bound_formula(l, k))
}

/// The raw closed form, without the single-packet correction.
pub fn xi_upper_bound_formula(l: usize, k: usize) -> f64 {
    let half = k as f64 / 2.0;
    (1.0 - half / l as f64).powf(half)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-12;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn occupancy_pmf_examples() {
        assert_eq!(occupancy_pmf(0, 5).unwrap().pmf, vec![1.0]);
        let p = occupancy_pmf(2, 2).unwrap();
        assert!(close(p.prob(0), 0.25, TOL) && close(p.prob(1), 0.5, TOL) && close(p.prob(2), 0.25, TOL));
        let p = occupancy_pmf(3, 2).unwrap();
        assert!(close(p.prob(1), 0.375, TOL));
        assert!(close(p.expected_slots(1), 0.75, TOL));
        assert_eq!(p.prob(4), 0.0);
        assert!(occupancy_pmf(3, 0).is_err());
    }

    #[test]
    fn xi_spr_examples() {
        assert_eq!(xi_spr(1, 1).unwrap().xi, vec![0.0, 1.0]);
        assert_eq!(xi_spr(2, 2).unwrap().xi, vec![0.5, 0.0, 0.5]);
        let d = xi_spr(3, 2).unwrap();
        assert_eq!(d.xi, vec![0.25, 0.75, 0.0]);
        assert_eq!(d.method, XiMethod::ExactRational);
        assert_eq!(d.exact_strings().unwrap(), vec!["1/4", "3/4", "0"]);
        assert_eq!(xi_spr(0, 4).unwrap().xi, vec![1.0]);
    }

    #[test]
    fn xi_mpr_examples() {
        assert_eq!(xi_mpr(3, 2, 2).unwrap().xi, vec![0.25, 0.0, 0.0, 0.75]);
        assert_eq!(xi_mpr(2, 2, 2).unwrap().xi, vec![0.0, 0.0, 1.0]);
        assert!(xi_mpr(2, 2, 0).is_err());
    }

    #[test]
    fn spr_zero_cases() {
        // k = L < h is impossible: the remaining packets would need a slot
        for h in 3..8 {
            let d = xi_spr(h, 2).unwrap();
            assert_eq!(d.prob(2), 0.0);
        }
    }

    #[test]
    fn expected_successes_examples() {
        assert!(close(expected_successes(2, 2, SuccessLaw::Spr).unwrap(), 1.0, TOL));
        let law = SuccessLaw::mpr(2).unwrap();
        assert!(close(expected_successes(3, 2, law).unwrap(), 2.25, TOL));
        for law in [SuccessLaw::Spr, law] {
            assert_eq!(expected_successes(0, 7, law).unwrap(), 0.0);
        }
        assert_eq!(expected_successes(1, 1, SuccessLaw::Spr).unwrap(), 1.0);
    }

    #[test]
    fn poisson_occupancy_examples() {
        let a = poisson_occupancy(7, 7, 1).unwrap();
        assert!(close(a.rho[1], 7.0 * (-1.0f64).exp(), TOL));

        let a = poisson_occupancy(100, 100, 1).unwrap();
        assert!(close(a.rho[1], 36.787944117144, 1e-9));
        let exact = expected_successes(100, 100, SuccessLaw::Spr).unwrap();
        assert!(close(exact, 36.972963764973, 1e-9));
        assert!((a.rho[1] - exact).abs() / exact < 0.01);

        let a = poisson_occupancy(20, 4, 3).unwrap();
        let want = 4.0 * (-5.0f64).exp() * 125.0 / 6.0;
        assert!(close(a.rho[3], want, TOL));
        assert!(close(a.rho[3], 0.5615, 1e-4));

        let total: f64 = (0..200).map(|m| a.pmf(1, m)).sum();
        assert!(close(total, 1.0, 1e-12));
        assert!(poisson_occupancy(5, 5, 0).is_err());
    }

    #[test]
    fn upper_bound_examples() {
        assert!(close(xi_upper_bound(2, 2, 2).unwrap(), 0.5, TOL));
        assert!(close(xi_upper_bound(4, 4, 2).unwrap(), 0.75, TOL));
        assert_eq!(xi_upper_bound(5, 3, 0).unwrap(), 1.0);
        assert!(xi_upper_bound(2, 3, 3).is_err());
        // the closed form alone undershoots a lone packet
        assert!(xi_upper_bound_formula(1, 1) < 1.0);
        assert_eq!(xi_upper_bound(1, 1, 1).unwrap(), 1.0);
    }

    #[test]
    fn float_route_matches_exact_route() {
        let forced = XiConfig {
            exact_limit: 0,
            ..XiConfig::default()
        };
        for law in [SuccessLaw::Spr, SuccessLaw::Mpr { capacity: 2 }, SuccessLaw::Mpr { capacity: 4 }] {
            let exact = SuccessKernel::new(law, 40, 40).unwrap();
            let float = SuccessKernel::with_config(law, 40, 40, forced).unwrap();
            for (h, l) in [(1, 1), (5, 3), (12, 12), (40, 17), (23, 40), (40, 40)] {
                let a = exact.xi(h, l).unwrap();
                let b = float.xi(h, l).unwrap();
                assert_eq!(a.method, XiMethod::ExactRational);
                assert_eq!(b.method, XiMethod::SlotTables);
                assert_eq!(a.xi.len(), b.xi.len());
                for (x, y) in a.xi.iter().zip(&b.xi) {
                    assert!(close(*x, *y, 1e-13), "{law} h={h} l={l}: {x} vs {y}");
                }
            }
        }
    }

    #[test]
    fn large_sizes_stay_normalised() {
        let k = SuccessKernel::new(SuccessLaw::Spr, 300, 300).unwrap();
        for (h, l) in [(300, 300), (300, 100), (100, 300), (65, 65)] {
            let d = k.xi(h, l).unwrap();
            assert_eq!(d.method, XiMethod::SlotTables);
            assert!(close(d.total(), 1.0, 1e-12), "h={h} l={l} total={}", d.total());
            let r = expected_successes(h, l, SuccessLaw::Spr).unwrap();
            assert!(close(d.mean(), r, 1e-9), "h={h} l={l}");
        }
    }

    #[test]
    fn kernel_cap_rejects_oversized_tables() {
        let cfg = XiConfig {
            work_cap: 1_000,
            ..XiConfig::default()
        };
        let err = SuccessKernel::with_config(SuccessLaw::Spr, 100, 100, cfg).unwrap_err();
        assert!(matches!(err, Error::CapExceeded { .. }));
        assert!(err.to_string().contains("approximation"));
    }
}
