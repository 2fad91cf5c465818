//! Stability boundaries, regime classification and numeric transience
//! diagnostics.
//!
//! With `alpha = h / L` held fixed, the backlog chain is stable when the
//! per-slot arrival rate stays below `alpha e^-alpha` (SPR) or
//! `Phi(alpha) = sum_{x=1..M} e^-alpha alpha^x / (x-1)!` (MPR-M), and unstable
//! when `L` grows slower or faster than `h`.
//!
//! The asymptotic relations use a nonstandard convention: `L = o(h)` means
//! `L/h -> 0` and `L = O(h)` means `L/h -> infinity`.

use std::io::Write;
use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{FramePolicy, TruncatedChain, ROW_TAIL_LIMIT};
use crate::error::{invalid, Error, Result};
use crate::format::{fmt_sig, serde_sig};
use crate::math::{compensated_sum, ln_factorial};
use crate::occupancy::{SuccessKernel, SuccessLaw};

/// Margins smaller than this are reported as [`Verdict::Boundary`].
pub const BOUNDARY_EPS: f64 = 1e-9;

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("alpha must be finite and > 0, got {alpha}")))
    }
}

/// `alpha e^-alpha`.
pub fn spr_boundary(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(alpha * (-alpha).exp())
}

/// `Phi(alpha, M) = sum_{x=1..M} e^-alpha alpha^x / (x-1)!`.
pub fn phi(alpha: f64, m: u32) -> Result<f64> {
    check_alpha(alpha)?;
    if m == 0 {
        return Err(invalid("capacity M must be at least 1"));
    }
    let ln_a = alpha.ln();
    Ok(compensated_sum(
        (1..=m as u64).map(|x| (-alpha + x as f64 * ln_a - ln_factorial(x - 1)).exp()),
    ))
}

/// `Phi'(alpha) = e^-alpha [sum_{i<M} alpha^i / i! - alpha^M / (M-1)!]`.
pub fn phi_derivative(alpha: f64, m: u32) -> Result<f64> {
    check_alpha(alpha)?;
    if m == 0 {
        return Err(invalid("capacity M must be at least 1"));
    }
    let ln_a = alpha.ln();
    let term = |i: u64, fact: u64| (-alpha + i as f64 * ln_a - ln_factorial(fact)).exp();
    let head = compensated_sum((0..m as u64).map(|i| term(i, i)));
    Ok(head - term(m as u64, m as u64 - 1))
}

/// Maximiser of `Phi(., M)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlphaStar {
    pub m: u32,
    pub alpha: f64,
    pub phi: f64,
    /// Search interval `[(M-1)/e, M]` (lower end floored at a tiny positive value).
    pub bracket: (f64, f64),
    /// `Phi' >= 0` at the lower end and `<= 0` at the upper end.
    pub sign_change: bool,
}

/// Golden-section search for the maximiser of `Phi(., M)` on `[(M-1)/e, M]`,
/// where `Phi` is unimodal, followed by bisection on the sign of `Phi'`.
/// `Phi` is flat at its peak, so the derivative pins `alpha*` far more tightly
/// than function values can.
pub fn alpha_star(m: u32, tol: f64) -> Result<AlphaStar> {
    if m == 0 {
        return Err(invalid("capacity M must be at least 1"));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(invalid("tolerance must be positive"));
    }
    let lo0 = ((m as f64 - 1.0) / std::f64::consts::E).max(1e-12);
    let hi0 = m as f64;
    let f = |a: f64| phi(a, m).expect("alpha in bracket is positive");

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo0, hi0);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }

    let dphi = |x: f64| phi_derivative(x, m).expect("alpha in bracket is positive");
    let sign_change = dphi(lo0) >= 0.0 && dphi(hi0) <= 0.0;
    let (mut lo, mut hi) = (a, b);
    if sign_change {
        // widen to a bracket of the derivative's sign change, then bisect
        while lo > lo0 && dphi(lo) < 0.0 {
            lo = (lo - (b - a)).max(lo0);
        }
        while hi < hi0 && dphi(hi) > 0.0 {
            hi = (hi + (b - a)).min(hi0);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if dphi(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    let alpha = (0.5 * (lo + hi)).clamp(lo0, hi0);
    Ok(AlphaStar {
        m,
        alpha,
        phi: f(alpha),
        bracket: (lo0, hi0),
        sign_change,
    })
}

/// `Phi(1, M) / Phi(1, 1) = sum_{x=1..M} 1/(x-1)!`.
pub fn mpr_gain_at_unit_alpha(m: u32) -> Result<f64> {
    if m == 0 {
        return Err(invalid("capacity M must be at least 1"));
    }
    Ok(compensated_sum((0..m as u64).map(|i| (-ln_factorial(i)).exp())))
}

/// Whether the unit-alpha gain lies in `[2.5, 3 - 1/M)`, as it must for `M >= 3`.
pub fn gain_in_band(m: u32) -> Result<bool> {
    let g = mpr_gain_at_unit_alpha(m)?;
    Ok(g >= 2.5 && g < 3.0 - 1.0 / m as f64)
}

/// How the frame length scales with the backlog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    /// `L / h -> 0`.
    LittleO,
    /// `L = o(h^(1-eps))` for some `eps in (0, 1)`; a strictly stronger
    /// form of [`Relation::LittleO`].
    PolyLittleO,
    /// `h / L` bounded away from 0 and infinity, with limit `alpha`.
    Theta,
    /// `L / h -> infinity`.
    BigO,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeSpec {
    pub relation: Relation,
    /// `h / L`, used only with [`Relation::Theta`].
    pub alpha: Option<f64>,
    pub law: SuccessLaw,
    /// Per-slot arrival mean `Lambda`.
    pub lambda: f64,
    /// Whether arrivals are Poisson; the transience results assume it.
    pub poisson: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Stable,
    Unstable,
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransienceStatus {
    /// Not in the instability region.
    NotApplicable,
    /// Transient under Poisson arrivals.
    Transient,
    /// Unstable, but no transience result covers this case.
    NotEstablished,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityVerdict {
    pub verdict: Verdict,
    pub binding_condition: String,
    /// Stability boundary for the rate, Theta regime only.
    pub boundary: Option<f64>,
    /// `Lambda - boundary`, Theta regime only.
    pub margin: Option<f64>,
    pub transience: TransienceStatus,
}

pub fn classify(spec: &RegimeSpec) -> Result<StabilityVerdict> {
    spec.law.validate()?;
    if !(spec.lambda.is_finite() && spec.lambda >= 0.0) {
        return Err(invalid(format!("arrival rate must be finite and >= 0, got {}", spec.lambda)));
    }
    let transient_if_poisson = |yes: bool| match (yes, spec.poisson) {
        (true, true) => TransienceStatus::Transient,
        _ => TransienceStatus::NotEstablished,
    };
    let v = match spec.relation {
        Relation::LittleO | Relation::PolyLittleO => StabilityVerdict {
            verdict: Verdict::Unstable,
            binding_condition: match spec.relation {
                Relation::LittleO => "L = o(h): unstable for every arrival law".into(),
                _ => "L = o(h^(1-eps)): unstable for every arrival law, transient under Poisson arrivals".into(),
            },
            boundary: None,
            margin: None,
            transience: transient_if_poisson(spec.relation == Relation::PolyLittleO),
        },
        Relation::BigO => StabilityVerdict {
            verdict: Verdict::Unstable,
            binding_condition: "L/h -> infinity: unstable for every arrival law, transient under Poisson arrivals"
                .into(),
            boundary: None,
            margin: None,
            transience: transient_if_poisson(true),
        },
        Relation::Theta => {
            let alpha = spec.alpha.ok_or_else(|| invalid("Theta regime needs alpha"))?;
            let (boundary, name) = match spec.law {
                SuccessLaw::Spr => (spr_boundary(alpha)?, "alpha e^-alpha".to_string()),
                SuccessLaw::Mpr { capacity } => (phi(alpha, capacity)?, format!("Phi(alpha, {capacity})")),
            };
            let margin = spec.lambda - boundary;
            let (verdict, binding_condition, transience) = if margin.abs() < BOUNDARY_EPS {
                (
                    Verdict::Boundary,
                    format!("Lambda = {name}: on the boundary, not covered"),
                    TransienceStatus::NotApplicable,
                )
            } else if margin < 0.0 {
                (
                    Verdict::Stable,
                    format!("L = Theta(h) and Lambda < {name}: stable for every arrival law"),
                    TransienceStatus::NotApplicable,
                )
            } else {
                let transient = match spec.law {
                    SuccessLaw::Spr => true,
                    SuccessLaw::Mpr { .. } => spec.lambda > alpha,
                };
                let text = if transient {
                    format!("L = Theta(h) and Lambda > {name}: unstable for every arrival law")
                } else {
                    format!("L = Theta(h) and {name} < Lambda <= alpha: unstable, transience not established")
                };
                (Verdict::Unstable, text, transient_if_poisson(transient))
            };
            StabilityVerdict {
                verdict,
                binding_condition,
                boundary: Some(boundary),
                margin: Some(margin),
                transience,
            }
        }
    };
    Ok(v)
}

/// `u e^(1/u - 1)`, the base of the geometric decay in the Poisson lower-tail
/// bounds; exceeds 1 for every `u != 1`.
fn decay_base(u: f64) -> f64 {
    u * (1.0 / u - 1.0).exp()
}

/// Decay constants of the Poisson lower-tail bounds at a given `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayConstants {
    pub alpha: f64,
    /// Base for `P[N <= h e^-alpha]`, Theta regime.
    pub a: f64,
    /// Base for `P[N <= h]`.
    pub a1: f64,
}

impl DecayConstants {
    pub fn new(alpha: f64, lambda: f64) -> Option<Self> {
        if !(alpha > 0.0 && lambda > 0.0) {
            return None;
        }
        Some(DecayConstants {
            alpha,
            a: decay_base(alpha * (-alpha).exp() / lambda),
            a1: decay_base(alpha / lambda),
        })
    }
}

/// Per-state outcome of the transience inequality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Inequality {
    Holds,
    Fails,
    Uncertain,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlackRecord {
    pub h: usize,
    /// `y_h - sum_k y_k P_{h,k}`; positive where the inequality holds.
    #[serde(with = "serde_sig")]
    pub slack: f64,
    /// Largest possible contribution of the row's truncated mass.
    pub pollution: f64,
    pub status: Inequality,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransienceReport {
    pub theta: f64,
    pub h_lo: usize,
    pub h_hi: usize,
    /// Smallest tested `h` from which the inequality holds at every larger
    /// tested state.
    pub holds_from: Option<usize>,
    /// Whether [`TransienceReport::holds_from`] exists and is below `h_hi`,
    /// so the inequality is supported by more than one state.
    pub evidence: bool,
    /// Smallest slack on `[holds_from, h_hi]`.
    pub min_slack: Option<f64>,
    pub records: Vec<SlackRecord>,
    pub constants: Option<DecayConstants>,
}

/// `y_i = (i + 1)^-theta`.
pub fn transience_sequence(i: usize, theta: f64) -> f64 {
    ((i + 1) as f64).powf(-theta)
}

/// Evaluates `sum_k y_k P_{h,k} <= y_h` with `y_i = (i+1)^-theta` for each
/// `h` in `hs`. Numeric evidence only: the lemma it mirrors needs the
/// inequality for every `h` beyond some point.
pub fn transience_sequence_test(
    chain: &TruncatedChain,
    theta: f64,
    hs: RangeInclusive<usize>,
) -> Result<TransienceReport> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(invalid(format!("theta must lie in (0, 1), got {theta}")));
    }
    let (lo, hi) = (*hs.start(), *hs.end());
    if lo > hi || hi > chain.n_max {
        return Err(invalid(format!("state range {lo}..={hi} not covered by chain (n_max={})", chain.n_max)));
    }
    let mut records = Vec::with_capacity(hi - lo + 1);
    for h in lo..=hi {
        let row = &chain.rows[h];
        if row.tail_mass >= ROW_TAIL_LIMIT {
            return Err(Error::ExcessTailMass {
                state: h,
                tail_mass: row.tail_mass,
                limit: ROW_TAIL_LIMIT,
            });
        }
        let yh = transience_sequence(h, theta);
        let s = compensated_sum(
            row.probs
                .iter()
                .enumerate()
                .map(|(k, p)| transience_sequence(k, theta) * p),
        );
        let slack = yh - s;
        // truncated mass sits beyond k_max, where y is smallest
        let pollution = row.tail_mass * transience_sequence(row.k_max() + 1, theta) + 8.0 * f64::EPSILON * yh;
        let status = if slack > pollution {
            Inequality::Holds
        } else if slack < -pollution {
            Inequality::Fails
        } else {
            Inequality::Uncertain
        };
        records.push(SlackRecord {
            h,
            slack,
            pollution,
            status,
        });
    }

    let last_bad = records.iter().rposition(|r| r.status != Inequality::Holds);
    if let Some(i) = last_bad {
        let r = &records[i];
        if r.status == Inequality::Uncertain && r.slack != 0.0 {
            return Err(Error::Inconclusive {
                state: r.h,
                pollution: r.pollution,
                slack: r.slack,
            });
        }
    }
    let start = last_bad.map_or(0, |i| i + 1);
    let holds_from = records.get(start).map(|r| r.h);
    let min_slack = records[start..]
        .iter()
        .map(|r| r.slack)
        .min_by(|a, b| a.total_cmp(b));
    let top = &chain.rows[hi];
    let constants = DecayConstants::new(hi as f64 / top.frame_len as f64, chain.spec.arrivals.mean());
    Ok(TransienceReport {
        theta,
        h_lo: lo,
        h_hi: hi,
        holds_from,
        evidence: holds_from.is_some_and(|h0| h0 < hi),
        min_slack,
        records,
        constants,
    })
}

/// Where `xi_hk` comes from in [`k2_sup_xi_test`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum XiSource {
    /// Exact distribution from the success kernel.
    Exact,
    /// Independent Poisson slot counts: `k = sum_j j N_j` with
    /// `N_j ~ Poisson(rho_j)` for `j = 1..=M`.
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct K2SupPoint {
    pub k: usize,
    /// `max_{h in grid, h >= k} xi_hk`.
    pub tau: f64,
    pub k2_tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct K2SupCurve {
    pub source: XiSource,
    pub points: Vec<K2SupPoint>,
    /// Smallest grid `k` from which `k^2 tau_k` is nonincreasing.
    pub decreasing_from: Option<usize>,
}

/// Success-count pmf under the Poisson slot-count approximation, for
/// `k = 0..=k_max`.
pub fn poisson_xi(h: usize, l: usize, law: SuccessLaw, k_max: usize) -> Result<Vec<f64>> {
    law.validate()?;
    if l == 0 {
        return Err(invalid("frame length must be at least 1"));
    }
    let mut out = vec![0.0; k_max + 1];
    out[0] = 1.0;
    if h == 0 {
        return Ok(out);
    }
    let beta = h as f64 / l as f64;
    for j in 1..=law.capacity() {
        // rho_j = L e^-beta beta^j / j!
        let rho = (l as f64).ln() - beta + j as f64 * beta.ln() - ln_factorial(j as u64);
        let rho = rho.exp();
        let mut comp = vec![0.0; k_max + 1];
        let mut n = 0usize;
        while n * j <= k_max {
            comp[n * j] = (-rho + n as f64 * rho.ln() - ln_factorial(n as u64)).exp();
            n += 1;
        }
        let mut next = vec![0.0; k_max + 1];
        for (a, &x) in out.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (b, &y) in comp.iter().enumerate().take(k_max + 1 - a) {
                next[a + b] += x * y;
            }
        }
        out = next;
    }
    Ok(out)
}

/// `k^2 tau_k` with `tau_k = max_{h in h_grid, h >= k} xi_hk`, the quantity
/// whose vanishing gives transience when `L = o(h^(1-eps))`.
pub fn k2_sup_xi_test(
    law: SuccessLaw,
    policy: &FramePolicy,
    k_grid: &[usize],
    h_grid: &[usize],
    source: XiSource,
) -> Result<K2SupCurve> {
    policy.validate()?;
    if !matches!(policy, FramePolicy::Sublinear { .. }) {
        return Err(invalid("k^2 sup xi test needs a sublinear frame policy"));
    }
    if k_grid.is_empty() || h_grid.is_empty() {
        return Err(invalid("empty grid"));
    }
    let k_max = *k_grid.iter().max().expect("nonempty");
    let h_max = *h_grid.iter().max().expect("nonempty");
    let kernel = match source {
        XiSource::Exact => {
            let l_max = h_grid.iter().map(|&h| policy.frame_len(h)).max().expect("nonempty");
            Some(SuccessKernel::new(law, h_max, l_max)?)
        }
        XiSource::Poisson => None,
    };
    let columns: Vec<Vec<f64>> = h_grid
        .par_iter()
        .map(|&h| {
            let l = policy.frame_len(h);
            let mut xi = match &kernel {
                Some(kern) => kern.xi(h, l)?.xi,
                None => poisson_xi(h, l, law, k_max.min(h))?,
            };
            xi.resize(k_max + 1, 0.0);
            Ok(xi)
        })
        .collect::<Result<_>>()?;
    let points: Vec<K2SupPoint> = k_grid
        .iter()
        .map(|&k| {
            let tau = h_grid
                .iter()
                .zip(&columns)
                .filter(|(&h, _)| h >= k)
                .map(|(_, xi)| xi[k])
                .fold(0.0, f64::max);
            K2SupPoint {
                k,
                tau,
                k2_tau: (k * k) as f64 * tau,
            }
        })
        .collect();
    let mut from = points.len() - 1;
    while from > 0 && points[from - 1].k2_tau >= points[from].k2_tau {
        from -= 1;
    }
    Ok(K2SupCurve {
        source,
        decreasing_from: Some(points[from].k),
        points,
    })
}

/// `(alpha, alpha e^-alpha, Phi(alpha, M) for each M)` rows for plotting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionTable {
    pub capacities: Vec<u32>,
    pub rows: Vec<RegionRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionRow {
    #[serde(with = "serde_sig")]
    pub alpha: f64,
    #[serde(with = "serde_sig")]
    pub spr: f64,
    #[serde(with = "serde_sig::vec")]
    pub phi: Vec<f64>,
}

pub fn region_sweep(alphas: &[f64], capacities: &[u32]) -> Result<RegionTable> {
    let rows = alphas
        .par_iter()
        .map(|&alpha| {
            Ok(RegionRow {
                alpha,
                spr: spr_boundary(alpha)?,
                phi: capacities.iter().map(|&m| phi(alpha, m)).collect::<Result<_>>()?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(RegionTable {
        capacities: capacities.to_vec(),
        rows,
    })
}

impl RegionTable {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["alpha".to_string(), "spr".to_string()];
        header.extend(self.capacities.iter().map(|m| format!("phi_m{m}")));
        wr.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![fmt_sig(r.alpha), fmt_sig(r.spr)];
            rec.extend(r.phi.iter().map(|&x| fmt_sig(x)));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// `start, start + step, ...` up to `end` inclusive (within rounding).
pub fn linear_grid(start: f64, end: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && start.is_finite() && end.is_finite() && end >= start) {
        return Err(invalid(format!("bad grid {start}:{end}:{step}")));
    }
    let n = ((end - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| start + i as f64 * step).collect())
}
