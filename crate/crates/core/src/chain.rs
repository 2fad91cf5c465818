//! The backlog Markov chain `(X_i)`: transition rows, drift, truncated
//! matrices and stationary distributions.
//!
//! From state `h` a frame of `L(h)` slots carries the `h` backlogged packets;
//! `C` of them succeed with law `xi_h`, and `N` new packets arrive with law
//! `lambda_n` but only contend from the next frame on. So
//! `P[h -> h + n - c] = sum xi_h(c) lambda_n`. For `h = 0` this reduces to
//! `P_{0k} = lambda_k`.

use std::collections::BTreeMap;
use std::io::Write;
use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arrivals::{frame_arrival_pmf, ArrivalModel, FrameArrivalPmf};
use crate::error::{invalid, Error, Result};
use crate::format::{fmt_sig, serde_sig};
use crate::math::compensated_sum;
use crate::occupancy::{expected_successes, SuccessKernel, SuccessLaw};

/// Tail mass above which a row carries a warning.
pub const ROW_TAIL_WARNING: f64 = 1e-6;
/// Tail mass above which a row is unusable for expectations.
pub const ROW_TAIL_LIMIT: f64 = 1e-8;

/// Frame length as a function of the backlog, `h -> L(h) >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FramePolicy {
    Fixed { frame_len: usize },
    /// `L = max(1, round(h / alpha))`, halves rounded up.
    Proportional { alpha: f64 },
    /// `L = max(1, ceil(scale * h^(1 - epsilon)))`.
    Sublinear { epsilon: f64, scale: f64 },
    /// `L = max(1, ceil(scale * h^exponent))` with `exponent > 1`.
    Superlinear { exponent: f64, scale: f64 },
}

impl FramePolicy {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            FramePolicy::Fixed { frame_len } => frame_len >= 1,
            FramePolicy::Proportional { alpha } => alpha.is_finite() && alpha > 0.0,
            FramePolicy::Sublinear { epsilon, scale } => {
                epsilon > 0.0 && epsilon < 1.0 && scale.is_finite() && scale > 0.0
            }
            FramePolicy::Superlinear { exponent, scale } => {
                exponent.is_finite() && exponent > 1.0 && scale.is_finite() && scale > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("invalid frame policy {self:?}")))
        }
    }

    pub fn frame_len(&self, h: usize) -> usize {
        let hf = h as f64;
        let raw = match *self {
            FramePolicy::Fixed { frame_len } => return frame_len.max(1),
            FramePolicy::Proportional { alpha } => (hf / alpha + 0.5).floor(),
            FramePolicy::Sublinear { epsilon, scale } => (scale * hf.powf(1.0 - epsilon)).ceil(),
            FramePolicy::Superlinear { exponent, scale } => (scale * hf.powf(exponent)).ceil(),
        };
        (raw as usize).max(1)
    }
}

/// One row `P_{h,.}` of the transition matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionRow {
    pub h: usize,
    pub frame_len: usize,
    /// `probs[k] = P_{h,k}` for `k = 0..=k_max`.
    #[serde(with = "serde_sig::vec")]
    pub probs: Vec<f64>,
    #[serde(with = "serde_sig")]
    pub tail_mass: f64,
    /// Set when the tail mass exceeds [`ROW_TAIL_WARNING`].
    pub warning: bool,
}

impl TransitionRow {
    pub fn prob(&self, k: usize) -> f64 {
        self.probs.get(k).copied().unwrap_or(0.0)
    }

    pub fn k_max(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn total(&self) -> f64 {
        compensated_sum(self.probs.iter().copied())
    }
}

/// `D_h = sum_k (k - h) P_{h,k}` read off a row.
pub fn drift_from_row(row: &TransitionRow) -> Result<f64> {
    if row.tail_mass >= ROW_TAIL_LIMIT {
        return Err(Error::ExcessTailMass {
            state: row.h,
            tail_mass: row.tail_mass,
            limit: ROW_TAIL_LIMIT,
        });
    }
    let h = row.h as f64;
    Ok(compensated_sum(
        row.probs.iter().enumerate().map(|(k, p)| (k as f64 - h) * p),
    ))
}

/// `d_h- = sum_{k < h} (k - h) P_{h,k}`, the backlog-decreasing part of the drift.
pub fn downward_drift_from_row(row: &TransitionRow) -> f64 {
    let h = row.h as f64;
    compensated_sum(
        row.probs
            .iter()
            .enumerate()
            .take(row.h)
            .map(|(k, p)| (k as f64 - h) * p),
    )
}

/// A policy, arrival law and reception law: everything that defines the chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub policy: FramePolicy,
    pub arrivals: ArrivalModel,
    pub law: SuccessLaw,
}

impl ChainSpec {
    pub fn new(policy: FramePolicy, arrivals: ArrivalModel, law: SuccessLaw) -> Result<Self> {
        policy.validate()?;
        law.validate()?;
        Ok(ChainSpec { policy, arrivals, law })
    }

    pub fn frame_len(&self, h: usize) -> usize {
        self.policy.frame_len(h)
    }

    /// Expected arrivals per frame at backlog `h`, `lambda(h) = L(h) Lambda`.
    pub fn frame_arrival_mean(&self, h: usize) -> f64 {
        self.frame_len(h) as f64 * self.arrivals.mean()
    }

    /// `D_h = L(h) Lambda - r_h` in closed form.
    pub fn drift(&self, h: usize) -> Result<f64> {
        let l = self.frame_len(h);
        Ok(l as f64 * self.arrivals.mean() - expected_successes(h, l, self.law)?)
    }

    /// Row for state `h`. Without `k_cap` the row extends as far as the
    /// truncated arrival law reaches.
    pub fn transition_row(&self, h: usize, k_cap: Option<usize>) -> Result<TransitionRow> {
        Ok(self.rows(h..=h, k_cap)?.pop().expect("one row"))
    }

    /// Rows for every state in `hs`, sharing one success kernel and one
    /// arrival law per distinct frame length. Built in parallel; the result
    /// does not depend on the thread count.
    pub fn rows(&self, hs: RangeInclusive<usize>, k_cap: Option<usize>) -> Result<Vec<TransitionRow>> {
        let (lo, hi) = (*hs.start(), *hs.end());
        if lo > hi {
            return Ok(Vec::new());
        }
        if let Some(cap) = k_cap {
            if cap < hi + 1 {
                return Err(invalid(format!("k_cap {cap} must be at least h + 1 = {}", hi + 1)));
            }
        }
        let lens: Vec<usize> = (lo..=hi).map(|h| self.frame_len(h)).collect();
        let max_l = *lens.iter().max().expect("nonempty range");
        let kernel = SuccessKernel::new(self.law, hi, max_l)?;
        let mut frames: BTreeMap<usize, FrameArrivalPmf> = BTreeMap::new();
        for &l in &lens {
            if let std::collections::btree_map::Entry::Vacant(e) = frames.entry(l) {
                e.insert(frame_arrival_pmf(&self.arrivals, l, None)?);
            }
        }
        (lo..=hi)
            .into_par_iter()
            .map(|h| {
                let l = self.frame_len(h);
                let xi = kernel.xi(h, l)?;
                Ok(assemble_row(h, l, &xi.xi, &frames[&l], k_cap))
            })
            .collect()
    }

    pub fn downward_drift(&self, h: usize) -> Result<f64> {
        Ok(downward_drift_from_row(&self.transition_row(h, None)?))
    }

    /// Drift records for every state in `hs`; `d_h-` is filled in only when
    /// `with_downward` is set since it needs the full rows.
    pub fn drift_profile(&self, hs: RangeInclusive<usize>, with_downward: bool) -> Result<DriftProfile> {
        let rows = if with_downward {
            Some(self.rows(hs.clone(), None)?)
        } else {
            None
        };
        let records = hs
            .clone()
            .enumerate()
            .map(|(i, h)| {
                let l = self.frame_len(h);
                let lambda = l as f64 * self.arrivals.mean();
                let r = expected_successes(h, l, self.law)?;
                Ok(DriftRecord {
                    h,
                    frame_len: l,
                    alpha: h as f64 / l as f64,
                    lambda,
                    r_h: r,
                    drift: lambda - r,
                    downward: rows.as_ref().map(|rs| downward_drift_from_row(&rs[i])),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DriftProfile { law: self.law, records })
    }

    /// Rows for `h = 0..=n_max`. Transitions above `n_max` are kept in the
    /// rows and lumped into `n_max` only in the matrix view.
    pub fn build_truncated_chain(&self, n_max: usize) -> Result<TruncatedChain> {
        let rows = self.rows(0..=n_max, None)?;
        let lumped_mass = rows
            .iter()
            .map(|r| {
                let above: f64 = r.probs.iter().skip(n_max + 1).sum();
                above + r.tail_mass
            })
            .collect();
        Ok(TruncatedChain {
            n_max,
            spec: self.clone(),
            rows,
            lumped_mass,
        })
    }
}

fn assemble_row(h: usize, l: usize, xi: &[f64], frame: &FrameArrivalPmf, k_cap: Option<usize>) -> TransitionRow {
    let k_top = h + frame.n_max();
    let k_max = k_cap.map_or(k_top, |c| c.min(k_top));
    let mut probs = vec![0.0; k_max + 1];
    for (c, &pc) in xi.iter().enumerate() {
        if pc == 0.0 {
            continue;
        }
        for (n, &pn) in frame.pmf.iter().enumerate() {
            let k = h + n - c;
            if k > k_max {
                break;
            }
            probs[k] += pc * pn;
        }
    }
    let tail_mass = (1.0 - compensated_sum(probs.iter().copied())).max(0.0);
    TransitionRow {
        h,
        frame_len: l,
        probs,
        tail_mass,
        warning: tail_mass > ROW_TAIL_WARNING,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftRecord {
    pub h: usize,
    pub frame_len: usize,
    /// `h / L(h)` as realised by the policy.
    #[serde(with = "serde_sig")]
    pub alpha: f64,
    #[serde(with = "serde_sig")]
    pub lambda: f64,
    #[serde(with = "serde_sig")]
    pub r_h: f64,
    #[serde(with = "serde_sig")]
    pub drift: f64,
    pub downward: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftProfile {
    pub law: SuccessLaw,
    pub records: Vec<DriftRecord>,
}

/// A violated drift bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundViolation {
    pub h: usize,
    pub which: &'static str,
    pub value: f64,
    pub bound: f64,
}

impl DriftProfile {
    /// Checks `|D_h| <= lambda + L` (SPR) or `lambda + L alpha` (MPR) and
    /// `d_h- >= -min(h, L)` (SPR) or `-M min(h, L)` (MPR).
    pub fn bound_violations(&self) -> Vec<BoundViolation> {
        let m = self.law.capacity() as f64;
        let mut out = Vec::new();
        for r in &self.records {
            let l = r.frame_len as f64;
            let upper = match self.law {
                SuccessLaw::Spr => r.lambda + l,
                SuccessLaw::Mpr { .. } => r.lambda + l * r.alpha,
            };
            if r.drift.abs() > upper * (1.0 + 1e-12) {
                out.push(BoundViolation {
                    h: r.h,
                    which: "|D_h|",
                    value: r.drift.abs(),
                    bound: upper,
                });
            }
            if let Some(d) = r.downward {
                let lower = -m * r.h.min(r.frame_len) as f64;
                if d < lower - 1e-12 * lower.abs() {
                    out.push(BoundViolation {
                        h: r.h,
                        which: "d_h-",
                        value: d,
                        bound: lower,
                    });
                }
            }
        }
        out
    }

    /// Smallest `h0` in the profile such that `D_h` has the requested strict
    /// sign for every recorded `h >= h0`.
    pub fn sign_onset(&self, positive: bool) -> Option<usize> {
        let mut onset = None;
        for r in self.records.iter().rev() {
            let ok = if positive { r.drift > 0.0 } else { r.drift < 0.0 };
            if !ok {
                break;
            }
            onset = Some(r.h);
        }
        onset
    }
}

/// Rows for `h = 0..=n_max` of a chain whose upper transitions are lumped
/// into `n_max`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncatedChain {
    pub n_max: usize,
    pub spec: ChainSpec,
    pub rows: Vec<TransitionRow>,
    /// Per row, the probability of leaving `0..=n_max` upwards plus the
    /// row's own tail mass.
    pub lumped_mass: Vec<f64>,
}

impl TruncatedChain {
    /// Row `h` of the lumped `(n_max+1) x (n_max+1)` stochastic matrix.
    pub fn lumped_row(&self, h: usize) -> Vec<f64> {
        let n = self.n_max;
        let row = &self.rows[h];
        let mut out: Vec<f64> = (0..=n).map(|k| row.prob(k)).collect();
        out[n] += self.lumped_mass[h];
        out
    }

    /// `(h, k, P_hk)` triplets of the unlumped rows, nonzero entries only.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["h", "k", "p"])?;
        for row in &self.rows {
            for (k, &p) in row.probs.iter().enumerate() {
                if p != 0.0 {
                    wr.write_record([row.h.to_string(), k.to_string(), fmt_sig(p)])?;
                }
            }
        }
        wr.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }
}

/// Stationary distribution of a truncated chain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stationary {
    #[serde(with = "serde_sig::vec")]
    pub pi: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    /// Mass on states above `n_max / 2`.
    #[serde(with = "serde_sig")]
    pub upper_mass: f64,
    /// Set when more than [`BOUNDARY_FLAG_MASS`] sits above `n_max / 2`,
    /// the signature of a chain that wants to escape the truncation.
    pub boundary_flag: bool,
}

pub const BOUNDARY_FLAG_MASS: f64 = 1e-6;

/// Power iteration on the lazy chain `(I + P) / 2`, which has the same
/// stationary law but is aperiodic. Starts from the point mass at 0 and stops
/// once the L1 change per step falls below `tol`.
pub fn stationary_distribution(chain: &TruncatedChain, tol: f64, max_iter: usize) -> Result<Stationary> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(invalid("tolerance must be positive"));
    }
    let n = chain.n_max;
    let rows: Vec<Vec<f64>> = (0..=n).map(|h| chain.lumped_row(h)).collect();
    let mut pi = vec![0.0; n + 1];
    pi[0] = 1.0;
    let mut next = vec![0.0; n + 1];
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        next.iter_mut().for_each(|x| *x = 0.0);
        for (h, row) in rows.iter().enumerate() {
            let w = pi[h];
            if w == 0.0 {
                continue;
            }
            for (k, &p) in row.iter().enumerate() {
                next[k] += w * p;
            }
        }
        let total: f64 = next.iter().sum();
        residual = 0.0;
        for (x, y) in pi.iter_mut().zip(&next) {
            let v = 0.5 * (*x + y / total);
            residual += (v - *x).abs();
            *x = v;
        }
        if residual < tol {
            let upper_mass: f64 = pi.iter().skip(n / 2 + 1).sum();
            return Ok(Stationary {
                pi,
                iterations: it,
                residual,
                upper_mass,
                boundary_flag: upper_mass > BOUNDARY_FLAG_MASS,
            });
        }
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        residual,
    })
}
