//! Arrival traffic: iid per-slot arrival counts and their per-frame sums.

use std::io::Read;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::math::{compensated_sum, ln_factorial};

/// Tail mass below which the default frame truncation stops.
pub const DEFAULT_TAIL_TOL: f64 = 1e-12;

/// Per-slot arrival law `{Lambda_k}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum ArrivalFamily {
    Poisson { rate: f64 },
    Bernoulli { p: f64 },
    /// Geometric on `{0, 1, ...}` parameterised by its mean.
    Geometric { mean: f64 },
    Custom { pmf: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalModel {
    family: ArrivalFamily,
    mean: f64,
}

impl ArrivalModel {
    pub fn poisson(rate: f64) -> Result<Self> {
        if !(rate.is_finite() && rate >= 0.0) {
            return Err(invalid(format!("Poisson rate must be finite and >= 0, got {rate}")));
        }
        Ok(ArrivalModel {
            family: ArrivalFamily::Poisson { rate },
            mean: rate,
        })
    }

    pub fn bernoulli(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid(format!("Bernoulli p must lie in [0, 1], got {p}")));
        }
        Ok(ArrivalModel {
            family: ArrivalFamily::Bernoulli { p },
            mean: p,
        })
    }

    pub fn geometric(mean: f64) -> Result<Self> {
        if !(mean.is_finite() && mean >= 0.0) {
            return Err(invalid(format!("geometric mean must be finite and >= 0, got {mean}")));
        }
        Ok(ArrivalModel {
            family: ArrivalFamily::Geometric { mean },
            mean,
        })
    }

    /// Explicit pmf; must sum to one within 1e-9 and is renormalised.
    pub fn custom(pmf: Vec<f64>) -> Result<Self> {
        if pmf.is_empty() {
            return Err(invalid("custom pmf is empty"));
        }
        if let Some(bad) = pmf.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(invalid(format!("custom pmf has invalid probability {bad}")));
        }
        let total = compensated_sum(pmf.iter().copied());
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("custom pmf sums to {total}, not 1")));
        }
        let pmf: Vec<f64> = pmf.into_iter().map(|p| p / total).collect();
        let mean = pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
        Ok(ArrivalModel {
            family: ArrivalFamily::Custom { pmf },
            mean,
        })
    }

    /// No arrivals, ever.
    pub fn none() -> Self {
        ArrivalModel {
            family: ArrivalFamily::Custom { pmf: vec![1.0] },
            mean: 0.0,
        }
    }

    /// Reads a two-column `k,probability` table. A header row is allowed;
    /// missing `k` default to probability zero.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let mut pmf: Vec<Option<f64>> = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != 2 {
                return Err(Error::Parse(format!("line {}: expected 2 columns, got {}", i + 1, rec.len())));
            }
            let (k, p) = match (rec[0].parse::<usize>(), rec[1].parse::<f64>()) {
                (Ok(k), Ok(p)) => (k, p),
                _ if i == 0 => continue,
                _ => return Err(Error::Parse(format!("line {}: not a (k, probability) pair", i + 1))),
            };
            if pmf.len() <= k {
                pmf.resize(k + 1, None);
            }
            if pmf[k].replace(p).is_some() {
                return Err(Error::Parse(format!("duplicate entry for k={k}")));
            }
        }
        Self::custom(pmf.into_iter().map(|p| p.unwrap_or(0.0)).collect())
    }

    pub fn family(&self) -> &ArrivalFamily {
        &self.family
    }

    /// `Lambda`, the expected arrivals per slot.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn is_poisson(&self) -> bool {
        matches!(self.family, ArrivalFamily::Poisson { .. })
    }

    pub fn per_slot_prob(&self, k: usize) -> f64 {
        match &self.family {
            ArrivalFamily::Poisson { rate } => poisson_pmf(*rate, k),
            ArrivalFamily::Bernoulli { p } => match k {
                0 => 1.0 - p,
                1 => *p,
                _ => 0.0,
            },
            ArrivalFamily::Geometric { mean } => {
                let q = mean / (1.0 + mean);
                (1.0 - q) * q.powi(k as i32)
            }
            ArrivalFamily::Custom { pmf } => pmf.get(k).copied().unwrap_or(0.0),
        }
    }

    /// `Lambda_k` for `k = 0..=k_max`.
    pub fn per_slot_pmf(&self, k_max: usize) -> Vec<f64> {
        (0..=k_max).map(|k| self.per_slot_prob(k)).collect()
    }

    /// Whether every frame count has probability strictly inside (0, 1),
    /// the sufficient condition for an irreducible aperiodic backlog chain.
    /// Only unbounded families with positive mean qualify.
    pub fn satisfies_irreducibility(&self) -> bool {
        match &self.family {
            ArrivalFamily::Poisson { rate } => *rate > 0.0,
            ArrivalFamily::Geometric { mean } => *mean > 0.0,
            ArrivalFamily::Bernoulli { .. } | ArrivalFamily::Custom { .. } => false,
        }
    }
}

fn poisson_pmf(mu: f64, n: usize) -> f64 {
    if mu == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    (-mu + n as f64 * mu.ln() - ln_factorial(n as u64)).exp()
}

/// Distribution `{lambda_n}` of arrivals in a frame of `L` slots, truncated at
/// `n_max` with the remaining mass recorded.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameArrivalPmf {
    pub frame_len: usize,
    pub pmf: Vec<f64>,
    pub tail_mass: f64,
    /// Untruncated mean `L * Lambda`.
    pub mean: f64,
}

impl FrameArrivalPmf {
    pub fn prob(&self, n: usize) -> f64 {
        self.pmf.get(n).copied().unwrap_or(0.0)
    }

    pub fn n_max(&self) -> usize {
        self.pmf.len() - 1
    }

    pub fn truncated_mean(&self) -> f64 {
        self.pmf.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }
}

/// Cap on the default truncation point: `10 * lambda + 50`.
pub fn default_n_cap(frame_mean: f64) -> usize {
    (10.0 * frame_mean + 50.0).ceil() as usize
}

/// Per-frame arrival distribution. With `n_max = None` the truncation is the
/// smallest `n` with tail mass below [`DEFAULT_TAIL_TOL`], capped at
/// `10 * lambda + 50`.
pub fn frame_arrival_pmf(model: &ArrivalModel, l: usize, n_max: Option<usize>) -> Result<FrameArrivalPmf> {
    if l == 0 {
        return Err(invalid("frame length must be at least 1"));
    }
    let frame_mean = l as f64 * model.mean();
    let cap = n_max.unwrap_or_else(|| default_n_cap(frame_mean));
    let mut pmf = match &model.family {
        ArrivalFamily::Poisson { rate } => (0..=cap).map(|n| poisson_pmf(l as f64 * rate, n)).collect(),
        _ => convolve_power(&model.per_slot_pmf(cap), l, cap),
    };
    if n_max.is_none() {
        let mut cdf = 0.0;
        let mut comp = 0.0;
        for (n, p) in pmf.iter().enumerate() {
            // Kahan-style running cdf
            let y = p - comp;
            let t = cdf + y;
            comp = (t - cdf) - y;
            cdf = t;
            if 1.0 - cdf < DEFAULT_TAIL_TOL {
                pmf.truncate(n + 1);
                break;
            }
        }
    }
    let tail_mass = (1.0 - compensated_sum(pmf.iter().copied())).max(0.0);
    Ok(FrameArrivalPmf {
        frame_len: l,
        pmf,
        tail_mass,
        mean: frame_mean,
    })
}

/// Frame distribution by explicit `L`-fold convolution of the per-slot pmf,
/// for every family including Poisson.
pub fn frame_arrival_pmf_by_convolution(model: &ArrivalModel, l: usize, n_max: usize) -> Result<FrameArrivalPmf> {
    if l == 0 {
        return Err(invalid("frame length must be at least 1"));
    }
    let pmf = convolve_power(&model.per_slot_pmf(n_max), l, n_max);
    let tail_mass = (1.0 - compensated_sum(pmf.iter().copied())).max(0.0);
    Ok(FrameArrivalPmf {
        frame_len: l,
        pmf,
        tail_mass,
        mean: l as f64 * model.mean(),
    })
}

fn convolve_truncated(a: &[f64], b: &[f64], n_max: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_max + 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate().take(n_max + 1 - i) {
            out[i + j] += x * y;
        }
    }
    out
}

/// `base^{*power}` truncated at `n_max`, by repeated squaring.
fn convolve_power(base: &[f64], power: usize, n_max: usize) -> Vec<f64> {
    let mut result = vec![0.0; n_max + 1];
    result[0] = 1.0;
    let mut sq = base[..base.len().min(n_max + 1)].to_vec();
    let mut e = power;
    while e > 0 {
        if e & 1 == 1 {
            result = convolve_truncated(&result, &sq, n_max);
        }
        e >>= 1;
        if e > 0 {
            sq = convolve_truncated(&sq, &sq, n_max);
        }
    }
    result
}

/// Chernoff-type bound `P[X <= x] <= e^-mu (e mu)^x / x^x` for
/// `X ~ Poisson(mu)`, valid for `0 <= x < mu`.
pub fn poisson_tail_bound(mu: f64, x: f64) -> Result<f64> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(invalid(format!("mu must be positive, got {mu}")));
    }
    if !(x >= 0.0 && x < mu) {
        return Err(invalid(format!("bound needs 0 <= x < mu, got x={x}, mu={mu}")));
    }
    if x == 0.0 {
        return Ok((-mu).exp());
    }
    Ok((-mu + x * (1.0 + mu.ln()) - x * x.ln()).exp())
}

/// Inverse-cdf sampler for the per-slot law.
#[derive(Debug, Clone)]
pub struct ArrivalSampler {
    cdf: Vec<f64>,
    zero: bool,
}

impl ArrivalSampler {
    pub fn new(model: &ArrivalModel) -> Self {
        let cap = default_n_cap(model.mean()).max(1);
        let mut cdf = Vec::new();
        let mut acc = 0.0;
        for k in 0..=cap {
            acc += model.per_slot_prob(k);
            cdf.push(acc);
            if 1.0 - acc < 1e-16 {
                break;
            }
        }
        let zero = model.per_slot_prob(0) >= 1.0;
        ArrivalSampler { cdf, zero }
    }

    pub fn sample_slot<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.zero {
            return 0;
        }
        let u: f64 = rng.random();
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1)
    }

    /// `N_i`: sum of `L` iid per-slot draws.
    pub fn sample_frame<R: Rng + ?Sized>(&self, rng: &mut R, l: usize) -> usize {
        if self.zero {
            return 0;
        }
        (0..l).map(|_| self.sample_slot(rng)).sum()
    }
}

pub fn sample_frame_arrivals<R: Rng + ?Sized>(model: &ArrivalModel, l: usize, rng: &mut R) -> usize {
    ArrivalSampler::new(model).sample_frame(rng, l)
}
