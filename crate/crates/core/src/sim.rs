//! Seeded Monte Carlo simulation of frame slotted Aloha.
//!
//! Each frame, every backlogged packet picks a slot uniformly; a slot holding
//! between 1 and `M` packets delivers all of them (`M = 1` for SPR). Packets
//! arriving during a frame join the backlog for the next one.
//!
//! Runs use `ChaCha8Rng::seed_from_u64(seed)`; replication `i` uses
//! `seed + i`.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::arrivals::{ArrivalModel, ArrivalSampler};
use crate::chain::FramePolicy;
use crate::error::{invalid, Result};
use crate::format::{fmt_sig, serde_sig};
use crate::occupancy::{expected_successes, xi, SuccessDistribution, SuccessLaw, XiMethod};

/// Name of the generator, echoed in outputs.
pub const RNG_NAME: &str = "ChaCha8Rng::seed_from_u64";

pub const DEFAULT_ABORT_BACKLOG: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    pub policy: FramePolicy,
    pub arrivals: ArrivalModel,
    pub law: SuccessLaw,
    pub frames: usize,
    pub seed: u64,
    pub initial_backlog: usize,
    /// The run stops once the backlog reaches this value.
    pub abort_backlog: usize,
}

impl SimConfig {
    pub fn new(policy: FramePolicy, arrivals: ArrivalModel, law: SuccessLaw, frames: usize, seed: u64) -> Self {
        SimConfig {
            policy,
            arrivals,
            law,
            frames,
            seed,
            initial_backlog: 0,
            abort_backlog: DEFAULT_ABORT_BACKLOG,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.policy.validate()?;
        self.law.validate()?;
        if self.frames == 0 {
            return Err(invalid("frames must be at least 1"));
        }
        if self.abort_backlog <= self.initial_backlog {
            return Err(invalid("abort backlog must exceed the initial backlog"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FrameRecord {
    /// `X_i`, backlog at the start of the frame.
    pub backlog: usize,
    /// `L_i`.
    pub frame_len: usize,
    /// `N_i`, arrivals during the frame.
    pub arrivals: usize,
    /// `C_i`, successful backlogged packets.
    pub successes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "status")]
pub enum RunStatus {
    Completed,
    /// Stopped after `frames` frames because the backlog reached the cap.
    AbortedAtCap { frames: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationTrace {
    pub seed: u64,
    pub rng: &'static str,
    pub records: Vec<FrameRecord>,
    /// Backlog after the last recorded frame.
    pub final_backlog: usize,
    pub status: RunStatus,
}

impl SimulationTrace {
    pub fn aborted(&self) -> bool {
        matches!(self.status, RunStatus::AbortedAtCap { .. })
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["frame", "backlog", "L", "arrivals", "successes"])?;
        for (i, r) in self.records.iter().enumerate() {
            wr.write_record([
                i.to_string(),
                r.backlog.to_string(),
                r.frame_len.to_string(),
                r.arrivals.to_string(),
                r.successes.to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Number of packets among `h` that succeed in a frame of `l` slots.
/// `occ` is scratch space.
fn frame_successes<R: Rng + ?Sized>(rng: &mut R, h: usize, l: usize, m: usize, occ: &mut Vec<u32>) -> usize {
    if h == 0 {
        return 0;
    }
    occ.clear();
    occ.resize(l, 0);
    for _ in 0..h {
        occ[rng.random_range(0..l)] += 1;
    }
    occ.iter()
        .map(|&x| x as usize)
        .filter(|&x| x >= 1 && x <= m)
        .sum()
}

pub fn simulate(cfg: &SimConfig) -> Result<SimulationTrace> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sampler = ArrivalSampler::new(&cfg.arrivals);
    let m = cfg.law.capacity();
    let mut occ = Vec::new();
    let mut records = Vec::with_capacity(cfg.frames);
    let mut x = cfg.initial_backlog;
    let mut status = RunStatus::Completed;
    for _ in 0..cfg.frames {
        let l = cfg.policy.frame_len(x);
        let c = frame_successes(&mut rng, x, l, m, &mut occ);
        let n = sampler.sample_frame(&mut rng, l);
        records.push(FrameRecord {
            backlog: x,
            frame_len: l,
            arrivals: n,
            successes: c,
        });
        x = x + n - c;
        if x >= cfg.abort_backlog {
            status = RunStatus::AbortedAtCap { frames: records.len() };
            break;
        }
    }
    Ok(SimulationTrace {
        seed: cfg.seed,
        rng: RNG_NAME,
        records,
        final_backlog: x,
        status,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EmpiricalXi {
    pub distribution: SuccessDistribution,
    pub trials: usize,
    /// Total-variation distance to the exact law, when that is computable.
    pub tv_to_exact: Option<f64>,
}

/// Distribution of the success count over `trials` independent single frames.
pub fn empirical_xi(h: usize, l: usize, law: SuccessLaw, trials: usize, seed: u64) -> Result<EmpiricalXi> {
    law.validate()?;
    if l == 0 {
        return Err(invalid("frame length must be at least 1"));
    }
    if trials == 0 {
        return Err(invalid("trials must be at least 1"));
    }
    let m = law.capacity();
    let top = law.max_successes(h, l);
    let mut counts = vec![0u64; top + 1];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut occ = Vec::new();
    for _ in 0..trials {
        counts[frame_successes(&mut rng, h, l, m, &mut occ)] += 1;
    }
    let distribution = SuccessDistribution {
        h,
        frame_len: l,
        law,
        xi: counts.iter().map(|&c| c as f64 / trials as f64).collect(),
        method: XiMethod::Empirical,
        exact: None,
    };
    let tv_to_exact = xi(h, l, law).ok().map(|e| distribution.tv_distance(&e));
    Ok(EmpiricalXi {
        distribution,
        trials,
        tv_to_exact,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SuccessPoint {
    pub h: usize,
    pub frame_len: usize,
    pub frames: usize,
    #[serde(with = "serde_sig")]
    pub mean_successes: f64,
    #[serde(with = "serde_sig")]
    pub r_h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceStats {
    pub frames: usize,
    /// First frame of the window used for slope and quantiles.
    pub window_start: usize,
    /// Least-squares slope of backlog against frame index over the window.
    #[serde(with = "serde_sig")]
    pub slope: f64,
    /// Frames `i >= 1` starting with an empty backlog.
    pub returns_to_zero: usize,
    pub max_backlog: usize,
    #[serde(with = "serde_sig")]
    pub mean_backlog: f64,
    /// Backlog quantiles over the window at [`QUANTILE_LEVELS`].
    pub quantiles: Vec<usize>,
    /// Mean success count per visited backlog against `r_h`.
    pub success_curve: Vec<SuccessPoint>,
}

pub const QUANTILE_LEVELS: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

/// Statistics with the slope window starting halfway through the trace.
pub fn trace_stats(trace: &SimulationTrace, law: SuccessLaw) -> Result<TraceStats> {
    trace_stats_window(trace, law, 0.5)
}

/// Statistics with the slope and quantile window starting at fraction
/// `from` of the trace.
pub fn trace_stats_window(trace: &SimulationTrace, law: SuccessLaw, from: f64) -> Result<TraceStats> {
    let n = trace.records.len();
    if n == 0 {
        return Err(invalid("empty trace"));
    }
    if !(0.0..1.0).contains(&from) {
        return Err(invalid("window start must lie in [0, 1)"));
    }
    let start = ((n as f64 * from).floor() as usize).min(n - 1);
    let window = &trace.records[start..];

    let slope = {
        let k = window.len() as f64;
        if window.len() < 2 {
            0.0
        } else {
            let mx = (k - 1.0) / 2.0;
            let my = window.iter().map(|r| r.backlog as f64).sum::<f64>() / k;
            let (mut sxy, mut sxx) = (0.0, 0.0);
            for (i, r) in window.iter().enumerate() {
                let dx = i as f64 - mx;
                sxy += dx * (r.backlog as f64 - my);
                sxx += dx * dx;
            }
            sxy / sxx
        }
    };

    let mut sorted: Vec<usize> = window.iter().map(|r| r.backlog).collect();
    sorted.sort_unstable();
    let quantiles = QUANTILE_LEVELS
        .iter()
        .map(|q| sorted[((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1])
        .collect();

    let max_h = trace.records.iter().map(|r| r.backlog).max().unwrap_or(0);
    let mut per_h: Vec<(usize, usize, usize)> = vec![(0, 0, 0); max_h + 1];
    for r in &trace.records {
        let e = &mut per_h[r.backlog];
        e.0 = r.frame_len;
        e.1 += 1;
        e.2 += r.successes;
    }
    let success_curve = per_h
        .iter()
        .enumerate()
        .filter(|(_, e)| e.1 > 0)
        .map(|(h, &(l, frames, total))| {
            Ok(SuccessPoint {
                h,
                frame_len: l,
                frames,
                mean_successes: total as f64 / frames as f64,
                r_h: expected_successes(h, l, law)?,
            })
        })
        .collect::<Result<_>>()?;

    Ok(TraceStats {
        frames: n,
        window_start: start,
        slope,
        returns_to_zero: trace.records.iter().skip(1).filter(|r| r.backlog == 0).count(),
        max_backlog: max_h.max(trace.final_backlog),
        mean_backlog: window.iter().map(|r| r.backlog as f64).sum::<f64>() / window.len() as f64,
        quantiles,
        success_curve,
    })
}

/// Counts of each backlog value over frames `skip..` of the trace.
pub fn backlog_histogram(trace: &SimulationTrace, skip: usize) -> Vec<u64> {
    let mut hist = Vec::new();
    for r in trace.records.iter().skip(skip) {
        if hist.len() <= r.backlog {
            hist.resize(r.backlog + 1, 0);
        }
        hist[r.backlog] += 1;
    }
    hist
}

/// Runs `n_runs` simulations with seeds `seed, seed+1, ...` in parallel and
/// maps each trace through `f`; results are in seed order.
pub fn replicate_with<T, F>(cfg: &SimConfig, n_runs: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&SimulationTrace) -> Result<T> + Sync,
{
    cfg.validate()?;
    if n_runs == 0 {
        return Err(invalid("n_runs must be at least 1"));
    }
    (0..n_runs as u64)
        .into_par_iter()
        .map(|i| {
            let mut c = cfg.clone();
            c.seed = cfg.seed.wrapping_add(i);
            f(&simulate(&c)?)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub status: RunStatus,
    pub stats: TraceStats,
}

/// Mean with a normal-approximation 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanCi {
    #[serde(with = "serde_sig")]
    pub mean: f64,
    #[serde(with = "serde_sig")]
    pub lo: f64,
    #[serde(with = "serde_sig")]
    pub hi: f64,
}

impl MeanCi {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let half = if values.len() > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            1.96 * (var / n).sqrt()
        } else {
            0.0
        };
        MeanCi {
            mean,
            lo: mean - half,
            hi: mean + half,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateSummary {
    pub config: SimConfig,
    pub rng: &'static str,
    pub n_runs: usize,
    pub aborted: usize,
    pub slope: MeanCi,
    pub returns_to_zero: MeanCi,
    pub max_backlog: MeanCi,
    pub runs: Vec<RunSummary>,
}

pub fn replicate(cfg: &SimConfig, n_runs: usize) -> Result<ReplicateSummary> {
    let runs = replicate_with(cfg, n_runs, |t| {
        Ok(RunSummary {
            seed: t.seed,
            status: t.status,
            stats: trace_stats(t, cfg.law)?,
        })
    })?;
    let col = |f: fn(&RunSummary) -> f64| MeanCi::of(&runs.iter().map(f).collect::<Vec<_>>());
    Ok(ReplicateSummary {
        config: cfg.clone(),
        rng: RNG_NAME,
        n_runs,
        aborted: runs.iter().filter(|r| r.status != RunStatus::Completed).count(),
        slope: col(|r| r.stats.slope),
        returns_to_zero: col(|r| r.stats.returns_to_zero as f64),
        max_backlog: col(|r| r.stats.max_backlog as f64),
        runs,
    })
}

impl ReplicateSummary {
    /// One line per run: `seed,status,frames,slope,returns_to_zero,max_backlog`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["seed", "status", "frames", "slope", "returns_to_zero", "max_backlog"])?;
        for r in &self.runs {
            let status = match r.status {
                RunStatus::Completed => "completed",
                RunStatus::AbortedAtCap { .. } => "aborted-at-cap",
            };
            wr.write_record([
                r.seed.to_string(),
                status.to_string(),
                r.stats.frames.to_string(),
                fmt_sig(r.stats.slope),
                r.stats.returns_to_zero.to_string(),
                r.stats.max_backlog.to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(policy: FramePolicy, arrivals: ArrivalModel, law: SuccessLaw, frames: usize, x0: usize) -> SimConfig {
        SimConfig {
            initial_backlog: x0,
            ..SimConfig::new(policy, arrivals, law, frames, 11)
        }
    }

    #[test]
    fn single_packet_single_slot_drains() {
        let c = cfg(FramePolicy::Fixed { frame_len: 1 }, ArrivalModel::none(), SuccessLaw::Spr, 5, 1);
        let t = simulate(&c).unwrap();
        assert_eq!(t.records[0].successes, 1);
        assert!(t.records[1..].iter().all(|r| r.backlog == 0));
        let s = trace_stats(&t, c.law).unwrap();
        assert_eq!(s.returns_to_zero, 4);
        assert_eq!(s.slope, 0.0);
    }

    #[test]
    fn capacity_covering_backlog_clears_it() {
        let c = cfg(FramePolicy::Fixed { frame_len: 5 }, ArrivalModel::none(), SuccessLaw::mpr(5).unwrap(), 3, 5);
        for seed in 0..50 {
            let t = simulate(&SimConfig { seed, ..c.clone() }).unwrap();
            assert_eq!(t.records[0].successes, 5);
            assert_eq!(t.records[1].backlog, 0);
        }
    }

    #[test]
    fn conservation_and_determinism() {
        let c = cfg(
            FramePolicy::Proportional { alpha: 1.0 },
            ArrivalModel::poisson(0.3).unwrap(),
            SuccessLaw::Spr,
            2000,
            0,
        );
        let a = simulate(&c).unwrap();
        let b = simulate(&c).unwrap();
        assert_eq!(a, b);
        for w in a.records.windows(2) {
            assert_eq!(w[1].backlog, w[0].backlog + w[0].arrivals - w[0].successes);
            assert!(w[0].successes <= w[0].backlog.min(w[0].frame_len));
        }
        let m1 = simulate(&SimConfig {
            law: SuccessLaw::mpr(1).unwrap(),
            ..c.clone()
        })
        .unwrap();
        assert_eq!(a.records, m1.records);
    }

    #[test]
    fn aborts_at_cap() {
        let mut c = cfg(
            FramePolicy::Proportional { alpha: 1.0 },
            ArrivalModel::poisson(0.45).unwrap(),
            SuccessLaw::Spr,
            100_000,
            0,
        );
        c.abort_backlog = 1000;
        let t = simulate(&c).unwrap();
        assert!(t.aborted());
        assert!(t.final_backlog >= 1000);
        assert!(trace_stats(&t, c.law).unwrap().slope > 0.0);
    }

    #[test]
    fn empirical_xi_examples() {
        let e = empirical_xi(0, 3, SuccessLaw::Spr, 10, 1).unwrap();
        assert_eq!(e.distribution.xi, vec![1.0]);
        let e = empirical_xi(3, 2, SuccessLaw::mpr(2).unwrap(), 100_000, 5).unwrap();
        assert!(e.tv_to_exact.unwrap() < 0.01);
        let e = empirical_xi(4, 4, SuccessLaw::Spr, 100_000, 6).unwrap();
        assert!(e.tv_to_exact.unwrap() < 0.01);
    }

    #[test]
    fn replicate_one_run_matches_simulate() {
        let c = cfg(
            FramePolicy::Proportional { alpha: 1.0 },
            ArrivalModel::poisson(0.25).unwrap(),
            SuccessLaw::Spr,
            3000,
            0,
        );
        let r = replicate(&c, 1).unwrap();
        let s = trace_stats(&simulate(&c).unwrap(), c.law).unwrap();
        assert_eq!(r.runs[0].stats, s);
        assert_eq!(r.slope.mean, s.slope);
    }

    #[test]
    fn quantiles_are_monotone() {
        let c = cfg(
            FramePolicy::Proportional { alpha: 1.0 },
            ArrivalModel::poisson(0.3).unwrap(),
            SuccessLaw::Spr,
            5000,
            0,
        );
        let s = trace_stats(&simulate(&c).unwrap(), c.law).unwrap();
        assert!(s.quantiles.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn trace_csv_header() {
        let c = cfg(FramePolicy::Fixed { frame_len: 1 }, ArrivalModel::none(), SuccessLaw::Spr, 2, 1);
        let mut buf = Vec::new();
        simulate(&c).unwrap().write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "frame,backlog,L,arrivals,successes\n0,1,1,0,1\n1,0,1,0,0\n");
    }
}
