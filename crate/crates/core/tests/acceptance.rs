use std::f64::consts::E;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use fsa_core::arrivals::ArrivalModel;
use fsa_core::chain::{stationary_distribution, ChainSpec, FramePolicy};
use fsa_core::format::fmt_sig;
use fsa_core::occupancy::SuccessLaw;
use fsa_core::sim::{backlog_histogram, empirical_xi, replicate, replicate_with, SimConfig};
use fsa_core::stability::{alpha_star, phi, transience_sequence_test};
use fsa_core::validate;
use fsa_core::Result;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn run(id: u32, name: &str, budget: Option<Duration>, f: impl FnOnce() -> Result<Outcome>) -> bool {
    let t = Instant::now();
    let res = f();
    let elapsed = t.elapsed();
    let (mut passed, mut detail) = match res {
        Ok(o) => (o.passed, o.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    if let Some(b) = budget {
        if elapsed > b {
            passed = false;
            detail.push_str(&format!("; over budget {b:?}"));
        }
    }
    println!(
        "{} {id:>2} {name:<28} {detail} ({:.2}s)",
        if passed { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    passed
}

fn check(c: validate::Check) -> Outcome {
    outcome(
        c.passed,
        format!("observed={} limit={} {}", fmt_sig(c.observed), fmt_sig(c.limit), c.detail),
    )
}

const FRAMES: usize = 100_000;
const RUNS: usize = 20;
const CAP: usize = 10_000;

fn sim_config(alpha: f64, lambda: f64, law: SuccessLaw, seed: u64) -> Result<SimConfig> {
    Ok(SimConfig {
        abort_backlog: CAP,
        ..SimConfig::new(
            FramePolicy::Proportional { alpha },
            ArrivalModel::poisson(lambda)?,
            law,
            FRAMES,
            seed,
        )
    })
}

/// Stable signature: no aborts, second-half slope below 1e-3 in magnitude,
/// at least one return to zero in every run.
fn stable_signature(cfg: &SimConfig) -> Result<Outcome> {
    let s = replicate(cfg, RUNS)?;
    let worst_slope = s.runs.iter().map(|r| r.stats.slope.abs()).fold(0.0, f64::max);
    let min_returns = s.runs.iter().map(|r| r.stats.returns_to_zero).min().unwrap_or(0);
    Ok(outcome(
        s.aborted == 0 && worst_slope < 1e-3 && min_returns >= 1,
        format!(
            "Lambda={} aborted={}/{RUNS} max|slope|={} min returns={min_returns}",
            fmt_sig(cfg.arrivals.mean()),
            s.aborted,
            fmt_sig(worst_slope)
        ),
    ))
}

/// Unstable signature: at least 19 of 20 runs reach the cap and the mean
/// slope is positive.
fn unstable_signature(cfg: &SimConfig) -> Result<Outcome> {
    let s = replicate(cfg, RUNS)?;
    Ok(outcome(
        s.aborted >= 19 && s.slope.mean > 0.0,
        format!(
            "Lambda={} aborted={}/{RUNS} mean slope={}",
            fmt_sig(cfg.arrivals.mean()),
            s.aborted,
            fmt_sig(s.slope.mean)
        ),
    ))
}

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let mut ok = true;

    ok &= run(1, "oracle equivalence", Some(secs(30)), || {
        Ok(check(validate::oracle_equivalence(6, &[1, 2, 3])?))
    });

    ok &= run(2, "mean identities", None, || Ok(check(validate::mean_identities(6, &[1, 2, 3])?)));

    ok &= run(3, "stability maximisers", Some(secs(1)), || {
        let s = alpha_star(1, 1e-10)?;
        let da = (s.alpha - 1.0).abs();
        let dp = (s.phi - 1.0 / E).abs();
        let brackets = validate::alpha_star_brackets(2..=10)?;
        Ok(outcome(
            da <= 1e-8 && dp <= 1e-10 && brackets.passed,
            format!(
                "|alpha*-1|={} |phi*-1/e|={} M=2..10 in bracket: {}",
                fmt_sig(da),
                fmt_sig(dp),
                brackets.passed
            ),
        ))
    });

    ok &= run(4, "mpr gain band", Some(secs(1)), || {
        let mut lo = f64::INFINITY;
        let mut inside = true;
        for m in 3..=12u32 {
            let g = phi(1.0, m)? * E;
            lo = lo.min(g);
            inside &= g >= 2.5 - 1e-12 && g <= 3.0 - 1.0 / m as f64;
        }
        Ok(outcome(inside, format!("M=3..12 min ratio={}", fmt_sig(lo))))
    });

    ok &= run(5, "drift sign windows", Some(secs(10)), || {
        let a = validate::drift_sign_window(0.25, 20..=2000)?;
        let b = validate::drift_sign_window(0.45, 20..=2000)?;
        Ok(outcome(
            a.passed && b.passed,
            format!("misses at 0.25: {}, at 0.45: {}", a.observed, b.observed),
        ))
    });

    ok &= run(6, "spr simulation signatures", Some(secs(120)), || {
        let st = stable_signature(&sim_config(1.0, 0.25, SuccessLaw::Spr, 1_000)?)?;
        let un = unstable_signature(&sim_config(1.0, 0.45, SuccessLaw::Spr, 2_000)?)?;
        Ok(outcome(st.passed && un.passed, format!("{}; {}", st.detail, un.detail)))
    });

    ok &= run(7, "mpr simulation signatures", Some(secs(120)), || {
        let s = alpha_star(3, 1e-10)?;
        let law = SuccessLaw::Mpr { capacity: 3 };
        let st = stable_signature(&sim_config(s.alpha, 0.9 * s.phi, law, 3_000)?)?;
        let un = unstable_signature(&sim_config(s.alpha, 1.1 * s.phi, law, 4_000)?)?;
        Ok(outcome(
            st.passed && un.passed,
            format!("alpha*={}; {}; {}", fmt_sig(s.alpha), st.detail, un.detail),
        ))
    });

    ok &= run(8, "chain vs simulator", None, || {
        let spec = ChainSpec::new(
            FramePolicy::Proportional { alpha: 1.0 },
            ArrivalModel::poisson(0.25)?,
            SuccessLaw::Spr,
        )?;
        let chain = spec.build_truncated_chain(200)?;
        let st = stationary_distribution(&chain, 1e-13, 1_000_000)?;
        let cfg = sim_config(1.0, 0.25, SuccessLaw::Spr, 5_000)?;
        let hists = replicate_with(&cfg, RUNS, |t| Ok(backlog_histogram(t, FRAMES - 50_000)))?;
        let mut pooled = vec![0u64; st.pi.len()];
        for h in &hists {
            if h.len() > pooled.len() {
                pooled.resize(h.len(), 0);
            }
            for (i, c) in h.iter().enumerate() {
                pooled[i] += c;
            }
        }
        let n: u64 = pooled.iter().sum();
        let tv = 0.5
            * (0..pooled.len().max(st.pi.len()))
                .map(|i| {
                    let p = st.pi.get(i).copied().unwrap_or(0.0);
                    let q = pooled.get(i).copied().unwrap_or(0) as f64 / n as f64;
                    (p - q).abs()
                })
                .sum::<f64>();
        Ok(outcome(tv < 0.05, format!("TV={} over {n} frames", fmt_sig(tv))))
    });

    ok &= run(9, "transience evidence", None, || {
        let spec = ChainSpec::new(
            FramePolicy::Proportional { alpha: 1.0 },
            ArrivalModel::poisson(0.45)?,
            SuccessLaw::Spr,
        )?;
        let chain = spec.build_truncated_chain(400)?;
        let r = transience_sequence_test(&chain, 0.5, 1..=400)?;
        Ok(outcome(
            r.evidence,
            format!(
                "holds from h={} to 400, min slack={}",
                r.holds_from.map_or("none".into(), |h| h.to_string()),
                r.min_slack.map_or("none".into(), fmt_sig)
            ),
        ))
    });

    ok &= run(10, "empirical xi", None, || {
        let a = empirical_xi(3, 2, SuccessLaw::Mpr { capacity: 2 }, 100_000, 6_000)?;
        let b = empirical_xi(4, 4, SuccessLaw::Spr, 100_000, 6_001)?;
        let (ta, tb) = (a.tv_to_exact.unwrap_or(1.0), b.tv_to_exact.unwrap_or(1.0));
        Ok(outcome(
            ta < 0.01 && tb < 0.01,
            format!("TV(3,2,M2)={} TV(4,4,SPR)={}", fmt_sig(ta), fmt_sig(tb)),
        ))
    });

    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
