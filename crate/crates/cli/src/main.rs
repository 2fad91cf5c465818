mod args;

use std::fs::File;
use std::io::{self, Write};
use std::ops::RangeInclusive;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use serde_json::json;

use args::{ArrivalArgs, Cli, Command, LawArgs, LawKind, OutFormat, PolicyArgs};
use fsa_core::arrivals::ArrivalModel;
use fsa_core::chain::{stationary_distribution, ChainSpec, FramePolicy};
use fsa_core::format::{fmt_sig, round_sig};
use fsa_core::occupancy::{brute_force_xi, xi, SuccessLaw};
use fsa_core::sim::{replicate, simulate, trace_stats, SimConfig, RNG_NAME};
use fsa_core::stability::{
    alpha_star, classify, k2_sup_xi_test, linear_grid, region_sweep, transience_sequence_test, RegimeSpec, Relation,
    XiSource,
};
use fsa_core::validate;

/// Environment variable naming the directory for relative `--output` paths.
const OUTPUT_DIR_ENV: &str = "FSA_OUTPUT_DIR";

enum Failure {
    Usage(String),
    Core(fsa_core::Error),
    /// Ran to completion but some check failed.
    Checks(usize),
}

impl From<fsa_core::Error> for Failure {
    fn from(e: fsa_core::Error) -> Self {
        Failure::Core(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Core(e.into())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Core(e.into())
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn usage<T>(msg: impl Into<String>) -> Outcome<T> {
    Err(Failure::Usage(msg.into()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.render().to_string();
            let msg = msg.trim_start_matches("error: ").trim_end();
            eprintln!("error[usage]: {msg}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error[usage]: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error[{}]: {e}", e.kind());
            match e {
                fsa_core::Error::InvalidParameter(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
        Err(Failure::Checks(n)) => {
            eprintln!("error[check-failed]: {n} check(s) failed");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Outcome {
    if let Some(n) = cli.threads {
        if n == 0 {
            return usage("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    let mut buf = Vec::new();
    let result = dispatch(&cli.command, cli.out, &mut buf);
    // a failed check run still emits its table
    if result.is_ok() || matches!(result, Err(Failure::Checks(_))) {
        emit(&buf, cli.output)?;
    }
    result
}

fn emit(buf: &[u8], output: Option<PathBuf>) -> Outcome {
    match output {
        None => io::stdout().lock().write_all(buf)?,
        Some(path) => {
            let path = match std::env::var_os(OUTPUT_DIR_ENV) {
                Some(dir) if path.is_relative() => PathBuf::from(dir).join(path),
                _ => path,
            };
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            File::create(&path)?.write_all(buf)?;
        }
    }
    Ok(())
}

fn dispatch(cmd: &Command, out: OutFormat, w: &mut Vec<u8>) -> Outcome {
    match cmd {
        Command::Xi {
            law,
            h,
            frame_len,
            brute_force,
        } => cmd_xi(parse_law(law)?, *h, *frame_len, *brute_force, out, w),
        Command::Drift {
            law,
            policy,
            arrivals,
            h_range,
            downward,
        } => {
            let spec = chain_spec(law, policy, arrivals)?;
            cmd_drift(&spec, parse_range(h_range)?, *downward, out, w)
        }
        Command::Region { law, alpha_grid } => cmd_region(law, alpha_grid, out, w),
        Command::AlphaStar { law, tol } => cmd_alpha_star(law, *tol, out, w),
        Command::Chain {
            law,
            policy,
            arrivals,
            n_max,
            stationary,
            tol,
            max_iter,
        } => {
            let spec = chain_spec(law, policy, arrivals)?;
            let chain = spec.build_truncated_chain(*n_max)?;
            if *stationary {
                let st = stationary_distribution(&chain, *tol, *max_iter)?;
                match out {
                    OutFormat::Csv => {
                        writeln!(w, "h,pi")?;
                        for (h, p) in st.pi.iter().enumerate() {
                            writeln!(w, "{h},{}", fmt_sig(*p))?;
                        }
                    }
                    OutFormat::Json => write_json(
                        w,
                        &json!({ "spec": spec, "n_max": n_max, "stationary": st }),
                    )?,
                }
            } else {
                match out {
                    OutFormat::Csv => chain.write_csv(&mut *w)?,
                    OutFormat::Json => {
                        chain.write_json(&mut *w)?;
                        writeln!(w)?;
                    }
                }
            }
            Ok(())
        }
        Command::Transience {
            law,
            policy,
            arrivals,
            theta,
            h_range,
            k2sup,
            k_max,
            h_max,
            exact,
        } => {
            if *k2sup {
                let law = parse_law(law)?;
                let policy = parse_policy(policy)?.unwrap_or(FramePolicy::Sublinear {
                    epsilon: 0.5,
                    scale: 1.0,
                });
                let ks: Vec<usize> = (0..=*k_max).collect();
                let hs: Vec<usize> = (1..=*h_max).collect();
                let source = if *exact { XiSource::Exact } else { XiSource::Poisson };
                let curve = k2_sup_xi_test(law, &policy, &ks, &hs, source)?;
                match out {
                    OutFormat::Csv => {
                        writeln!(w, "k,tau,k2_tau")?;
                        for p in &curve.points {
                            writeln!(w, "{},{},{}", p.k, fmt_sig(p.tau), fmt_sig(p.k2_tau))?;
                        }
                    }
                    OutFormat::Json => write_json(w, &json!({ "law": law, "policy": policy, "curve": curve }))?,
                }
                return Ok(());
            }
            let range = parse_range(h_range)?;
            let spec = chain_spec(law, policy, arrivals)?;
            let chain = spec.build_truncated_chain(*range.end())?;
            let report = transience_sequence_test(&chain, *theta, range)?;
            match out {
                OutFormat::Csv => {
                    writeln!(w, "h,slack,status")?;
                    for r in &report.records {
                        let status = serde_json::to_value(r.status)?;
                        writeln!(w, "{},{},{}", r.h, fmt_sig(r.slack), status.as_str().unwrap_or(""))?;
                    }
                }
                OutFormat::Json => write_json(w, &json!({ "spec": spec, "report": report }))?,
            }
            Ok(())
        }
        Command::Simulate {
            law,
            policy,
            arrivals,
            frames,
            seed,
            runs,
            initial_backlog,
            abort_backlog,
        } => {
            let spec = chain_spec(law, policy, arrivals)?;
            let cfg = SimConfig {
                initial_backlog: *initial_backlog,
                abort_backlog: *abort_backlog,
                ..SimConfig::new(spec.policy, spec.arrivals, spec.law, *frames, *seed)
            };
            cmd_simulate(&cfg, *runs, out, w)
        }
        Command::Validate => {
            let checks = validate::run_all()?;
            match out {
                OutFormat::Csv => {
                    for c in &checks {
                        writeln!(w, "{}", c.line())?;
                    }
                }
                OutFormat::Json => write_json(w, &json!({ "checks": checks }))?,
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            if failed > 0 {
                return Err(Failure::Checks(failed));
            }
            Ok(())
        }
    }
}

fn write_json(w: &mut Vec<u8>, v: &serde_json::Value) -> Outcome {
    serde_json::to_writer_pretty(&mut *w, v)?;
    writeln!(w)?;
    Ok(())
}

fn parse_law(a: &LawArgs) -> Outcome<SuccessLaw> {
    match (a.law, a.m) {
        (LawKind::Spr, None) => Ok(SuccessLaw::Spr),
        (LawKind::Spr, Some(_)) => usage("--M applies only to --law mpr"),
        (LawKind::Mpr, Some(m)) => Ok(SuccessLaw::mpr(m)?),
        (LawKind::Mpr, None) => usage("--law mpr needs --M"),
    }
}

fn parse_policy(p: &PolicyArgs) -> Outcome<Option<FramePolicy>> {
    let policy = if let Some(l) = p.frame_len {
        FramePolicy::Fixed { frame_len: l }
    } else if let Some(alpha) = p.alpha {
        FramePolicy::Proportional { alpha }
    } else if let Some(s) = &p.policy {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |i: usize| -> Outcome<Option<f64>> {
            parts
                .get(i)
                .map(|x| x.parse::<f64>().map_err(|_| Failure::Usage(format!("bad number '{x}' in --policy"))))
                .transpose()
        };
        let need = |i: usize| -> Outcome<f64> { num(i)?.ok_or_else(|| Failure::Usage(format!("--policy {s}: missing parameter"))) };
        if parts.len() > 3 {
            return usage(format!("--policy {s}: too many fields"));
        }
        match parts[0] {
            "fixed" => {
                let l = parts
                    .get(1)
                    .and_then(|x| x.parse::<usize>().ok())
                    .ok_or_else(|| Failure::Usage(format!("--policy {s}: expected fixed:<L>")))?;
                FramePolicy::Fixed { frame_len: l }
            }
            "proportional" => FramePolicy::Proportional { alpha: need(1)? },
            "sublinear" => FramePolicy::Sublinear {
                epsilon: need(1)?,
                scale: num(2)?.unwrap_or(1.0),
            },
            "superlinear" => FramePolicy::Superlinear {
                exponent: need(1)?,
                scale: num(2)?.unwrap_or(1.0),
            },
            other => return usage(format!("unknown policy '{other}'")),
        }
    } else {
        return Ok(None);
    };
    policy.validate()?;
    Ok(Some(policy))
}

fn parse_arrivals(a: &ArrivalArgs) -> Outcome<ArrivalModel> {
    let lambda = || a.lambda.ok_or_else(|| Failure::Usage(format!("--arrivals {} needs --lambda", a.arrivals)));
    Ok(match a.arrivals.as_str() {
        "poisson" => ArrivalModel::poisson(lambda()?)?,
        "bernoulli" => ArrivalModel::bernoulli(lambda()?)?,
        "geometric" => ArrivalModel::geometric(lambda()?)?,
        "none" => ArrivalModel::none(),
        s => match s.strip_prefix("custom:") {
            Some(path) => {
                if a.lambda.is_some() {
                    return usage("--lambda does not apply to custom arrivals");
                }
                ArrivalModel::from_csv_reader(File::open(path)?)?
            }
            None => return usage(format!("unknown arrival law '{s}'")),
        },
    })
}

fn chain_spec(law: &LawArgs, policy: &PolicyArgs, arrivals: &ArrivalArgs) -> Outcome<ChainSpec> {
    let policy = parse_policy(policy)?.unwrap_or(FramePolicy::Proportional { alpha: 1.0 });
    Ok(ChainSpec::new(policy, parse_arrivals(arrivals)?, parse_law(law)?)?)
}

fn parse_range(s: &str) -> Outcome<RangeInclusive<usize>> {
    let parsed = s
        .split_once(':')
        .and_then(|(a, b)| Some((a.trim().parse::<usize>().ok()?, b.trim().parse::<usize>().ok()?)));
    match parsed {
        Some((a, b)) if a <= b => Ok(a..=b),
        _ => usage(format!("bad range '{s}', expected lo:hi with lo <= hi")),
    }
}

fn cmd_xi(law: SuccessLaw, h: usize, l: usize, brute: bool, out: OutFormat, w: &mut Vec<u8>) -> Outcome {
    let d = if brute { brute_force_xi(h, l, law)? } else { xi(h, l, law)? };
    match out {
        OutFormat::Csv => {
            writeln!(w, "k,p")?;
            for (k, p) in d.xi.iter().enumerate() {
                if *p != 0.0 {
                    writeln!(w, "{k},{}", fmt_sig(*p))?;
                }
            }
        }
        OutFormat::Json => write_json(
            w,
            &json!({
                "h": h,
                "L": l,
                "law": law,
                "method": d.method,
                "xi": d.xi.iter().map(|&p| round_sig(p)).collect::<Vec<_>>(),
                "exact": d.exact_strings(),
            }),
        )?,
    }
    Ok(())
}

fn relation_of(policy: &FramePolicy) -> (Relation, Option<f64>) {
    match *policy {
        FramePolicy::Fixed { .. } => (Relation::LittleO, None),
        FramePolicy::Proportional { alpha } => (Relation::Theta, Some(alpha)),
        FramePolicy::Sublinear { .. } => (Relation::PolyLittleO, None),
        FramePolicy::Superlinear { .. } => (Relation::BigO, None),
    }
}

fn cmd_drift(spec: &ChainSpec, hs: RangeInclusive<usize>, downward: bool, out: OutFormat, w: &mut Vec<u8>) -> Outcome {
    let profile = spec.drift_profile(hs, downward)?;
    match out {
        OutFormat::Csv => {
            write!(w, "h,L,alpha,lambda,r_h,drift")?;
            writeln!(w, "{}", if downward { ",downward" } else { "" })?;
            for r in &profile.records {
                write!(
                    w,
                    "{},{},{},{},{},{}",
                    r.h,
                    r.frame_len,
                    fmt_sig(r.alpha),
                    fmt_sig(r.lambda),
                    fmt_sig(r.r_h),
                    fmt_sig(r.drift)
                )?;
                match r.downward {
                    Some(d) => writeln!(w, ",{}", fmt_sig(d))?,
                    None => writeln!(w)?,
                }
            }
        }
        OutFormat::Json => {
            let (relation, alpha) = relation_of(&spec.policy);
            let verdict = classify(&RegimeSpec {
                relation,
                alpha,
                law: spec.law,
                lambda: spec.arrivals.mean(),
                poisson: spec.arrivals.is_poisson(),
            })?;
            write_json(
                w,
                &json!({
                    "spec": spec,
                    "relation": relation,
                    "verdict": verdict,
                    "negative_from": profile.sign_onset(false),
                    "positive_from": profile.sign_onset(true),
                    "bound_violations": profile.bound_violations(),
                    "records": profile.records,
                }),
            )?;
        }
    }
    Ok(())
}

fn cmd_region(law: &LawArgs, grid: &str, out: OutFormat, w: &mut Vec<u8>) -> Outcome {
    let fields: Vec<f64> = grid
        .split(':')
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| Failure::Usage(format!("bad grid '{grid}', expected start:end:step")))?;
    let [start, end, step] = fields[..] else {
        return usage(format!("bad grid '{grid}', expected start:end:step"));
    };
    let alphas = linear_grid(start, end, step)?;
    let capacities = match parse_law(law)? {
        SuccessLaw::Spr => vec![],
        SuccessLaw::Mpr { capacity } => vec![capacity],
    };
    let table = region_sweep(&alphas, &capacities)?;
    match out {
        OutFormat::Csv => table.write_csv(&mut *w)?,
        OutFormat::Json => write_json(w, &serde_json::to_value(&table)?)?,
    }
    Ok(())
}

fn cmd_alpha_star(law: &LawArgs, tol: f64, out: OutFormat, w: &mut Vec<u8>) -> Outcome {
    let m = parse_law(law)?.capacity() as u32;
    let s = alpha_star(m, tol)?;
    match out {
        OutFormat::Csv => {
            writeln!(w, "M,alpha_star,phi_star,bracket_lo,bracket_hi")?;
            writeln!(
                w,
                "{},{},{},{},{}",
                m,
                fmt_sig(s.alpha),
                fmt_sig(s.phi),
                fmt_sig(s.bracket.0),
                fmt_sig(s.bracket.1)
            )?;
        }
        OutFormat::Json => write_json(
            w,
            &json!({
                "M": m,
                "alpha_star": round_sig(s.alpha),
                "phi_star": round_sig(s.phi),
                "bracket": [round_sig(s.bracket.0), round_sig(s.bracket.1)],
                "derivative_sign_change": s.sign_change,
            }),
        )?,
    }
    Ok(())
}

fn cmd_simulate(cfg: &SimConfig, runs: usize, out: OutFormat, w: &mut Vec<u8>) -> Outcome {
    if runs == 0 {
        return usage("--runs must be at least 1");
    }
    if runs == 1 {
        let trace = simulate(cfg)?;
        match out {
            OutFormat::Csv => trace.write_csv(&mut *w)?,
            OutFormat::Json => write_json(
                w,
                &json!({
                    "config": cfg,
                    "rng": RNG_NAME,
                    "status": trace.status,
                    "final_backlog": trace.final_backlog,
                    "stats": trace_stats(&trace, cfg.law)?,
                }),
            )?,
        }
    } else {
        let summary = replicate(cfg, runs)?;
        match out {
            OutFormat::Csv => summary.write_csv(&mut *w)?,
            OutFormat::Json => write_json(w, &serde_json::to_value(&summary)?)?,
        }
    }
    Ok(())
}
