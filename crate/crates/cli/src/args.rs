use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "fsa",
    version,
    about = "Stability analysis and simulation of frame slotted Aloha",
    long_about = "Stability analysis and simulation of frame slotted Aloha with single (SPR) \
                  or multipacket (MPR-M) reception.\n\n\
                  Asymptotic relations follow a nonstandard convention: L = o(h) means L/h -> 0 \
                  and L = O(h) means L/h -> infinity."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = OutFormat::Csv)]
    pub out: OutFormat,

    /// Write output here instead of stdout. Relative paths resolve under
    /// $FSA_OUTPUT_DIR when it is set.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,

    /// Worker threads for parallel sweeps (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LawKind {
    Spr,
    Mpr,
}

#[derive(Debug, Clone, Args)]
pub struct LawArgs {
    /// Reception law: a slot succeeds with exactly one packet (spr) or with
    /// 1..=M packets (mpr).
    #[arg(long, value_enum, default_value_t = LawKind::Spr)]
    pub law: LawKind,

    /// Reception capacity M for --law mpr.
    #[arg(long = "M", value_name = "M")]
    pub m: Option<u32>,
}

#[derive(Debug, Clone, Args)]
#[command(group(ArgGroup::new("frame").args(["frame_len", "alpha", "policy"])))]
pub struct PolicyArgs {
    /// Fixed frame length L.
    #[arg(long = "L", value_name = "L")]
    pub frame_len: Option<usize>,

    /// Frame length proportional to the backlog: L = max(1, round(h / alpha)).
    /// Without any frame flag, alpha = 1.
    #[arg(long)]
    pub alpha: Option<f64>,

    /// Frame policy: fixed:<L>, proportional:<alpha>, sublinear:<eps>[:<scale>]
    /// (L = ceil(scale h^(1-eps))) or superlinear:<exp>[:<scale>]
    /// (L = ceil(scale h^exp), exp > 1).
    #[arg(long)]
    pub policy: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct ArrivalArgs {
    /// Mean arrivals per slot, Lambda (the Bernoulli p for bernoulli).
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: Option<f64>,

    /// Per-slot arrival law: poisson, bernoulli, geometric, none or
    /// custom:<csv of k,probability>.
    #[arg(long, default_value = "poisson")]
    pub arrivals: String,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Distribution xi_h(k) of the number of successful packets when h
    /// packets pick among L slots uniformly at random.
    Xi {
        #[command(flatten)]
        law: LawArgs,
        /// Number of transmitting packets.
        #[arg(long)]
        h: usize,
        /// Frame length.
        #[arg(long = "L", value_name = "L")]
        frame_len: usize,
        /// Count all L^h assignments instead of using the closed forms.
        #[arg(long)]
        brute_force: bool,
    },
    /// Expected drift D_h = L(h) Lambda - r_h of the backlog chain, with the
    /// regime verdict for the frame policy's growth class.
    Drift {
        #[command(flatten)]
        law: LawArgs,
        #[command(flatten)]
        policy: PolicyArgs,
        #[command(flatten)]
        arrivals: ArrivalArgs,
        /// Backlog range lo:hi.
        #[arg(long, default_value = "0:100")]
        h_range: String,
        /// Also compute the backlog-decreasing part d_h- from full rows.
        #[arg(long)]
        downward: bool,
    },
    /// Stability boundaries alpha e^-alpha (SPR) and
    /// Phi(alpha, M) = sum_{x=1..M} e^-alpha alpha^x/(x-1)! (MPR) on a grid.
    Region {
        #[command(flatten)]
        law: LawArgs,
        /// Grid start:end:step.
        #[arg(long, default_value = "0.1:5:0.1")]
        alpha_grid: String,
    },
    /// Maximiser alpha* of Phi(., M), searched on [(M-1)/e, M].
    AlphaStar {
        #[command(flatten)]
        law: LawArgs,
        /// Search tolerance.
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Truncated backlog chain: transition probabilities P_hk as (h, k, p)
    /// triplets, or its stationary distribution.
    Chain {
        #[command(flatten)]
        law: LawArgs,
        #[command(flatten)]
        policy: PolicyArgs,
        #[command(flatten)]
        arrivals: ArrivalArgs,
        /// Largest state kept; higher states are lumped into it.
        #[arg(long, default_value_t = 200)]
        n_max: usize,
        /// Emit the stationary distribution instead of the rows.
        #[arg(long)]
        stationary: bool,
        /// Convergence tolerance for --stationary (L1 change per step).
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[arg(long, default_value_t = 1_000_000)]
        max_iter: usize,
    },
    /// Numeric transience evidence: checks sum_k y_k P_hk <= y_h with
    /// y_i = (i+1)^-theta on a truncated chain, or with --k2sup the curve
    /// k^2 max_{h >= k} xi_hk for a sublinear frame policy.
    Transience {
        #[command(flatten)]
        law: LawArgs,
        #[command(flatten)]
        policy: PolicyArgs,
        #[command(flatten)]
        arrivals: ArrivalArgs,
        #[arg(long, default_value_t = 0.5)]
        theta: f64,
        /// States tested, lo:hi; the chain is built up to hi.
        #[arg(long, default_value = "1:400")]
        h_range: String,
        /// Compute the k^2 sup xi curve instead.
        #[arg(long)]
        k2sup: bool,
        /// Largest k for --k2sup.
        #[arg(long, default_value_t = 30)]
        k_max: usize,
        /// Largest h for --k2sup.
        #[arg(long, default_value_t = 2000)]
        h_max: usize,
        /// Use exact xi for --k2sup instead of the Poisson slot-count approximation.
        #[arg(long)]
        exact: bool,
    },
    /// Monte Carlo simulation of the frame recursion X' = X + N - C.
    Simulate {
        #[command(flatten)]
        law: LawArgs,
        #[command(flatten)]
        policy: PolicyArgs,
        #[command(flatten)]
        arrivals: ArrivalArgs,
        #[arg(long, default_value_t = 10_000)]
        frames: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Independent runs with seeds seed, seed+1, ...
        #[arg(long, default_value_t = 1)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        initial_backlog: usize,
        /// Stop a run once the backlog reaches this value.
        #[arg(long, default_value_t = 1_000_000)]
        abort_backlog: usize,
    },
    /// Closed forms against brute-force enumeration plus structural
    /// invariants; prints one PASS/FAIL line per check.
    Validate,
}
