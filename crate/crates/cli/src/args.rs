use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "liftlab", version, about = "Exact experiments for query-to-communication lifting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,

    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,

    /// Add wall-clock timing to the report (makes it non-reproducible).
    #[arg(long, global = true)]
    pub timing: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Exact,
    Sample,
}

#[derive(Args, Debug, Clone)]
pub struct GadgetArgs {
    /// Gadget file (`gadget v1`).
    #[arg(long, required_unless_present = "builtin", conflicts_with = "builtin")]
    pub gadget: Option<PathBuf>,

    /// Built-in gadget: `xor:Q`, `and:Q`, `const:Q:B`, `ip:Q:D` or `random:Q:SEED`.
    #[arg(long)]
    pub builtin: Option<String>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ConstArgs {
    /// Constants profile: `det-paper` or `rand-paper`.
    #[arg(long)]
    pub profile: Option<String>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Message-cost halting threshold as `PER_ROUND,PER_DELTA`.
    #[arg(long)]
    pub kmsg: Option<String>,
    /// Partition-cost halting threshold as `PER_ROUND,PER_DELTA`.
    #[arg(long)]
    pub kprt: Option<String>,
    /// Refuse instances outside the regime `Δ ≥ c·log n`.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Exact discrepancy of a gadget, optionally under product weights.
    Disc {
        #[command(flatten)]
        gadget: GadgetArgs,
        /// Row weights as comma-separated rationals.
        #[arg(long, requires = "mu_y")]
        mu_x: Option<String>,
        #[arg(long, requires = "mu_x")]
        mu_y: Option<String>,
    },
    /// Reduce product-distribution discrepancy to uniform discrepancy of a blown-up gadget.
    ReduceProduct {
        #[command(flatten)]
        gadget: GadgetArgs,
        #[arg(long)]
        mu_x: String,
        #[arg(long)]
        mu_y: String,
        /// Treat the weights as reals and round them within this distance.
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Classify one value `x` against a support `Y`.
    Classify {
        #[command(flatten)]
        gadget: GadgetArgs,
        /// Support file (`support v1`).
        #[arg(long)]
        support: PathBuf,
        /// Comma-separated symbols of `x`.
        #[arg(long)]
        x: String,
        /// Sparsity slack for the sparsifying test.
        #[arg(long, default_value_t = 2.0)]
        eps: f64,
        #[command(flatten)]
        constants: ConstArgs,
    },
    /// Mass of unsafe values of `X` against `2^{-γΔ}`.
    Mainlemma {
        #[command(flatten)]
        gadget: GadgetArgs,
        #[arg(long)]
        x_support: PathBuf,
        #[arg(long)]
        y_support: PathBuf,
        #[command(flatten)]
        constants: ConstArgs,
    },
    /// Deterministic simulation of a protocol by a decision tree.
    LiftDet {
        #[command(flatten)]
        gadget: GadgetArgs,
        /// Protocol file (`protocol v1`, one tree).
        #[arg(long)]
        protocol: PathBuf,
        /// Search problem file; enables the output check.
        #[arg(long)]
        problem: Option<PathBuf>,
        /// A single input `z` as a bit string; all of `{0,1}^n` when absent.
        #[arg(long)]
        z: Option<String>,
        /// Also build and print the full simulating decision tree.
        #[arg(long)]
        full_tree: bool,
        #[command(flatten)]
        constants: ConstArgs,
    },
    /// Randomized simulation: exact transcript distribution or sampled runs.
    LiftRand {
        #[command(flatten)]
        gadget: GadgetArgs,
        #[arg(long)]
        protocol: PathBuf,
        #[arg(long)]
        z: String,
        #[arg(long, value_enum, default_value_t = Mode::Exact)]
        mode: Mode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long)]
        max_branches: Option<usize>,
        /// Include every enumerated branch in the report.
        #[arg(long)]
        branches: bool,
        #[command(flatten)]
        constants: ConstArgs,
    },
    /// Check the counterexample parameters analytically or by brute force.
    Counterexample {
        #[arg(long, required_unless_present = "toy", conflicts_with = "toy")]
        b: Option<u64>,
        /// Toy instance `b,d,isize,n`.
        #[arg(long)]
        toy: Option<String>,
    },
    /// Erlang tail `Pr[Erl(k, λ) > t]`, a single bound check, or the full sweep.
    Erlang {
        #[arg(long, required_unless_present = "sweep")]
        k: Option<u64>,
        /// Rate; defaults to ln 2.
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, conflicts_with = "delta")]
        t: Option<f64>,
        /// Use `t = 5k + 2Δ` and compare against `2^{-Δ}`.
        #[arg(long)]
        delta: Option<f64>,
        /// Check `k ∈ [1,100]`, `Δ ∈ [20,200]`.
        #[arg(long)]
        sweep: bool,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Disc { .. } => "disc",
            Command::ReduceProduct { .. } => "reduce-product",
            Command::Classify { .. } => "classify",
            Command::Mainlemma { .. } => "mainlemma",
            Command::LiftDet { .. } => "lift-det",
            Command::LiftRand { .. } => "lift-rand",
            Command::Counterexample { .. } => "counterexample",
            Command::Erlang { .. } => "erlang",
        }
    }
}
