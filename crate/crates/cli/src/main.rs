use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use polymerlab::harness::{self, Command, ExperimentConfig, TITLES};

#[derive(Parser)]
#[command(name = "polymerlab", version, about = "Directed polymer experiments and acceptance checks")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Exact constants, the c_N expansion and the window checks.
    Constants(Common),
    /// c_N estimates against exhaustive enumeration.
    Cn(Common),
    /// First-moment renormalization and shear drift.
    FirstMoment(Common),
    /// Two-point moment against the local-time formula.
    Moment(Common),
    /// Invariance statistics of the Off/Diag/Err functionals.
    Invariance(Common),
    /// Propagator identity on random configurations.
    PropagatorCheck(Common),
    /// Cumulant rates, the factorial-linear bound and total cumulance.
    CumulantBound(Common),
    /// Moment-formula residual and the exponential envelope.
    PropACheck(Common),
    /// Continuum oracle self-consistency.
    Oracle(Common),
    /// Every acceptance criterion.
    All(Common),
}

#[derive(Args)]
struct Common {
    /// JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, env = "POLYMERLAB_OUT")]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, env = "POLYMERLAB_THREADS")]
    threads: Option<usize>,
}

impl Cmd {
    fn split(&self) -> (Command, &Common) {
        match self {
            Cmd::Constants(c) => (Command::Constants, c),
            Cmd::Cn(c) => (Command::Cn, c),
            Cmd::FirstMoment(c) => (Command::FirstMoment, c),
            Cmd::Moment(c) => (Command::Moment, c),
            Cmd::Invariance(c) => (Command::Invariance, c),
            Cmd::PropagatorCheck(c) => (Command::PropagatorCheck, c),
            Cmd::CumulantBound(c) => (Command::CumulantBound, c),
            Cmd::PropACheck(c) => (Command::PropACheck, c),
            Cmd::Oracle(c) => (Command::Oracle, c),
            Cmd::All(c) => (Command::All, c),
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    let (command, common) = cli.command.split();
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::with_seed(1),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let out = common
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(command.name()));
    let (report, artifacts) = harness::run_experiment(command, &cfg)?;
    harness::write_outputs(&out, &report, &artifacts).with_context(|| format!("writing to {}", out.display()))?;
    for (id, ok) in report.criteria() {
        let secs = report.runtime_s.get(&id).copied().unwrap_or(0.0);
        println!("criterion {id:>2} {} {:<36} {secs:.1}s", if ok { "PASS" } else { "FAIL" }, TITLES[id as usize - 1]);
    }
    println!("config {} seed {} -> {}", &report.config_hash[..12], report.seed, out.display());
    Ok(report.pass())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
