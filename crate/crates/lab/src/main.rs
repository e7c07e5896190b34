use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use lab::{Eta, ExperimentConfig};
use polab::actor::UpdateRule;
use polab::critic::OracleKind;
use polab::NormPair;

/// Offline actor-critic experiments with exact tabular evaluation.
#[derive(Parser)]
#[command(name = "lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write trace.csv, summary.json and plot.svg.
    Run(RunArgs),
    /// Recompute the verdicts of an output directory from its trace.
    Check {
        dir: PathBuf,
    },
    /// List the registered experiments.
    List,
}

#[derive(Args)]
struct RunArgs {
    experiment: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Iterations (or instances, for the randomized suites).
    #[arg(long)]
    k: Option<usize>,
    /// Sample size; exhaustive weighting when omitted.
    #[arg(long)]
    n: Option<usize>,
    /// `auto` for the regret-tuned step size, or a positive number.
    #[arg(long)]
    eta: Option<Eta>,
    /// Output directory [default: out/<experiment>].
    #[arg(long)]
    out: Option<PathBuf>,
    /// pspi | cmd | lspu-ols | lspu-sgd | drpu-linf | drpu-chi2 | mean-match
    #[arg(long)]
    update: Option<UpdateRule>,
    /// l2 | l1linf | linfl1 (primal norm first)
    #[arg(long)]
    norm: Option<NormPair>,
    /// exact | perturbed
    #[arg(long)]
    oracle: Option<OracleKind>,
    /// Density-ratio budget C.
    #[arg(long)]
    c: Option<f64>,
    /// Chi-square budget C2.
    #[arg(long)]
    c2: Option<f64>,
    /// MDP description in TOML (exp_template only).
    #[arg(long)]
    mdp: Option<PathBuf>,
    /// Record per-iteration wall-clock time (makes trace.csv nondeterministic).
    #[arg(long)]
    wallclock: bool,
    #[arg(long, short)]
    verbose: bool,
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::defaults_for(&self.experiment)?;
        if let Some(x) = self.seed {
            cfg.seed = x;
        }
        if let Some(x) = self.k {
            cfg.k = x;
        }
        if self.n.is_some() {
            cfg.n = self.n;
        }
        if let Some(x) = self.eta {
            cfg.eta = x;
        }
        if self.update.is_some() {
            cfg.update = self.update;
        }
        if let Some(x) = self.norm {
            cfg.norm = x;
        }
        if let Some(x) = self.oracle {
            cfg.oracle = x;
        }
        if let Some(x) = self.c {
            cfg.c = x;
        }
        if let Some(x) = self.c2 {
            cfg.c2 = x;
        }
        if self.mdp.is_some() {
            cfg.mdp = self.mdp.clone();
        }
        cfg.wallclock = self.wallclock;
        Ok(cfg)
    }
}

fn run(args: &RunArgs) -> Result<ExitCode> {
    let cfg = args.config()?;
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("out").join(&cfg.experiment));
    let started = Instant::now();
    let outcome = lab::run(&cfg)?;
    outcome.write(&out)?;
    if args.verbose {
        eprintln!(
            "{}: {} rows in {:.3} s, written to {}",
            cfg.experiment,
            outcome.trace.len(),
            started.elapsed().as_secs_f64(),
            out.display()
        );
    }
    for v in &outcome.verdicts {
        println!("{v}");
    }
    Ok(report_failures(outcome.failed().iter().map(|v| v.metric.as_str())))
}

fn check(dir: &std::path::Path) -> Result<ExitCode> {
    let report = lab::check(dir)?;
    for v in &report.verdicts {
        println!("{v}");
    }
    if !report.mismatches.is_empty() {
        anyhow::bail!("summary.json disagrees with trace.csv on: {}", report.mismatches.join(", "));
    }
    Ok(report_failures(report.verdicts.iter().filter(|v| !v.pass).map(|v| v.metric.as_str())))
}

fn report_failures<'a>(failed: impl Iterator<Item = &'a str>) -> ExitCode {
    let failed: Vec<&str> = failed.collect();
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        eprintln!("failed criteria: {}", failed.join(", "));
        ExitCode::from(2)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => run(args),
        Command::Check { dir } => check(dir),
        Command::List => {
            for e in lab::registry() {
                println!("{:<18} {}\n{:<18} options: {}", e.id, e.about, "", e.options);
            }
            Ok(ExitCode::SUCCESS)
        }
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(1)
    })
}
