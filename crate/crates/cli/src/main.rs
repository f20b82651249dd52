use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use log::info;

use fairgfl_cli::{parse_config, run_suite, SimConfig, SuiteKind};

#[derive(Parser)]
#[command(name = "sim", version, about = "Federated learning over overlapping subgraphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment suite and write its results to a directory.
    Run(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// Flat key = value config file; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// motivation, compare, privacy-sweep, overlap-sweep or single.
    #[arg(long, default_value = "single")]
    suite: SuiteKind,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of consecutive seeds to run.
    #[arg(long)]
    seeds: Option<usize>,
    /// fairgfl, fedavg or qfedavg.
    #[arg(long)]
    algorithm: Option<String>,
    /// Upload unperturbed encodings (infinite privacy budget).
    #[arg(long)]
    no_ldp: bool,
    /// Average raw parameters instead of updates in the fair rule.
    #[arg(long)]
    literal_eq17: bool,
    /// Normalize the fairness weights to sum to one.
    #[arg(long)]
    renormalize: bool,
    /// paper or corrected.
    #[arg(long)]
    estimator: Option<String>,
    #[arg(long)]
    epsilon_a: Option<f64>,
    #[arg(long)]
    epsilon_b: Option<f64>,
    /// Grid resolution p of the node mechanism.
    #[arg(long)]
    quantiles: Option<usize>,
    #[arg(long)]
    encoder_dim: Option<usize>,
    /// on or off.
    #[arg(long)]
    permanent_cache: Option<String>,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn resolve(args: &RunArgs) -> anyhow::Result<SimConfig> {
    let mut cfg = match &args.config {
        Some(path) => parse_config(path).with_context(|| format!("loading {}", path.display()))?,
        None => SimConfig::default(),
    };
    let mut pairs: Vec<(&str, String)> = Vec::new();
    if let Some(v) = args.seed {
        pairs.push(("seed", v.to_string()));
    }
    if let Some(v) = args.seeds {
        pairs.push(("seeds", v.to_string()));
    }
    if let Some(v) = &args.algorithm {
        pairs.push(("algorithm", v.clone()));
    }
    if args.no_ldp {
        pairs.push(("ldp", "off".into()));
    }
    if args.literal_eq17 {
        pairs.push(("literal_eq17", "on".into()));
    }
    if args.renormalize {
        pairs.push(("renormalize", "on".into()));
    }
    if let Some(v) = &args.estimator {
        pairs.push(("estimator", v.clone()));
    }
    if let Some(v) = args.epsilon_a {
        pairs.push(("epsilon_a", v.to_string()));
    }
    if let Some(v) = args.epsilon_b {
        pairs.push(("epsilon_b", v.to_string()));
    }
    if let Some(v) = args.quantiles {
        pairs.push(("quantiles", v.to_string()));
    }
    if let Some(v) = args.encoder_dim {
        pairs.push(("encoder_dim", v.to_string()));
    }
    if let Some(v) = &args.permanent_cache {
        pairs.push(("permanent_cache", v.clone()));
    }
    for (k, v) in pairs {
        cfg.set(k, &v)?;
    }
    for o in &args.overrides {
        cfg.apply_override(o)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let Command::Run(args) = cli.command;

    let cfg = match resolve(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    match run_suite(args.suite, &cfg, &args.out) {
        Ok(report) => {
            for (group, n, [loss, acc, var, ent]) in report.means() {
                info!("{group} ({n} runs): test_loss {loss:.4} test_acc {acc:.4} loss_var {var:.5} loss_entropy {ent:.4}");
            }
            let failed = report.failures();
            if failed > 0 {
                eprintln!("error: {failed} of {} runs failed, see summary.csv", report.runs.len());
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
