//! `futrl`: synthetic data, training, walk-forward backtests and reports for
//! deep RL futures trading.

mod config;
mod pipeline;
mod report;
mod svg;
mod universe;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{ConfigError, RunConfig};
use pipeline::Ctx;

#[derive(Parser)]
#[command(name = "futrl", version, about = "Deep RL trading for daily futures")]
struct Cli {
    /// TOML config file (dotted keys); built-in defaults when omitted.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set reward.sigma_tgt=0.1`. Repeatable; wins over the file.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output directory.
    #[arg(short, long, global = true, env = "FUTRL_OUT", default_value = "futrl-out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic universe as CSV files.
    Synth {
        /// Data seed (same as `--set synthetic.seed=N`).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Dump state features per contract.
    Features,
    /// Train every configured agent per asset class and walk-forward split.
    Train,
    /// Backtest trained agents and baselines over the test years.
    Backtest,
    /// Cost-rate sensitivity sweep.
    Sweep,
    /// Render tables and plots from the emitted CSVs.
    Report,
    /// Everything above in order.
    Run,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::Features => "features",
            Command::Train => "train",
            Command::Backtest => "backtest",
            Command::Sweep => "sweep",
            Command::Report => "report",
            Command::Run => "run",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut overrides = cli.overrides.clone();
    if let Command::Synth { seed: Some(seed) } = &cli.command {
        overrides.push(format!("synthetic.seed={seed}"));
    }
    let cfg = match RunConfig::load(cli.config.as_deref(), &overrides) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    let ctx = Ctx {
        cfg,
        out: cli.out.clone(),
        command: cli.command.name().to_string(),
    };
    let result = match cli.command {
        Command::Synth { .. } => pipeline::synth(&ctx),
        Command::Features => pipeline::features(&ctx),
        Command::Train => pipeline::train(&ctx),
        Command::Backtest => pipeline::backtest(&ctx),
        Command::Sweep => pipeline::sweep(&ctx),
        Command::Report => pipeline::render(&ctx),
        Command::Run => pipeline::run_all(&ctx),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let config = e.chain().any(|c| {
                c.downcast_ref::<ConfigError>().is_some()
                    || matches!(c.downcast_ref::<futrl::Error>(), Some(futrl::Error::Config(_)))
            });
            eprintln!("error: {e:#}");
            ExitCode::from(if config { 2 } else { 1 })
        }
    }
}
