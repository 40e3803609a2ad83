use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info};

use pixel_miso::harness::{self, config::parse_snr_list, Algorithm, ExperimentConfig};
use pixel_miso::port_model::PortModel;
use pixel_miso::Result;

/// Joint precoding and antenna coding for multi-user MISO downlinks with
/// pixel antennas at the users.
#[derive(Parser, Debug)]
#[command(name = "pixel-miso", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic port model (impedance and open-circuit patterns)
    GenAntenna {
        #[arg(long, default_value_t = 39)]
        q: usize,
        #[arg(long, default_value_t = 72)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a flat codebook and write it to --out
    TrainCodebook(Common),
    /// Train a hierarchical codebook and write it to --out
    TrainHierarchy(Common),
    /// Run an SNR sweep and write the CSV (stdout without --out)
    Run(Common),
    /// Like `run`, with trials executed one at a time and solve times measured
    Bench(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// key = value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output path
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    algorithm: Option<Algorithm>,
    /// SNR points as start:stop:step or a comma list
    #[arg(long, allow_hyphen_values = true)]
    snr_db: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    /// Extra configuration assignments, key=value
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| pixel_miso::Error::Config(format!("--set expects key=value, got `{kv}`")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(alg) = self.algorithm {
            cfg.algorithm = alg;
        }
        if let Some(snr) = &self.snr_db {
            cfg.snr_db = parse_snr_list(snr)?;
        }
        if let Some(trials) = self.trials {
            cfg.trials = trials;
        }
        Ok(cfg)
    }

    fn required_out(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| pixel_miso::Error::Config("--out is required".into()))
    }
}

fn sweep(common: &Common, bench: bool) -> Result<()> {
    let mut cfg = common.config()?;
    if bench {
        cfg.timing = true;
        cfg.parallel = false;
    }
    let rows = harness::run_sweep(&cfg)?;
    let text = harness::to_csv(&rows);
    match &common.out {
        Some(path) => {
            std::fs::write(path, text)?;
            info!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenAntenna { q, k, seed, out } => {
            if k == 0 {
                return Err(pixel_miso::Error::Config("--k must be at least 1".into()));
            }
            PortModel::synthesize_surrogate(q, k, seed).save(&out)?;
            info!("wrote {}", out.display());
            Ok(())
        }
        Command::TrainCodebook(c) => harness::train_codebook_cmd(&c.config()?, c.required_out()?).map(|_| ()),
        Command::TrainHierarchy(c) => harness::train_hierarchy_cmd(&c.config()?, c.required_out()?).map(|_| ()),
        Command::Run(c) => sweep(&c, false),
        Command::Bench(c) => sweep(&c, true),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::FAILURE
        }
    }
}
