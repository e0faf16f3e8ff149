use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use roughfolio::lab::commands;
use roughfolio::lab::Config;

#[derive(Parser)]
#[command(name = "roughfolio", version, about = "Pathwise log-optimal portfolios on rough paths")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Extra `key=value` settings, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct NoiseFlags {
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long = "T")]
    horizon: Option<f64>,
    #[arg(long)]
    level: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a driving path; `--out` ending in `.csv` writes that file directly.
    GenNoise {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        noise: NoiseFlags,
    },
    /// Lift the noise and report its bracket, rough norm and lift diagnostic.
    Lift(Common),
    /// Solve for the price path of the configured family.
    Solve(Common),
    /// Build the log-optimal portfolio along the model's price path.
    Portfolio(Common),
    /// Sweep the drift perturbation size.
    Stability(Common),
    /// Sweep the rebalancing partition level.
    Discretize(Common),
    /// Run the deterministic self-test battery.
    Selftest(Common),
}

fn load(common: &Common) -> roughfolio::Result<Config> {
    let mut cfg = match &common.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| roughfolio::Error::Config(format!("--set {kv}: expected key=value")))?;
        cfg.set(k.trim(), v.trim());
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, common, noise) = match &cli.command {
        Command::GenNoise { common, noise } => ("gen-noise", common, Some(noise)),
        Command::Lift(c) => ("lift", c, None),
        Command::Solve(c) => ("solve", c, None),
        Command::Portfolio(c) => ("portfolio", c, None),
        Command::Stability(c) => ("stability", c, None),
        Command::Discretize(c) => ("discretize", c, None),
        Command::Selftest(c) => ("selftest", c, None),
    };
    let result = load(common).and_then(|mut cfg| {
        if let Some(n) = noise {
            if let Some(v) = &n.kind {
                cfg.set("noise", v);
            }
            if let Some(v) = n.d {
                cfg.set("d", v);
            }
            if let Some(v) = n.horizon {
                cfg.set("horizon", v);
            }
            if let Some(v) = n.level {
                cfg.set("level", v);
            }
            if let Some(v) = n.seed {
                cfg.set("seed", v);
            }
        }
        commands::run(name, &cfg, &common.out)
    });
    match result {
        Ok(report) => {
            for w in &report.windows {
                println!("{} {}: {}", if w.passed { "PASS" } else { "FAIL" }, w.name, w.detail);
            }
            if report.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
