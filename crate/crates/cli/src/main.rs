use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ebsmooth::harness::{self, Command};

/// Empirical-Bayes smoothed classification experiments.
#[derive(Parser)]
#[command(name = "ebsmooth", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate train/test splits from the dataset spec.
    GenData(Common),
    /// Fit an energy network with denoising least squares.
    TrainEnergy(Common),
    /// Train the soft classifier (mode from `train.mode`).
    TrainXhat(Common),
    /// Certify every test point.
    Certify(Common),
    /// Certify and aggregate certified accuracy over `pipeline.radii`.
    Curve(Common),
    /// Walk-jump sample from noisy test points.
    WalkJump(Common),
    /// Compare certification against the analytic linear-Gaussian prediction.
    OracleCheck(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; defaults apply when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set confidence.nc=1000000`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    /// `confidence.alpha`
    #[arg(long)]
    alpha: Option<f64>,
    /// `confidence.n0`
    #[arg(long)]
    n0: Option<u64>,
    /// `confidence.nc`
    #[arg(long)]
    nc: Option<u64>,
    /// `attack.epsilon`
    #[arg(long)]
    epsilon: Option<f64>,
    /// `pipeline.estimator`: learned, closed_form or identity
    #[arg(long)]
    estimator: Option<String>,
    /// `train.mode`: xhat, xhat0 or vanilla_smooth
    #[arg(long)]
    mode: Option<String>,
}

impl Common {
    fn overrides(&self) -> Result<Vec<(String, String)>, String> {
        let mut out = Vec::new();
        for s in &self.set {
            let (k, v) = s.split_once('=').ok_or_else(|| format!("--set expects KEY=VALUE, got {s:?}"))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        let quoted = |s: &str| format!("{s:?}");
        let flags: [(&str, Option<String>); 10] = [
            ("seed", self.seed.map(|v| v.to_string())),
            ("sigma", self.sigma.map(|v| format!("{v:?}"))),
            ("output_dir", self.output_dir.as_ref().map(|p| quoted(&p.to_string_lossy()))),
            ("workers", self.workers.map(|v| v.to_string())),
            ("confidence.alpha", self.alpha.map(|v| format!("{v:?}"))),
            ("confidence.n0", self.n0.map(|v| v.to_string())),
            ("confidence.nc", self.nc.map(|v| v.to_string())),
            ("attack.epsilon", self.epsilon.map(|v| format!("{v:?}"))),
            ("pipeline.estimator", self.estimator.as_deref().map(quoted)),
            ("train.mode", self.mode.as_deref().map(quoted)),
        ];
        out.extend(flags.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v))));
        Ok(out)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (cmd, common) = match &cli.command {
        Cmd::GenData(c) => (Command::GenData, c),
        Cmd::TrainEnergy(c) => (Command::TrainEnergy, c),
        Cmd::TrainXhat(c) => (Command::TrainXhat, c),
        Cmd::Certify(c) => (Command::Certify, c),
        Cmd::Curve(c) => (Command::Curve, c),
        Cmd::WalkJump(c) => (Command::WalkJump, c),
        Cmd::OracleCheck(c) => (Command::OracleCheck, c),
    };
    let overrides = match common.overrides() {
        Ok(o) => o,
        Err(e) => {
            log::error!("{e}");
            return ExitCode::from(1);
        }
    };
    let cfg = match &common.config {
        Some(path) => harness::load_config(path, &overrides),
        None => harness::parse_config("", &overrides),
    };
    let result = cfg.and_then(|cfg| harness::run(cmd, &cfg));
    match result {
        Ok(outcome) => {
            log::info!("{}: {}", cmd.name(), outcome.summary);
            for p in &outcome.outputs {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            log::error!("{}: {e}", cmd.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
