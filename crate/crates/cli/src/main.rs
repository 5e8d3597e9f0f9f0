use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;

use config::RunConfig;

#[derive(Debug, Parser)]
#[command(
    name = "covcop",
    version,
    about = "Covariate-dependent Joe-Clayton copula models with split-t margins"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat TOML file of run settings.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    chains: Option<usize>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a model by MCMC and write draws and summaries.
    Fit,
    /// Draw a synthetic data set from known coefficients.
    Simulate,
    /// Log predictive score of the held-out data under saved draws.
    Eval,
    /// Build and cache the τ lookup table.
    TauTable,
    /// Empirical copula of the return pairs on a regular grid.
    EmpiricalCopula,
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub msg: String,
}

impl CliError {
    pub fn config(msg: String) -> Self {
        Self { code: 2, msg }
    }

    pub fn data(msg: String) -> Self {
        Self { code: 3, msg }
    }

    pub fn output(msg: String) -> Self {
        Self { code: 1, msg }
    }
}

impl From<covcop::Error> for CliError {
    fn from(e: covcop::Error) -> Self {
        use covcop::Error as E;
        let code = match e {
            E::Config(_) => 2,
            E::Data(_) | E::Format(_) | E::Io(_) | E::Csv(_) => 3,
            _ => 4,
        };
        Self {
            code,
            msg: e.to_string(),
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(c) = cli.chains {
        cfg.chains = c;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    cfg.validate()?;
    if cfg.threads > 0 {
        // fails only if a pool exists already, which then stays in use
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global();
    }
    std::fs::create_dir_all(&cli.out).map_err(|e| CliError::output(format!("{}: {e}", cli.out.display())))?;
    commands::write_text(&cli.out.join("config.resolved.toml"), &cfg.to_toml())?;
    match cli.command {
        Command::Fit => commands::fit(&cfg, &cli.out),
        Command::Simulate => commands::simulate(&cfg, &cli.out),
        Command::Eval => commands::eval(&cfg, &cli.out),
        Command::TauTable => commands::tau_table(&cfg, &cli.out),
        Command::EmpiricalCopula => commands::empirical_copula(&cfg, &cli.out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.msg);
            ExitCode::from(e.code)
        }
    }
}
