use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nkem::recon::Method;
use nkem_cli::{exit_code, ConfigError, Experiment, ExperimentConfig};

#[derive(Parser)]
#[command(name = "nkem", version, about = "Kernel EM and neural KEM reconstruction experiments")]
struct Cli {
    /// Experiment config (TOML); built-in desk-scale defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the experiment seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config's `out_dir`.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Label map, time-activity curves and true frames.
    Phantom,
    /// Poisson realizations of the dynamic study.
    Simulate,
    /// Composite priors and kernel matrices.
    BuildKernel,
    /// Reconstructs the configured frames and realizations.
    Recon {
        /// Method to run; repeatable. Defaults to the config's list.
        #[arg(long = "method", value_parser = parse_method)]
        methods: Vec<Method>,
    },
    /// MSE and ROI bias/SD tables.
    Eval,
    /// Figure-style tables and PGM images.
    Report,
    /// Every stage in order.
    Run,
    /// Prints the effective configuration.
    Config,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: nkem::Error| e.to_string())
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::desk(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = load_config(&cli)?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(ConfigError("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let out_dir = cli.out_dir.clone().or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("nkem-out"));
    std::fs::create_dir_all(&out_dir)?;
    let exp = Experiment::new(cfg, out_dir);
    match cli.command {
        Command::Phantom => exp.phantom(),
        Command::Simulate => exp.simulate(),
        Command::BuildKernel => exp.build_kernel(),
        Command::Recon { methods } => {
            let methods = if methods.is_empty() { exp.cfg.recon.methods.clone() } else { methods };
            exp.recon(&methods)
        }
        Command::Eval => exp.eval().map(|_| ()),
        Command::Report => exp.report(),
        Command::Run => exp.run_all().map(|_| ()),
        Command::Config => {
            print!("{}", exp.cfg.to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
