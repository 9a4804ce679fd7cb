use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use projgan_cli::config::documented_defaults;
use projgan_cli::verify::{cmd_verify, Suite};
use projgan_cli::{project, train, CliError, CliResult, ConfigError, RunConfig};

#[derive(Parser)]
#[command(name = "projgan", about = "GAN training against projected discriminators, plus oracle checks")]
struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one key; repeatable, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Shorthand for `--set seed=<u64>`, applied last.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and write metrics, checkpoints and sample dumps.
    Train,
    /// Run oracle suites: thm1, volume, residual, gradcheck or all.
    Verify { suite: String },
    /// Project an IDX or CSV input with every operator of the configured bank.
    Project { input: PathBuf },
    /// Print every config key with its default.
    Defaults,
}

fn resolve(cli: &Cli) -> Result<RunConfig, ConfigError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for pair in &cli.set {
        cfg.apply_override(pair)?;
    }
    if let Some(seed) = cli.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> CliResult<()> {
    let cfg = resolve(cli)?;
    match &cli.command {
        Command::Train => train::cmd_train(&cfg, &cli.out),
        Command::Verify { suite } => {
            let suite = Suite::parse(suite).ok_or_else(|| {
                CliError::Input(format!("unknown suite `{suite}` (thm1, volume, residual, gradcheck, all)"))
            })?;
            cmd_verify(suite, &cfg, &cli.out)
        }
        Command::Project { input } => {
            for path in project::cmd_project(&cfg, input, &cli.out)? {
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::Defaults => {
            print!("{}", documented_defaults());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
