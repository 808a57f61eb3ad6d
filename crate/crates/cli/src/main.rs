use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use glcert_cli::commands::summary_line;
use glcert_cli::config::split_pair;
use glcert_cli::{CliError, CliResult, RunConfig};

#[derive(Parser)]
#[command(
    name = "glcert",
    version,
    about = "Certify classifiers against semantic image transforms"
)]
struct Cli {
    /// Configuration file (`key = value` lines).
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Override a configuration key, e.g. `--set smoothing.sigma=0`.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = split_pair, global = true)]
    overrides: Vec<(String, String)>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic four-class dataset to data.images / data.labels.
    Synth,
    /// Train the built-in classifier and save it to model.path.
    Train,
    /// Build the bound table and certifier.
    Bounds,
    /// Certify one image over the attack box (or at --beta).
    Certify {
        #[arg(long)]
        index: usize,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        beta: Option<Vec<f64>>,
    },
    /// Certified robust accuracy over the dataset.
    Cra,
    /// CRA per point of a 1D/2D parameter grid.
    Heatmap,
    /// Export the ξ and p curves.
    XiExport,
}

fn run(cli: Cli) -> CliResult<()> {
    let text = match &cli.config {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?,
        None => String::new(),
    };
    let cfg = RunConfig::from_text(&text, &cli.overrides)?;
    log::info!("config digest {}", cfg.digest);
    match cli.command {
        Command::Synth => {
            let (images, labels) = glcert_cli::cmd_synth(&cfg)?;
            println!("{}\n{}", images.display(), labels.display());
        }
        Command::Train => {
            println!("epoch,loss,acc");
            let path = glcert_cli::cmd_train(&cfg, |s| println!("{},{},{}", s.epoch, s.loss, s.accuracy))?;
            eprintln!("saved {}", path.display());
        }
        Command::Bounds => println!("{}", glcert_cli::cmd_bounds(&cfg)?.display()),
        Command::Certify { index, beta } => {
            let out = glcert_cli::cmd_certify(&cfg, index, beta.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&out).map_err(glcert::Error::from)?);
        }
        Command::Cra => {
            let (path, summary) = glcert_cli::cmd_cra(&cfg)?;
            println!("{}", summary_line(&summary));
            eprintln!("wrote {}", path.display());
        }
        Command::Heatmap => println!("{}", glcert_cli::cmd_heatmap(&cfg)?.display()),
        Command::XiExport => println!("{}", glcert_cli::cmd_xi_export(&cfg)?.display()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
