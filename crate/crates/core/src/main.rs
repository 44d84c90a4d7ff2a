use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dsotfs::experiment::{list_recipes, recipe, run_to_dir, ExperimentConfig, RunError};
use dsotfs::Error;

#[derive(Parser)]
#[command(name = "dsotfs", version, about = "DFT-s-OTFS sensing and communication experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a config file or a built-in recipe.
    Run {
        #[arg(long, conflicts_with = "recipe", required_unless_present = "recipe")]
        config: Option<PathBuf>,
        #[arg(long)]
        recipe: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (defaults to the config's `output`, then `results`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// List built-in recipes.
    Recipes,
}

fn load(config: Option<PathBuf>, name: Option<String>) -> Result<ExperimentConfig, RunError> {
    if let Some(path) = config {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| RunError::Config(Error::Config(format!("{}: {e}", path.display()))))?;
        return ExperimentConfig::from_toml(&text).map_err(RunError::Config);
    }
    let name = name.unwrap_or_default();
    recipe(&name).ok_or_else(|| RunError::Config(Error::Config(format!("unknown recipe '{name}'"))))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Recipes => {
            for name in list_recipes() {
                println!("{name}");
            }
            ExitCode::SUCCESS
        }
        Command::Run {
            config,
            recipe,
            seed,
            out,
            threads,
        } => {
            let result = load(config, recipe).and_then(|mut cfg| {
                if let Some(s) = seed {
                    cfg.seed = s;
                }
                if let Some(w) = cfg.prefix_warning() {
                    eprintln!("warning: {w}");
                }
                let dir = out.or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("results"));
                run_to_dir(&cfg, &dir, threads)
            });
            match result {
                Ok(path) => {
                    println!("{}", path.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
    }
}
