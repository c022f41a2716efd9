use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kvspectra_cli::{presets, run, ExperimentConfig, RunError, RunOptions};

#[derive(Parser)]
#[command(
    name = "kvspectra",
    version,
    about = "Resolvent and decay experiments for Kelvin-Voigt damped waves"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a config file or a preset name.
    Run {
        config: String,
        /// Also write SVG charts.
        #[arg(long)]
        plot: bool,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the bundled presets.
    Presets,
    /// Run with dense reference computations for cross-checks.
    Oracle {
        config: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(arg: &str) -> Result<ExperimentConfig, RunError> {
    let path = Path::new(arg);
    if !path.exists() {
        if let Some(cfg) = presets::load(arg) {
            return cfg;
        }
    }
    let text =
        std::fs::read_to_string(path).map_err(|e| RunError::Validation(format!("cannot read config {arg}: {e}")))?;
    ExperimentConfig::from_json(&text)
}

fn execute(arg: &str, opts: RunOptions) -> Result<(), RunError> {
    let cfg = load(arg)?;
    let summary = run(&cfg, &opts)?;
    for line in &summary.lines {
        println!("{line}");
    }
    println!("wrote {} files to {}", summary.files.len(), summary.out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Presets => {
            for (name, description) in presets::presets() {
                println!("{name:<26} {description}");
            }
            Ok(())
        }
        Command::Run {
            config,
            plot,
            threads,
            out,
        } => {
            if let Some(n) = threads {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("thread pool already initialised: {e}");
                }
            }
            execute(
                &config,
                RunOptions {
                    out,
                    plot,
                    oracle: false,
                },
            )
        }
        Command::Oracle { config, out } => execute(
            &config,
            RunOptions {
                out,
                plot: false,
                oracle: true,
            },
        ),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("kvspectra: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
