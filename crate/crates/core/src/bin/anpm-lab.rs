use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use anpm_lab::config::ExperimentConfig;
use anpm_lab::experiment::{output_dir, plan, run_experiment};
use anpm_lab::gossip::{metropolis_matrix, read_edge_list};

#[derive(Parser)]
#[command(
    name = "anpm-lab",
    version,
    about = "Momentum power-method experiments"
)]
struct Cli {
    /// Output directory (overrides the config's `output`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed (overrides the config's `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parameter points.
    #[arg(long, global = true, env = "ANPM_LAB_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every point of a config and write CSV traces plus summary.json.
    Run { config: PathBuf },
    /// Parse and check a config without running it.
    Validate { config: PathBuf },
    /// Print the spectral gap of Metropolis weights on an edge list.
    Gap { edges: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}

fn load(path: &Path, seed: Option<u64>) -> anpm_lab::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> anpm_lab::Result<()> {
    match cli.command {
        Command::Run { config } => {
            let cfg = load(&config, cli.seed)?;
            let out = output_dir(&cfg, cli.out.as_deref());
            let summary = run_experiment(&cfg, &out, cli.threads)?;
            for run in &summary.runs {
                let hit = run
                    .iterations_to_tolerance
                    .map_or_else(|| "-".to_string(), |t| t.to_string());
                println!(
                    "{:<48} final_sin={:.3e} t_tol={hit}",
                    run.file, run.final_sin
                );
            }
            println!(
                "wrote {} traces to {} in {:.2}s",
                summary.runs.len(),
                out.display(),
                summary.wall_time_s
            );
        }
        Command::Validate { config } => {
            let cfg = load(&config, cli.seed)?;
            let points = plan(&cfg)?;
            println!("{}: ok, {} runs", config.display(), points.len());
            for p in points {
                println!("  {}", p.file_name());
            }
        }
        Command::Gap { edges } => {
            let graph = read_edge_list(&edges)?;
            let w = metropolis_matrix(&graph)?;
            println!("{}", w.gamma());
        }
    }
    Ok(())
}
