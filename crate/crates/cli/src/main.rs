use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use minrec_cli::pipeline::REPORT_DIR;
use minrec_cli::{load_config, run_all, run_stage, with_workers, workers_from_env, Stage};

#[derive(Parser)]
#[command(
    name = "minrec",
    version,
    about = "Inference-data minimization experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true, default_value = "minrec.toml")]
    config: PathBuf,
    /// Overrides the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Load, binarize, filter and split the dataset.
    Prepare,
    /// Grid-search and persist the recommender.
    Fit,
    /// Tune the output-estimation relevance transform.
    TuneGt,
    /// Minimize every test user's fold-in set.
    Minimize,
    /// Compare full and minimized inputs on the hold-out sets.
    Evaluate,
    /// Write the report tables.
    Report,
    /// Run every stage in order.
    All,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let cfg = match load_config(&cli.config, cli.seed, cli.out.clone()) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: config: {e:#}");
            return ExitCode::from(2);
        }
    };
    let workers = match workers_from_env() {
        Ok(w) => w,
        Err(e) => {
            eprintln!("error: config: {e:#}");
            return ExitCode::from(2);
        }
    };
    let outcome = with_workers(workers, || match cli.command {
        Command::Prepare => run_stage(Stage::Prepare, &cfg),
        Command::Fit => run_stage(Stage::Fit, &cfg),
        Command::TuneGt => run_stage(Stage::TuneGt, &cfg),
        Command::Minimize => run_stage(Stage::Minimize, &cfg),
        Command::Evaluate => run_stage(Stage::Evaluate, &cfg),
        Command::Report => run_stage(Stage::Report, &cfg),
        Command::All => run_all(&cfg),
    });
    match outcome {
        Ok(Ok(())) => {
            if matches!(cli.command, Command::Report | Command::All) {
                let path = cfg.out_dir().join(REPORT_DIR).join("report.txt");
                if let Ok(text) = std::fs::read_to_string(path) {
                    print!("{text}");
                }
            }
            ExitCode::SUCCESS
        }
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: workers: {e:#}");
            ExitCode::from(2)
        }
    }
}
