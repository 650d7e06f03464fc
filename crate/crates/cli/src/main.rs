use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use verspace_cli::{run_experiment, CliError, ExperimentConfig, Task};

/// Distribution of test errors over interpolating classifiers.
#[derive(Parser)]
#[command(name = "verspace", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Linear classifiers on a two-class IDX image task.
    ImageLinear(RunArgs),
    /// Random ReLU features on a two-class IDX image task.
    ImageRrf(RunArgs),
    /// Linear classifiers on the isotropic Gaussian mixture.
    GaussianLinear(RunArgs),
    /// Orthant probabilities and limit CDF of the equicorrelated model.
    EquicorrTheory(RunArgs),
    /// Constructed worst-case interpolators versus sampled typical ones.
    WorstCase(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment configuration; task defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Caps the number of worker threads.
    #[arg(long)]
    threads: Option<usize>,
}

impl Command {
    fn split(self) -> (Task, RunArgs) {
        match self {
            Command::ImageLinear(a) => (Task::ImageLinear, a),
            Command::ImageRrf(a) => (Task::ImageRrf, a),
            Command::GaussianLinear(a) => (Task::GaussianLinear, a),
            Command::EquicorrTheory(a) => (Task::EquicorrTheory, a),
            Command::WorstCase(a) => (Task::WorstCase, a),
        }
    }
}

fn run(task: Task, args: RunArgs) -> Result<(), CliError> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::for_task(task),
    };
    if config.task != task {
        return Err(CliError::Config(format!(
            "config is for task {} but subcommand is {}",
            config.task.name(),
            task.name()
        )));
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let threads = args.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let record = pool.install(|| run_experiment(&config, &args.out))?;
    for entry in &record.outputs {
        println!("{}  {}", entry.sha256, args.out.join(&entry.file).display());
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&record.diagnostics).expect("json")
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (task, args) = cli.command.split();
    match run(task, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("verspace: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
