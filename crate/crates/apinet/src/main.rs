use apinet::commands;
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Pairwise-interaction classifier: data generation, training,
/// evaluation, ablation, gradient checking, and gate inspection.
#[derive(Parser)]
#[command(name = "apinet", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset file.
    GenData {
        /// Run config (key = value); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output dataset path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model; writes model.params, metrics.csv, and run.cfg.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dataset file produced by gen-data.
        #[arg(long)]
        data: PathBuf,
        /// Output directory (created if missing).
        #[arg(long, default_value = "run")]
        out_dir: PathBuf,
    },
    /// Print test accuracy of saved parameters on a dataset.
    Eval {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Run the four ablation grids; one CSV per grid.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "ablation")]
        out_dir: PathBuf,
        /// Comma-separated training seeds, one run per cell per seed.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        seeds: Vec<u64>,
    },
    /// Compare analytic gradients against central differences.
    /// Exits 2 when the worst relative error reaches 1e-4.
    Gradcheck {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Show the strongest gate channels for consecutive sample pairs.
    InspectGates {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated sample indices, paired consecutively.
        #[arg(long, value_delimiter = ',')]
        sample_ids: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        top_k: usize,
    },
}

fn run(cli: Cli) -> apinet::Result<ExitCode> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::GenData { config, out: path } => {
            commands::cmd_gen_data(config.as_deref(), &path, &mut out)?;
        }
        Command::Train { config, data, out_dir } => {
            commands::cmd_train(config.as_deref(), &data, &out_dir, &mut out)?;
        }
        Command::Eval { params, data } => {
            commands::cmd_eval(&params, &data, &mut out)?;
        }
        Command::Ablate { config, data, out_dir, seeds } => {
            commands::cmd_ablate(config.as_deref(), &data, &out_dir, &seeds, &mut out)?;
        }
        Command::Gradcheck { config } => {
            let outcome = commands::cmd_gradcheck(config.as_deref(), &mut out)?;
            if !outcome.passed {
                return Ok(ExitCode::from(2));
            }
        }
        Command::InspectGates { params, data, sample_ids, top_k } => {
            commands::cmd_inspect_gates(&params, &data, &sample_ids, top_k, &mut out)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    // Exit codes: 0 success, 1 any validation or usage error, 2 gradcheck
    // threshold failure. clap's default usage exit (2) would collide.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::FAILURE;
        }
        Err(e) => {
            // --help / --version output.
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
