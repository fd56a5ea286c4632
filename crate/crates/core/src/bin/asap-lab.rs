use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use asap_lab::data::split_pool;
use asap_lab::harness::output::write_file;
use asap_lab::harness::{
    export_lr_trace, read_summary_csv, render_summary, run_matrix, sensitivity_sweep,
    sweep::parse_values, sweep_csv, Lab, MatrixOptions, RunConfig, SweepTarget,
};
use asap_lab::model::{pretrain, Checkpoint};
use asap_lab::shift::ShiftKind;
use asap_lab::Error;

#[derive(Parser)]
#[command(
    name = "asap-lab",
    version,
    about = "Online label-shift adaptation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pretrain one model per seed and write checkpoints.
    Pretrain {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the full dataset x shift x method x seed matrix.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        parallel: Option<usize>,
        /// Record update wall times (runs on a single worker).
        #[arg(long)]
        timing: bool,
    },
    /// Vary one ASAP bound and record accuracy per value.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        vary: SweepTarget,
        /// Comma-separated, strictly increasing.
        #[arg(long)]
        values: String,
        #[arg(long)]
        parallel: Option<usize>,
    },
    /// Export the per-step shift estimate and learning rate of one ASAP run.
    Trace {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        shift: ShiftKind,
        #[arg(long)]
        seed: u64,
    },
    /// Render summary.csv from an output directory as markdown.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

enum Failure {
    Config(Error),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Io { .. } | Error::Csv(_) | Error::Json(_) => {
                Failure::Config(e)
            }
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            e.print().ok();
            return if usage {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Pretrain { config } => {
            let config = RunConfig::load(&config)?;
            let pool = config.dataset.build()?;
            for &seed in &config.seeds {
                let (train, _) = split_pool(&pool, config.holdout_fraction, seed)?;
                let pre = pretrain(&train, &config.pretrain, seed)?;
                let path = config.output_dir.join(format!("checkpoint_{seed}.json"));
                Checkpoint::new(&pre.params, seed).save(&path)?;
                println!(
                    "seed {seed}: train accuracy {:.2}% -> {}",
                    100.0 * pre.train_accuracy,
                    path.display()
                );
            }
            Ok(())
        }
        Command::Run {
            config,
            parallel,
            timing,
        } => {
            let config = RunConfig::load(&config)?;
            let outcome = run_matrix(&config, MatrixOptions { parallel, timing })?;
            print!("{}", render_summary(&outcome.rows));
            println!("wrote {}", outcome.output_dir.display());
            match outcome.failures() {
                0 => Ok(()),
                n => Err(Failure::Runtime(format!(
                    "{n} cell(s) failed; see manifest.json"
                ))),
            }
        }
        Command::Sweep {
            config,
            vary,
            values,
            parallel,
        } => {
            let config = RunConfig::load(&config)?;
            let values = parse_values(&values)?;
            let rows = sensitivity_sweep(
                &config,
                vary,
                &values,
                MatrixOptions {
                    parallel,
                    timing: false,
                },
            )?;
            let path = config.output_dir.join(format!("sweep_{vary}.csv"));
            write_file(&path, &sweep_csv(&rows)?)?;
            for row in &rows {
                match (row.mean_acc, &row.error) {
                    (Some(m), _) => println!(
                        "{vary}={:e}: {m:.2}±{:.2}",
                        row.value,
                        row.std_acc.unwrap_or(0.0)
                    ),
                    (None, err) => println!(
                        "{vary}={:e}: rejected ({})",
                        row.value,
                        err.as_deref().unwrap_or("")
                    ),
                }
            }
            println!("wrote {}", path.display());
            let failed = rows
                .iter()
                .filter(|r| r.failures > 0 && r.mean_acc.is_some())
                .count();
            if failed > 0 {
                return Err(Failure::Runtime(format!(
                    "{failed} sweep value(s) had failing runs"
                )));
            }
            Ok(())
        }
        Command::Trace {
            config,
            shift,
            seed,
        } => {
            let mut config = RunConfig::load(&config)?;
            if !config.seeds.contains(&seed) {
                config.seeds = vec![seed];
            }
            let lab = Lab::new(config)?;
            let records = lab.lr_trace(shift, seed)?;
            let path = lab
                .config
                .output_dir
                .join(format!("trace_{shift}_{seed}.csv"));
            write_file(&path, &export_lr_trace(&records, shift)?)?;
            println!("wrote {} ({} steps)", path.display(), records.len());
            Ok(())
        }
        Command::Report { input } => {
            let rows = read_summary_csv(&summary_path(&input))?;
            if rows.is_empty() {
                return Err(Failure::Config(Error::Config(format!(
                    "{} has no rows",
                    input.display()
                ))));
            }
            print!("{}", render_summary(&rows));
            Ok(())
        }
    }
}

fn summary_path(input: &Path) -> PathBuf {
    if input.is_dir() {
        input.join("summary.csv")
    } else {
        input.to_path_buf()
    }
}
