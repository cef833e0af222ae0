use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use metalearn::{Error as MetaError, LambdaGrid};
use metalearn_cli::{check, gridspec, grid_table, schools, synth, timing, timing_table, trajectory_table};

/// Experiment driver: learns a shared linear representation across a stream
/// of regression tasks and benchmarks it against batch, independent-task,
/// and multitask baselines. Emits CSV.
#[derive(Parser)]
#[command(name = "metalearn", version, max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthMode {
    /// Sweep task-count x sample-count cells, reporting improvement over ITL.
    Grid,
    /// Single incremental trial: per-task-count metrics for all four methods.
    Trajectory,
}

#[derive(Subcommand)]
enum Command {
    /// Synthetic shared-subspace benchmark (grid or trajectory mode).
    Synth {
        #[arg(long, value_enum, default_value = "trajectory")]
        mode: SynthMode,
        /// Input dimension (even).
        #[arg(long, default_value_t = 50)]
        dim: usize,
        /// Samples per task (grid mode: upper end of the sweep).
        #[arg(long, default_value_t = 25)]
        samples: usize,
        /// Training tasks (grid mode: upper end of the sweep).
        #[arg(long, default_value_t = 50)]
        tasks: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Candidate regularization grid, `min,max,count` (log-spaced).
        #[arg(long, default_value = "1e-6,1e3,30")]
        lambda_grid: String,
        /// Seeds per grid cell (grid mode defaults to 5, trajectory to 1).
        #[arg(long)]
        replicates: Option<usize>,
        /// Output CSV path (stdout when omitted).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Schools benchmark: incremental explained-variance trajectories.
    Schools {
        /// Path to the Schools CSV (`task_id,y,x1,...,x26`).
        #[arg(long)]
        schools: PathBuf,
        /// Seed for the task partition and per-task sample halving.
        #[arg(long, default_value_t = 0)]
        split_seed: u64,
        #[arg(long, default_value = "1e-6,1e3,30")]
        lambda_grid: String,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Wall-time comparison of online vs warm-restarted batch learning.
    Timing {
        #[arg(long, default_value_t = 50)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// How many of the benchmark cells (50,20)..(150,50) to run.
        #[arg(long, default_value_t = timing::PAPER_CELLS.len())]
        cells: usize,
        /// Grid per cell; timing cost scales linearly with its size.
        #[arg(long, default_value = "0.1,0.1,1")]
        lambda_grid: String,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Self-checks: gradient, projection, bounds, and regret suites.
    Check {
        /// all|gradient|projection|bounds|regret
        #[arg(long, default_value = "all")]
        suite: String,
        /// Trials per randomized suite (suite-specific defaults when omitted).
        #[arg(long)]
        trials: Option<usize>,
        /// Stream length for the regret suite.
        #[arg(long, default_value_t = 200)]
        tasks: usize,
        /// Trace-budget parameter for the regret suite.
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

fn parse_grid_or_usage(spec: &str) -> Result<LambdaGrid, ExitCode> {
    gridspec::parse_lambda_grid(spec).map_err(|message| {
        eprintln!("error: --lambda-grid {message}");
        ExitCode::from(EXIT_USAGE)
    })
}

fn write_table(
    table: metalearn_cli::csvout::CsvTable,
    output: Option<PathBuf>,
) -> anyhow::Result<()> {
    match output {
        Some(path) => {
            let mut file = std::fs::File::create(&path)?;
            table.write_to(&mut file)?;
        }
        None => {
            let stdout = std::io::stdout();
            table.write_to(&mut stdout.lock())?;
        }
    }
    Ok(())
}

/// Usage errors (bad flags, missing files) exit 2; runtime failures exit 3.
fn classify(error: &anyhow::Error) -> u8 {
    for cause in error.chain() {
        if let Some(meta) = cause.downcast_ref::<MetaError>() {
            if matches!(meta, MetaError::FileNotFound(_) | MetaError::InvalidParameter(_)) {
                return EXIT_USAGE;
            }
        }
    }
    EXIT_RUNTIME
}

fn run(cli: Cli) -> anyhow::Result<Option<u8>> {
    match cli.command {
        Command::Synth {
            mode,
            dim,
            samples,
            tasks,
            seed,
            lambda_grid,
            replicates,
            output,
        } => {
            let grid = match parse_grid_or_usage(&lambda_grid) {
                Ok(grid) => grid,
                Err(_) => return Ok(Some(EXIT_USAGE)),
            };
            let cfg = synth::SynthConfig {
                dim,
                samples,
                tasks,
                seed,
                grid,
            };
            match mode {
                SynthMode::Trajectory => {
                    anyhow::ensure!(replicates.unwrap_or(1) == 1, "trajectory mode runs a single trial");
                    let checkpoints: Vec<usize> = (1..=tasks).collect();
                    let records = synth::run_trajectory(&cfg, &checkpoints)?;
                    write_table(trajectory_table(records), output)?;
                }
                SynthMode::Grid => {
                    let cells = synth::run_grid(&cfg, replicates.unwrap_or(5))?;
                    write_table(grid_table(cells), output)?;
                }
            }
            Ok(None)
        }
        Command::Schools {
            schools: path,
            split_seed,
            lambda_grid,
            output,
        } => {
            let grid = match parse_grid_or_usage(&lambda_grid) {
                Ok(grid) => grid,
                Err(_) => return Ok(Some(EXIT_USAGE)),
            };
            let records = schools::run_schools(&path, split_seed, &grid)?;
            write_table(trajectory_table(records), output)?;
            Ok(None)
        }
        Command::Timing {
            dim,
            seed,
            cells,
            lambda_grid,
            output,
        } => {
            let grid = match parse_grid_or_usage(&lambda_grid) {
                Ok(grid) => grid,
                Err(_) => return Ok(Some(EXIT_USAGE)),
            };
            let results = timing::run_timing(dim, seed, &grid, cells)?;
            write_table(timing_table(results), output)?;
            Ok(None)
        }
        Command::Check {
            suite,
            trials,
            tasks,
            lambda,
            seed,
        } => {
            let cfg = check::CheckConfig {
                trials,
                tasks,
                lambda,
                seed,
            };
            let results = check::run_checks(&suite, &cfg)?;
            let stdout = std::io::stdout();
            let mut out = stdout.lock();
            let mut all_passed = true;
            for result in &results {
                writeln!(out, "{}", result.report_line())?;
                all_passed &= result.passed;
            }
            Ok((!all_passed).then_some(EXIT_CHECK_FAILED))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();

    if let Ok(threads) = std::env::var("METALEARN_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n >= 1 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("error: failed to configure thread pool: {e}");
                    return ExitCode::from(EXIT_RUNTIME);
                }
            }
            _ => {
                eprintln!("error: METALEARN_THREADS must be a positive integer, got `{threads}`");
                return ExitCode::from(EXIT_USAGE);
            }
        }
    }

    // clap itself exits 2 on flag parse errors.
    let cli = Cli::parse();
    match run(cli) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(code)) => ExitCode::from(code),
        Err(error) => {
            eprintln!("error: {error:#}");
            ExitCode::from(classify(&error))
        }
    }
}
