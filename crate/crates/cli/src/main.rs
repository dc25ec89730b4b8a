use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use evotraj::simdata::GridShape;
use evotraj_cli::gen_data::{self, parse_grid, GenDataArgs};
use evotraj_cli::settings::EvolveSettings;
use evotraj_cli::{analyze, evolve, report, CliError};

#[derive(Parser)]
#[command(
    name = "evotraj",
    version,
    about = "Multi-objective neuroevolution of trajectory predictors",
    args_override_self = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic highway dataset.
    GenData {
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 5)]
        tau: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Window stride in steps.
        #[arg(long, default_value_t = 2)]
        stride: usize,
        /// States per episode.
        #[arg(long, default_value_t = 40)]
        steps: usize,
        #[arg(long, default_value_t = 1)]
        lane_changes: usize,
        /// Grid shape as WxHxC.
        #[arg(long, default_value = "32x32x1")]
        grid: String,
        /// 128x128x3 grids.
        #[arg(long)]
        paper_scale: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run NSGA-II once per seed.
    Evolve {
        /// Flat key = value file; flags take precedence over it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        experiment: Option<String>,
        /// Dataset directory.
        #[arg(long)]
        data: Option<String>,
        /// Parent directory of the run directories.
        #[arg(long)]
        out: Option<String>,
        /// Comma-separated list.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        pop: Option<String>,
        #[arg(long)]
        gens: Option<String>,
        #[arg(long)]
        crossover_rate: Option<String>,
        #[arg(long)]
        mutation_rate: Option<String>,
        #[arg(long)]
        tournament_size: Option<String>,
        /// Concurrent evaluations (default: $EVOTRAJ_WORKERS or 1).
        #[arg(long)]
        workers: Option<String>,
        #[arg(long)]
        divisor: Option<String>,
        /// 0 disables the cap.
        #[arg(long)]
        epoch_cap: Option<String>,
        /// Population 25, 20 generations, full-size layers, 12 seeds.
        #[arg(long)]
        paper_scale: bool,
    },
    /// Summarise run directories into CSV tables.
    Analyze {
        /// Run directories, or directories containing them.
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a markdown report and plot data from an analysis directory.
    Report {
        #[arg(long)]
        analysis: PathBuf,
        /// Defaults to the analysis directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn execute(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::GenData {
            episodes,
            tau,
            seed,
            stride,
            steps,
            lane_changes,
            grid,
            paper_scale,
            out,
        } => {
            let grid = if paper_scale {
                GridShape::PAPER
            } else {
                parse_grid(&grid)?
            };
            let args = GenDataArgs {
                episodes,
                tau,
                seed,
                stride,
                steps,
                lane_changes,
                grid,
                out,
            };
            let (manifest, hash) = gen_data::run(&args)?;
            println!("{}", gen_data::summary(&manifest, &hash));
        }
        Command::Evolve {
            config,
            experiment,
            data,
            out,
            seeds,
            pop,
            gens,
            crossover_rate,
            mutation_rate,
            tournament_size,
            workers,
            divisor,
            epoch_cap,
            paper_scale,
        } => {
            let flags: Vec<(&str, String)> = [
                ("experiment", experiment),
                ("data", data),
                ("out", out),
                ("seeds", seeds),
                ("population", pop),
                ("generations", gens),
                ("crossover_rate", crossover_rate),
                ("mutation_rate", mutation_rate),
                ("tournament_size", tournament_size),
                ("workers", workers),
                ("divisor", divisor),
                ("epoch_cap", epoch_cap),
            ]
            .into_iter()
            .filter_map(|(k, v)| v.map(|v| (k, v)))
            .collect();
            let settings = EvolveSettings::resolve(config.as_deref(), paper_scale, &flags)?;
            for dir in evolve::run(&settings)? {
                println!("{}", dir.display());
            }
        }
        Command::Analyze { runs, out } => {
            let a = analyze::run(&runs, &out)?;
            println!(
                "{} runs, {} final-generation models, {} pooled evaluations -> {}",
                a.runs.len(),
                a.verdicts.len(),
                a.pooled,
                out.display()
            );
        }
        Command::Report { analysis, out } => {
            let out = out.unwrap_or_else(|| analysis.clone());
            println!("{}", report::run(&analysis, &out)?.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
