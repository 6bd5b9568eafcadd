use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cocob::baseline::standard_lr_grid;
use cocob::coin_betting::IterateSelection;
use cocob::harness::{self, Budget, CompareConfig, OutputFormat, RunConfig};
use cocob::verify::{self, VerifyConfig};
use cocob::{Error, Result};

#[derive(Parser)]
#[command(name = "cocob-bench", version, about = "Learning-rate-free coin-betting optimizers and baselines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One optimizer on one problem.
    Run(RunArgs),
    /// Tune a baseline's learning rate on a grid.
    Grid(GridArgs),
    /// COCOB and COCOB-Backprop against every grid-tuned baseline.
    Compare(CompareArgs),
    /// Run the invariant and inequality checks.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct Common {
    /// Problem name, e.g. `abs10`, `quad@dim=5`, `logreg@batch=16`, `mlp-blobs`.
    #[arg(long)]
    problem: String,
    /// Iteration budget (gradient queries).
    #[arg(long, default_value_t = 1000, conflicts_with = "epochs")]
    iters: u64,
    /// Epoch budget, for problems that define epochs.
    #[arg(long)]
    epochs: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Record every this many steps.
    #[arg(long, default_value_t = 1)]
    stride: u64,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Write 0 for every wall_ms value so output is reproducible byte for byte.
    #[arg(long)]
    no_wall_clock: bool,
}

impl Common {
    fn budget(&self) -> Budget {
        match self.epochs {
            Some(e) => Budget::Epochs(e),
            None => Budget::Iterations(self.iters),
        }
    }

    fn config(&self, optimizer: &str) -> RunConfig {
        let mut config = RunConfig::new(&self.problem, optimizer, self.iters);
        config.budget = self.budget();
        config.seed = self.seed;
        config.stride = self.stride;
        config.wall_clock = !self.no_wall_clock;
        config
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    optimizer: String,
    #[arg(long)]
    lr: Option<f64>,
    /// COCOB-Backprop's alpha.
    #[arg(long)]
    alpha: Option<f64>,
    /// last, avg or rand; defaults by problem class.
    #[arg(long)]
    select: Option<IterateSelection>,
    /// Comma-separated coordinates whose effective learning rate is recorded.
    #[arg(long, value_delimiter = ',')]
    watch: Vec<usize>,
    #[arg(long, default_value = "csv")]
    format: OutputFormat,
}

#[derive(Args)]
struct GridArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    optimizer: String,
    /// `standard` (17 rates) or a comma-separated list of rates.
    #[arg(long, default_value = "standard")]
    lr_grid: String,
    #[arg(long, default_value = "csv")]
    format: OutputFormat,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "standard")]
    lr_grid: String,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Smaller randomized suites.
    #[arg(long)]
    quick: bool,
}

fn parse_grid(text: &str) -> Result<Vec<f64>> {
    if text == "standard" {
        return Ok(standard_lr_grid());
    }
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidConfiguration(format!("bad learning rate `{s}`")))
        })
        .collect()
}

fn execute(command: Command) -> Result<bool> {
    match command {
        Command::Run(args) => {
            let mut config = args.common.config(&args.optimizer);
            config.learning_rate = args.lr;
            config.alpha = args.alpha;
            config.selection = args.select;
            config.watch = args.watch;
            let record = harness::run(&config)?;
            let paths = harness::emit(&record, args.format, &args.common.out, &args.optimizer)?;
            println!("final_loss {} selected_loss {}", record.final_loss, record.selected_loss);
            if let Some(cert) = record.certificate {
                println!("certificate observed_gap {} rhs {}", cert.observed_gap, cert.rhs);
            }
            for p in paths {
                println!("wrote {}", p.display());
            }
        }
        Command::Grid(args) => {
            let grid = parse_grid(&args.lr_grid)?;
            let result = harness::grid_search(&args.common.config(&args.optimizer), &grid)?;
            for record in &result.records {
                let lr = record.learning_rate().expect("tuned runs carry a rate");
                let stem = format!("{}_lr{}", args.optimizer, harness::format_float(lr));
                harness::emit(record, args.format, &args.common.out, &stem)?;
                println!("lr {lr} final_loss {}", record.final_loss);
            }
            println!("best lr {}", result.best_learning_rate);
        }
        Command::Compare(args) => {
            let mut config = CompareConfig::new(&args.common.problem, args.common.budget(), args.common.seed);
            config.grid = parse_grid(&args.lr_grid)?;
            config.stride = args.common.stride;
            config.wall_clock = !args.common.no_wall_clock;
            let comparison = harness::compare(&config)?;
            harness::write_comparison(&comparison, &args.common.out)?;
            println!("{:<16} {:>24} {:>12} {:>12}", "optimizer", "final_loss", "lr", "wall_ms");
            for row in &comparison.summary {
                let lr = row.learning_rate.map_or_else(|| "—".to_string(), |lr| lr.to_string());
                println!("{:<16} {:>24} {:>12} {:>12.1}", row.optimizer, row.final_loss, lr, row.wall_ms);
            }
        }
        Command::Verify(args) => {
            let mut config = VerifyConfig {
                seed: args.seed,
                ..VerifyConfig::default()
            };
            if args.quick {
                config.recurrence_prefixes = 1000;
                config.conjugate_triples = 100;
                config.wealth_streams = 1000;
                config.scale_streams = 10;
                config.gradient_seeds = 1;
            }
            let outcomes = verify::run_all(&config);
            for outcome in &outcomes {
                println!("{outcome}");
            }
            return Ok(outcomes.iter().all(|o| o.passed));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(inner) = source {
                eprintln!("  caused by: {inner}");
                source = inner.source();
            }
            ExitCode::FAILURE
        }
    }
}
