use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use breath_cli::{dispatch, Command, Overrides, Profile, RunConfig, TrainMode, Workspace};
use breath_core::ga::{Chromosome, ParentStrategy};

/// Breathing-pattern classification: synthetic data, a pre-trained 1D CNN,
/// a genetic search over its head, and final training.
#[derive(Parser)]
#[command(name = "breathga", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Artifact directory
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// paper or desk
    #[arg(long, global = true)]
    profile: Option<Profile>,
    /// Worker threads (0: one per core); 1 gives bitwise-reproducible runs
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Moving-average window in samples
    #[arg(long, global = true, value_name = "N")]
    ma_window: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    detrend_degree: Option<usize>,
    /// Print the merged configuration before running
    #[arg(long, global = true)]
    show_config: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the synthetic dataset
    GenData {
        /// Also write the records as CSV
        #[arg(long)]
        csv: bool,
    },
    /// Train the base network on the flip-augmented dataset
    Pretrain,
    /// Search head architectures with the genetic algorithm
    Evolve {
        #[arg(long, value_name = "N")]
        generations: Option<usize>,
        /// topk or roulette
        #[arg(long)]
        parent_strategy: Option<ParentStrategy>,
        #[arg(long, value_name = "P")]
        crossover_prob: Option<f64>,
        #[arg(long, value_name = "P")]
        mutation_prob: Option<f64>,
    },
    /// Train a chosen head in transfer and/or from-scratch mode
    TrainFinal {
        /// g1,g2,g3,g4 (default: best_chromosome.txt)
        #[arg(long)]
        chromosome: Option<Chromosome>,
        /// transfer, scratch or both
        #[arg(long)]
        mode: Option<TrainMode>,
    },
    /// Score a trained model and write its confusion matrix
    Evaluate {
        /// Model file (default: final_transfer.rnn1, else final_scratch.rnn1)
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
    },
    /// Derive smoothed fitness tables and optional SVG charts
    Report {
        #[arg(long)]
        svg: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let c = &cli.common;
    let mut overrides = Overrides {
        profile: c.profile,
        seed: c.seed,
        threads: c.threads,
        ma_window: c.ma_window,
        detrend_degree: c.detrend_degree,
        ..Overrides::default()
    };
    let command = match cli.command {
        Cmd::GenData { csv } => Command::GenData { csv },
        Cmd::Pretrain => Command::Pretrain,
        Cmd::Evolve {
            generations,
            parent_strategy,
            crossover_prob,
            mutation_prob,
        } => {
            overrides.generations = generations;
            overrides.parent_strategy = parent_strategy;
            overrides.crossover_prob = crossover_prob;
            overrides.mutation_prob = mutation_prob;
            Command::Evolve
        }
        Cmd::TrainFinal { chromosome, mode } => {
            overrides.chromosome = chromosome;
            overrides.mode = mode;
            Command::TrainFinal
        }
        Cmd::Evaluate { model } => Command::Evaluate { model },
        Cmd::Report { svg } => Command::Report { svg },
    };
    let cfg = match RunConfig::load(c.config.as_deref(), &overrides) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if c.show_config {
        print!("{}", cfg.to_toml());
    }
    match dispatch(&command, &cfg, &Workspace::new(&c.out)) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
