//! Command-line front end: configuration, persistence, and subcommand
//! dispatch for the preference-alignment toolkit.

pub mod commands;
pub mod config;
pub mod imgio;
pub mod persist;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use commands::UsageError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_OPERATIONAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "shape",
    version,
    about = "Build preference triplets from augmented images, train with DPO, evaluate",
    arg_required_else_help = true
)]
pub struct Cli {
    /// Emit machine-readable JSON instead of plain text
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build preference datasets and run the iterative loop
    Forge {
        #[command(subcommand)]
        command: ForgeCommand,
    },
    /// Train the toy policy on an existing JSONL dataset
    Train(TrainCliArgs),
    /// Evaluation metrics
    Eval {
        #[command(subcommand)]
        command: EvalCommand,
    },
    /// Image augmentation utilities
    Augment {
        #[command(subcommand)]
        command: AugmentCommand,
    },
    /// Summarize a run manifest into plottable CSV
    Report(ReportCliArgs),
}

#[derive(Subcommand, Debug)]
pub enum ForgeCommand {
    /// Build one preference dataset from the configured samples
    Build(ForgeCliArgs),
    /// Run the full iterative loop (toy or mock backend)
    Run(ForgeCliArgs),
}

#[derive(Args, Debug)]
pub struct ForgeCliArgs {
    /// Configuration file (TOML)
    #[arg(long)]
    pub config: PathBuf,
    /// Override the config seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the concurrency bound
    #[arg(long)]
    pub max_in_flight: Option<usize>,
    /// Output path (build: a .jsonl file; run: a directory)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainCliArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// JSONL dataset of preference triplets
    #[arg(long)]
    pub dataset: PathBuf,
    /// Starting checkpoint (defaults to a uniform policy)
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for checkpoint + trajectory
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum EvalCommand {
    /// Caption hallucination ratios over a record file
    Chair {
        /// JSONL caption records
        #[arg(long)]
        records: PathBuf,
        /// Object vocabulary file
        #[arg(long)]
        vocab: PathBuf,
        /// Directory for the JSON + CSV outputs
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Yes/no probe accuracy per split
    Pope {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pairwise judge win rate
    Winrate {
        /// JSONL of {question, answer_a, answer_b} to judge live
        #[arg(long)]
        pairs: Option<PathBuf>,
        /// JSONL of recorded verdicts {"verdict": "A"|"B"|"TIE"}
        #[arg(long)]
        verdicts: Option<PathBuf>,
        /// Config providing the remote judge endpoint (for --pairs)
        #[arg(long)]
        config: Option<PathBuf>,
        /// Judge in one order only instead of both
        #[arg(long)]
        no_debias: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
pub enum AugmentCommand {
    /// Apply a named preset to a PNG/PPM file
    Preview {
        #[arg(long)]
        input: PathBuf,
        /// Preset name (identity, hflip, crop, crop-0-20, diffusion-s,
        /// diffusion-w, contrast, gamma)
        #[arg(long)]
        preset: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args, Debug)]
pub struct ReportCliArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory for report.csv and report.json
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let json = cli.json;
    match cli.command {
        Command::Forge { command } => match command {
            ForgeCommand::Build(args) => commands::forge::build(&commands::forge::BuildArgs {
                config: args.config,
                seed: args.seed,
                max_in_flight: args.max_in_flight,
                out: args.out,
                json,
            }),
            ForgeCommand::Run(args) => commands::forge::run(&commands::forge::RunArgs {
                config: args.config,
                seed: args.seed,
                max_in_flight: args.max_in_flight,
                out: args.out,
                json,
            }),
        },
        Command::Train(args) => commands::train::train(&commands::train::TrainArgs {
            config: args.config,
            dataset: args.dataset,
            init: args.init,
            seed: args.seed,
            out: args.out,
            json,
        }),
        Command::Eval { command } => match command {
            EvalCommand::Chair { records, vocab, out } => {
                commands::eval::chair(&commands::eval::ChairArgs { records, vocab, out })
            }
            EvalCommand::Pope { records, out } => {
                commands::eval::pope(&commands::eval::PopeArgs { records, out })
            }
            EvalCommand::Winrate {
                pairs,
                verdicts,
                config,
                no_debias,
                out,
            } => commands::eval::winrate(&commands::eval::WinrateArgs {
                pairs,
                verdicts,
                config,
                no_debias,
                out,
            }),
        },
        Command::Augment { command } => match command {
            AugmentCommand::Preview {
                input,
                preset,
                out,
                seed,
            } => commands::augment::preview(&commands::augment::PreviewArgs {
                input,
                preset,
                out,
                seed,
                json,
            }),
        },
        Command::Report(args) => commands::report::report(&commands::report::ReportArgs {
            manifest: args.manifest,
            out: args.out,
            json,
        }),
    }
}

/// Full entry point: parses arguments, runs, and maps errors to exit codes
/// (0 success, 1 operational, 2 usage).
pub fn main_impl() -> i32 {
    let cli = Cli::parse();
    let json = cli.json;
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(err) => {
            if json {
                let doc = serde_json::json!({ "error": format!("{err:#}") });
                eprintln!("{doc}");
            } else {
                eprintln!("error: {err:#}");
            }
            if err.downcast_ref::<UsageError>().is_some() {
                EXIT_USAGE
            } else {
                EXIT_OPERATIONAL
            }
        }
    }
}
