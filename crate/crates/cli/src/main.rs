//! `hwy`: data preparation, training, random search, analysis reports and
//! gradient checks for highway networks.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use highway::{Activation, BodyKind, Category};

#[derive(Parser)]
#[command(name = "hwy", version, about = "Train and analyze fully-connected highway networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Prepare or validate IDX datasets.
    #[command(subcommand)]
    Data(DataCommand),
    /// Train one network from a JSON run config.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Replaces the init and shuffle seeds with sub-seeds of this value.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "run")]
        run_id: String,
        #[arg(long)]
        overwrite: bool,
    },
    /// Random hyperparameter search from a JSON search config.
    Search {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        runs: usize,
        #[arg(long)]
        out: PathBuf,
        /// Master seed; overrides the one in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Trials trained concurrently.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        #[arg(long)]
        overwrite: bool,
    },
    /// Training-set performance with each body layer's gates closed.
    Lesion {
        #[command(flatten)]
        input: ReportInput,
    },
    /// Gate bias, mean gate activity and one sample's gates and outputs.
    Gates {
        #[command(flatten)]
        input: ReportInput,
        #[arg(long, default_value_t = 0)]
        sample: usize,
    },
    /// Per-class deviation of the mean gate activity from the global mean.
    Routing {
        #[command(flatten)]
        input: ReportInput,
    },
    /// Compare analytic and finite-difference gradients of a random network.
    Gradcheck {
        #[arg(long)]
        depth: usize,
        #[arg(long)]
        width: usize,
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = ActivationArg::Tanh)]
        activation: ActivationArg,
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
        /// Largest acceptable relative error.
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
    },
}

#[derive(Subcommand)]
enum DataCommand {
    /// Convert per-digit JSON pixel arrays into gzipped MNIST IDX files.
    Convert {
        /// Directory holding 0.json .. 9.json, each `{"data": [...]}` with
        /// 784 values in [0, 1] per image.
        #[arg(long)]
        json_digits: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Seed of the shuffle that interleaves the classes.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        overwrite: bool,
    },
    /// Validate the MNIST IDX files under a directory and print a summary.
    FetchCheck {
        /// Defaults to `$HWY_DATA_DIR/mnist`, else `data/mnist`.
        #[arg(long)]
        dir: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ReportInput {
    #[arg(long)]
    checkpoint: PathBuf,
    /// An IDX directory or a JSON data spec.
    #[arg(long)]
    data: PathBuf,
    /// Stratified subsample of an IDX directory.
    #[arg(long)]
    subset: Option<usize>,
    #[arg(long, default_value_t = 0)]
    subset_seed: u64,
    /// A `.csv` file, or a directory for `{run_id}.{report}.csv`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    overwrite: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Highway,
    Plain,
}

impl From<KindArg> for BodyKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Highway => BodyKind::Highway,
            KindArg::Plain => BodyKind::Plain,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ActivationArg {
    Tanh,
    Relu,
    Sigmoid,
}

impl From<ActivationArg> for Activation {
    fn from(a: ActivationArg) -> Self {
        match a {
            ActivationArg::Tanh => Activation::Tanh,
            ActivationArg::Relu => Activation::Relu,
            ActivationArg::Sigmoid => Activation::Sigmoid,
        }
    }
}

fn exit_code(c: Category) -> u8 {
    match c {
        Category::Usage => 2,
        Category::Config => 3,
        Category::Io => 4,
        Category::Numeric => 5,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Data(DataCommand::Convert {
            json_digits,
            out,
            seed,
            overwrite,
        }) => commands::convert(&json_digits, &out, seed, overwrite),
        Command::Data(DataCommand::FetchCheck { dir }) => commands::fetch_check(dir),
        Command::Train {
            config,
            out,
            seed,
            run_id,
            overwrite,
        } => commands::train(&config, &out, seed, &run_id, overwrite),
        Command::Search {
            config,
            runs,
            out,
            seed,
            parallel,
            overwrite,
        } => commands::search(&config, runs, &out, seed, parallel, overwrite),
        Command::Lesion { input } => commands::report(&input.into(), commands::Report::Lesion),
        Command::Gates { input, sample } => commands::report(&input.into(), commands::Report::Gates(sample)),
        Command::Routing { input } => commands::report(&input.into(), commands::Report::Routing),
        Command::Gradcheck {
            depth,
            width,
            kind,
            seed,
            activation,
            step,
            tolerance,
        } => commands::gradcheck(depth, width, kind.into(), activation.into(), seed, step, tolerance),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hwy: {e}");
            ExitCode::from(exit_code(e.category()))
        }
    }
}

impl From<ReportInput> for commands::ReportArgs {
    fn from(r: ReportInput) -> Self {
        commands::ReportArgs {
            checkpoint: r.checkpoint,
            data: r.data,
            subset: r.subset,
            subset_seed: r.subset_seed,
            out: r.out,
            overwrite: r.overwrite,
        }
    }
}
