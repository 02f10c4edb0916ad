//! `fmtl`: generate scenarios, run experiments and summarise results.

mod analysis;
mod generate;
mod options;
mod rundirs;
mod sweep;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use fmtl_core::{FmtlError, Split};

use options::ConfigArgs;

#[derive(Parser)]
#[command(
    name = "fmtl",
    version,
    about = "Federated multi-task learning simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Materialise a scenario's datasets and manifest under <out>/<scenario>/<seed>/.
    Generate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value = "data")]
        out: PathBuf,
        /// Replace an existing directory.
        #[arg(long)]
        force: bool,
    },
    /// Run one experiment per seed.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        /// Local baseline runs (a run directory or a directory of them) to
        /// compute improvements against.
        #[arg(long)]
        target: Option<PathBuf>,
    },
    /// Improvement of each baseline over the target, mean ± std across seeds.
    Report {
        /// Run directories, or directories containing them.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        target: PathBuf,
        /// Write the table here as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Pairwise Wilcoxon tests, Friedman/Nemenyi ranks and improvement curves.
    Compare {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        target: PathBuf,
        #[arg(long, default_value = "compare")]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::G)]
        split: SplitArg,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Unit of one paired observation.
        #[arg(long, value_enum, default_value_t = analysis::Pairing::SeedTask)]
        pairing: analysis::Pairing,
    },
    /// Expand a template over one axis and run every cell.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_enum)]
        axis: sweep::Axis,
        #[arg(long, default_value = "sweep")]
        out: PathBuf,
        /// Strategies to run in each cell; defaults to the template's.
        #[arg(long, value_delimiter = ',')]
        strategies: Vec<String>,
        /// Epochs of warm-start training for the pretrain axis.
        #[arg(long, default_value_t = 20)]
        pretrain_epochs: usize,
    },
    /// Train a warm-start checkpoint on the pretrain pool.
    Pretrain {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        /// Checkpoint path (.fmtlckpt).
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    G,
    P,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::G => Split::G,
            SplitArg::P => Split::P,
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Generate { config, out, force } => generate::cmd_generate(&config, &out, force),
        Command::Run {
            config,
            out,
            target,
        } => train::cmd_run(&config, &out, target.as_deref()),
        Command::Report { runs, target, csv } => {
            analysis::cmd_report(&runs, &target, csv.as_deref())
        }
        Command::Compare {
            runs,
            target,
            out,
            split,
            alpha,
            pairing,
        } => analysis::cmd_compare(&runs, &target, &out, split.into(), alpha, pairing),
        Command::Sweep {
            config,
            axis,
            out,
            strategies,
            pretrain_epochs,
        } => sweep::cmd_sweep(&config, axis, &out, &strategies, pretrain_epochs),
        Command::Pretrain {
            config,
            epochs,
            out,
        } => train::cmd_pretrain(&config, epochs, &out),
    }
}

/// 2 for configuration and input errors, 3 for I/O, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<FmtlError>() {
            return match e {
                FmtlError::Io(_) | FmtlError::Json(_) | FmtlError::Format(_) => 3,
                FmtlError::Config(_)
                | FmtlError::Argument(_)
                | FmtlError::TaskMismatch(_)
                | FmtlError::LayoutMismatch(_) => 2,
                _ => 1,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
    }
    1
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
