mod config;
mod manifest;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "relinfill", version, about = "Relation classification as text infilling")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// JSON run configuration; unknown keys are rejected.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    SharedGreedy,
    TeacherForced,
    Likelihood,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate the synthetic corpus plus a default K-shot split.
    Synth {
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        relations: Option<usize>,
        #[arg(long)]
        per_relation: Option<usize>,
    },
    /// Draw a K-shot train/dev split from a corpus; the remainder becomes test.
    Sample {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Train a model on a data directory (train.json, dev.json, schema.json).
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Score a split with a trained model.
    Eval {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Training output directory (checkpoint.json, compat.json).
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Decode without the entity-type preamble.
        #[arg(long)]
        no_guide: bool,
        #[arg(long)]
        no_type_filter: bool,
    },
    /// Train and score every template variant and verbalizer mode over the seed set.
    Ablate {
        #[arg(long)]
        epochs: Option<usize>,
        /// Limit the variants (comma separated names, e.g. CONTINUOUS_INFILL,ENTITIES_ONLY).
        #[arg(long, value_delimiter = ',')]
        only: Vec<String>,
    },
    /// Print the verbalization of a relation label.
    Verbalize {
        #[arg(long, required_unless_present = "all")]
        label: Option<String>,
        /// Print every built-in TACRED label with its verbalizations.
        #[arg(long)]
        all: bool,
    },
    /// Merge metric JSON files into one CSV table.
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run::run(cli.command, &cli.common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
