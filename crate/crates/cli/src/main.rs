use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use beliefnet_cli::gradcheck::{self, GradcheckOptions};
use beliefnet_cli::pipeline::{self, DataSource, Overrides, TrainArgs};
use beliefnet_cli::{exit, exit_code};
use beliefnet_core::data::{ClusterSpec, DEFAULT_FEATURES};
use beliefnet_core::{DbnError, Preset};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Deep belief network activity classifier.
#[derive(Parser)]
#[command(name = "beliefnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pretrain a stack of RBMs, fit the softmax head and save the model.
    Train(TrainCli),
    /// Score a saved model on a labeled set and write report files.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "test-features")]
        features: PathBuf,
        #[arg(long = "test-labels")]
        labels: PathBuf,
        /// Directory for metrics.csv, confusion.csv and roc_class_*.csv.
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
    /// Print the predicted class and all class probabilities per row.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
    },
    /// Verify gradients and probabilities against exact enumeration.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, hide = true)]
        corrupt_sign: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    PaperSmall,
    PaperLarge,
}

#[derive(Args)]
struct TrainCli {
    #[arg(long, requires = "train_labels", required_unless_present = "synthetic")]
    train_features: Option<PathBuf>,
    #[arg(long, requires = "train_features")]
    train_labels: Option<PathBuf>,
    #[arg(long, requires = "test_labels")]
    test_features: Option<PathBuf>,
    #[arg(long, requires = "test_features")]
    test_labels: Option<PathBuf>,
    /// Train on generated 12-class clusters instead of files.
    #[arg(long, conflicts_with_all = ["train_features", "test_features"])]
    synthetic: bool,
    /// Feature columns per row in the data files.
    #[arg(long, default_value_t = DEFAULT_FEATURES)]
    n_features: usize,
    #[arg(long, value_enum, default_value = "paper-small")]
    preset: PresetArg,
    /// Hidden layer sizes, comma separated, e.g. 50,50,10.
    #[arg(long, value_delimiter = ',')]
    layers: Option<Vec<usize>>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    cd_k: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    fine_tune: bool,
    #[arg(long)]
    fine_tune_epochs: Option<usize>,
    #[arg(long)]
    head_epochs: Option<usize>,
    #[arg(long, default_value = "model.dbn")]
    out: PathBuf,
    /// Also write a human-readable dump next to the model.
    #[arg(long)]
    export_text: bool,
}

impl TrainCli {
    fn into_args(self) -> TrainArgs {
        let source = if self.synthetic {
            DataSource::Synthetic(ClusterSpec::har_shaped())
        } else {
            DataSource::Files {
                train_features: self.train_features.expect("enforced by clap"),
                train_labels: self.train_labels.expect("enforced by clap"),
                test: self.test_features.zip(self.test_labels),
                n_features: self.n_features,
            }
        };
        TrainArgs {
            source,
            preset: match self.preset {
                PresetArg::PaperSmall => Preset::PaperSmall,
                PresetArg::PaperLarge => Preset::PaperLarge,
            },
            overrides: Overrides {
                layers: self.layers,
                epochs: self.epochs,
                cd_k: self.cd_k,
                learning_rate: self.lr,
                momentum: self.momentum,
                batch_size: self.batch,
                seed: self.seed,
                fine_tune: self.fine_tune,
                fine_tune_epochs: self.fine_tune_epochs,
                head_epochs: self.head_epochs,
            },
            out: self.out,
            export_text: self.export_text,
        }
    }
}

fn run(cli: Cli) -> Result<i32, DbnError> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Train(t) => {
            pipeline::train(&t.into_args(), &mut out)?;
        }
        Command::Eval {
            model,
            features,
            labels,
            out: dir,
        } => {
            pipeline::evaluate(&model, &features, &labels, &dir, &mut out)?;
        }
        Command::Predict { model, features } => {
            pipeline::predict(&model, &features, &mut out)?;
        }
        Command::Gradcheck { seed, corrupt_sign } => {
            let report = gradcheck::run(GradcheckOptions { seed, corrupt_sign })?;
            for c in &report.checks {
                let _ = writeln!(out, "{c}");
            }
            if !report.all_passed() {
                return Ok(exit::CHECK_FAILED);
            }
        }
    }
    Ok(exit::OK)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    };
    ExitCode::from(code as u8)
}
