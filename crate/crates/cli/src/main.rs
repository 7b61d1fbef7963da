//! `cuneo`: reproducible sign-classification experiments from one spec file.

mod commands;
mod plot;
mod spec;

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cuneo_core::corpus::{VisualizationKind, DEFAULT_MIN_INSTANCES};
use cuneo_core::fixture::FixtureSpec;
use cuneo_core::nn::Architecture;

use commands::Ctx;
use spec::ExperimentSpec;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("spec: {0}")]
    Spec(String),
    #[error("no checkpoint at {}; run `cuneo train` first or pass --checkpoint", .0.display())]
    MissingCheckpoint(PathBuf),
    #[error("repeats aborted: {0}")]
    Repeat(String),
    #[error(transparent)]
    Core(#[from] cuneo_core::Error),
    #[error(transparent)]
    Service(#[from] cuneo_service::ServiceError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Parser)]
#[command(name = "cuneo", version, about = "Cuneiform sign classification experiments")]
struct Cli {
    /// Log filter, e.g. `info` or `cuneo_core=debug`.
    #[arg(long, global = true, default_value = "warn")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

/// Spec file plus command-line overrides. Overrides are folded into the spec
/// before hashing.
#[derive(Args, Debug, Default)]
struct SpecArgs {
    /// TOML or JSON experiment spec.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    viz: Option<VisualizationKind>,
    #[arg(long)]
    split_seed: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// resnet18, resnet50, resnext50 or compact.
    #[arg(long)]
    arch: Option<Architecture>,
    #[arg(long)]
    repeats: Option<usize>,
    /// Comma-separated provenience filter.
    #[arg(long, value_delimiter = ',')]
    proveniences: Option<Vec<String>>,
    /// Backbone checkpoint to initialize from.
    #[arg(long)]
    pretrained: Option<PathBuf>,
    #[arg(long)]
    no_augment: bool,
}

impl SpecArgs {
    fn resolve(&self) -> Result<ExperimentSpec, CliError> {
        let mut s = match &self.spec {
            Some(p) => ExperimentSpec::load(p)?,
            None => ExperimentSpec::default(),
        };
        if let Some(v) = &self.corpus {
            s.corpus = v.clone();
        }
        if let Some(v) = &self.out {
            s.out = v.clone();
        }
        if let Some(v) = self.viz {
            s.visualization = v;
        }
        if let Some(v) = self.split_seed {
            s.split_seed = v;
        }
        if let Some(v) = self.seed {
            s.train.seed = v;
        }
        if let Some(v) = self.epochs {
            s.train.epochs = v;
        }
        if let Some(v) = self.batch_size {
            s.train.batch_size = v;
        }
        if let Some(a) = self.arch {
            s.train.architecture = a;
        }
        if let Some(v) = self.repeats {
            s.repeats = v;
        }
        if let Some(v) = &self.proveniences {
            s.proveniences = Some(v.iter().cloned().collect());
        }
        if let Some(v) = &self.pretrained {
            s.train.pretrained = Some(v.clone());
        }
        if self.no_augment {
            s.train.augment.enabled = false;
        }
        Ok(s)
    }

    fn ctx(&self) -> Result<Ctx, CliError> {
        Ctx::new(self.resolve()?)
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FixtureKind {
    /// Ten classes in a single provenience.
    Glyphs,
    /// Ten classes in three proveniences with distinct hands, plus a held-out one.
    Styles,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate a corpus, print a summary.
    Validate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MIN_INSTANCES)]
        min_instances: usize,
    },
    /// Build the train/test split and write `split.json`.
    Split(SpecArgs),
    /// Train a classifier (and fine-tune it if the spec says so).
    Train(SpecArgs),
    /// Fine-tune a trained checkpoint on the spec's fine-tune slice.
    FineTune {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the test split.
    Eval {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Repeat training with consecutive seeds and aggregate.
    Repeats(SpecArgs),
    /// Train and evaluate one model per visualization.
    VizSweep {
        #[command(flatten)]
        spec: SpecArgs,
        /// Visualizations to sweep; all available ones when empty.
        #[arg(long = "sweep", value_delimiter = ',')]
        visualizations: Vec<VisualizationKind>,
    },
    /// Per-cell accuracy delta of one model against another (3x3 and 5x5).
    GridReport {
        #[command(flatten)]
        spec: SpecArgs,
        /// Checkpoint path or visualization tag of a viz-sweep model.
        #[arg(long)]
        baseline: String,
        #[arg(long)]
        compare: String,
    },
    /// Per-class accuracy grouped by training frequency.
    FreqReport {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Cross-provenience transfer matrix.
    Transfer {
        #[command(flatten)]
        spec: SpecArgs,
        /// Training combination, `+`-joined; repeatable.
        #[arg(long = "combo")]
        combinations: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        held_out: Vec<String>,
    },
    /// Extract 2048-d features and optionally query nearest neighbors.
    Embed {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// train, test or all.
        #[arg(long, default_value = "test")]
        set: String,
        #[arg(long)]
        query: Option<String>,
        #[arg(long, default_value_t = 10)]
        k: usize,
    },
    /// t-SNE projection of the features.
    Project {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        set: String,
    },
    /// Re-render plots from the reports directory.
    Plot(SpecArgs),
    /// Serve the reader API.
    Serve {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Concurrent classifications; one per core when absent.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Write a synthetic corpus.
    MakeFixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "glyphs")]
        kind: FixtureKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 40)]
        per_class: usize,
        /// Signs per class in the held-out provenience (styles only).
        #[arg(long, default_value_t = 10)]
        held_out: usize,
        /// Visualizations to render; all when empty.
        #[arg(long, value_delimiter = ',')]
        viz: Vec<VisualizationKind>,
    },
}

fn set_of(items: impl IntoIterator<Item = String>) -> BTreeSet<String> {
    items.into_iter().filter(|s| !s.is_empty()).collect()
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Validate { corpus, min_instances } => commands::validate(&corpus, min_instances),
        Command::Split(a) => commands::split(&a.ctx()?),
        Command::Train(a) => commands::train(&a.ctx()?),
        Command::FineTune { spec, checkpoint } => commands::fine_tune(&spec.ctx()?, checkpoint.as_deref()),
        Command::Eval { spec, checkpoint } => commands::eval(&spec.ctx()?, checkpoint.as_deref()),
        Command::Repeats(a) => commands::repeats(&a.ctx()?),
        Command::VizSweep { spec, visualizations } => commands::viz_sweep(&spec.ctx()?, &visualizations),
        Command::GridReport { spec, baseline, compare } => commands::grid(&spec.ctx()?, &baseline, &compare),
        Command::FreqReport { spec, checkpoint } => commands::freq(&spec.ctx()?, checkpoint.as_deref()),
        Command::Transfer {
            spec,
            combinations,
            held_out,
        } => {
            let combos: Vec<BTreeSet<String>> = combinations
                .iter()
                .map(|c| set_of(c.split('+').map(str::to_string)))
                .collect();
            commands::transfer_cmd(&spec.ctx()?, &combos, &set_of(held_out))
        }
        Command::Embed {
            spec,
            checkpoint,
            set,
            query,
            k,
        } => commands::embed(&spec.ctx()?, checkpoint.as_deref(), &set, query.as_deref(), k),
        Command::Project { spec, checkpoint, set } => commands::project(&spec.ctx()?, checkpoint.as_deref(), &set),
        Command::Plot(a) => commands::plot_all(&a.ctx()?),
        Command::Serve {
            corpus,
            checkpoint,
            port,
            workers,
        } => {
            let config = cuneo_service::ServiceConfig {
                corpus,
                checkpoint,
                port,
                workers,
            };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(cuneo_service::serve(config))?;
            Ok(())
        }
        Command::MakeFixture {
            out,
            kind,
            seed,
            per_class,
            held_out,
            viz,
        } => {
            let mut spec = match kind {
                FixtureKind::Glyphs => FixtureSpec::glyphs(seed, per_class),
                FixtureKind::Styles => FixtureSpec::styles(seed, per_class, held_out),
            };
            if !viz.is_empty() {
                spec.visualizations = viz;
            }
            commands::make_fixture(&out, &spec).map(|_| ())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::new(&cli.log))
        .with_writer(std::io::stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
