//! `dual` command-line runner: dataset generation, training, ablation,
//! parameter sweeps and the vacuity/EU correlation study.
//!
//! Exit codes: 0 on success, 2 on a numeric failure during training,
//! 64 on a usage or configuration error, 1 on I/O failure.

pub mod config;

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use dual_core::data::{class_counts, export_dataset, generate, import_dataset, realized_imbalance, Dataset};
use dual_core::experiment::{
    ablate, correlation_study, sweep, write_ablation_csv, write_sweep_csv, CorrelationSource,
    SweepParameter, Variant, MIN_STUDY_PAIRS,
};
use dual_core::metrics::{fmt6, write_metrics_csv, write_pairs_csv};
use dual_core::trainer::{train, TrainState};
use dual_core::Error;

use config::ExperimentConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "dual", version, about = "Uncertainty-guided evidential training experiments")]
pub struct Cli {
    /// JSON experiment config; omitted fields take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides both the data seed and the training seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for ablation and sweep runs.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Overrides the objective and policy flags of a training run.
    #[arg(long, global = true, value_enum)]
    pub policy: Option<PolicyMode>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyMode {
    On,
    Off,
    EuOnly,
}

impl PolicyMode {
    fn variant(self) -> Variant {
        match self {
            PolicyMode::On => Variant::EdlEuAu,
            PolicyMode::Off => Variant::EdlOnly,
            PolicyMode::EuOnly => Variant::EdlEu,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    Sigma,
    Epsilon,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write train/test CSVs and a metadata sidecar.
    GenData,
    /// Train one model; write per-epoch metrics and the final state.
    Train {
        /// Dataset directory from `gen-data`; generated inline if absent.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Run the three policy variants over several seeds.
    Ablate {
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
    },
    /// Full-policy runs over a list of σ or ε values.
    Sweep {
        #[arg(long, value_enum)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
    },
    /// Spearman correlation between vacuity and entropy-based EU.
    Analyze {
        /// Sample Dirichlet states instead of reading a model.
        #[arg(long, conflicts_with = "state", required_unless_present = "state")]
        synthetic: bool,
        /// Trained state written by `train`.
        #[arg(long)]
        state: Option<PathBuf>,
        /// Dataset directory providing the test split for `--state`.
        #[arg(long, requires = "state")]
        data: Option<PathBuf>,
        #[arg(short = 'n', long, default_value_t = 2000)]
        n: usize,
        /// Class count for the synthetic sampler.
        #[arg(long, default_value_t = 10)]
        k: usize,
    },
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(e) => match e {
                Error::NonFiniteLoss { .. } | Error::Numeric(_) => EXIT_NUMERIC,
                Error::Io(_) | Error::Csv(_) => EXIT_IO,
                _ => EXIT_USAGE,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args` (including the program name), runs the command, and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn effective_config(cli: &Cli) -> CliResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.data.seed = seed;
        cfg.train.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(mode) = cli.policy {
        let applied = mode.variant().apply(&cfg.train_config());
        cfg.train.objective = applied.objective;
        cfg.policy = applied.policy;
    }
    if cli.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    Ok(cfg)
}

fn prepare_output(cfg: &ExperimentConfig) -> CliResult<PathBuf> {
    let dir = cfg.output_dir.clone();
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("effective_config.json"), cfg.to_json()?)?;
    Ok(dir)
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn execute(cli: &Cli) -> CliResult<()> {
    let mut cfg = effective_config(cli)?;
    match &cli.command {
        Command::GenData => {
            cfg.validate()?;
            let dir = prepare_output(&cfg)?;
            let data = generate(&cfg.data)?;
            let meta = export_dataset(&dir, &cfg.data, &data)?;
            let counts = class_counts(&cfg.data)?;
            println!("realized imbalance ratio: {:.4}", realized_imbalance(&counts));
            let joined: Vec<String> = meta.train_counts.iter().map(|c| c.to_string()).collect();
            println!("train counts per class: {}", joined.join(","));
            println!("wrote {}", dir.display());
        }
        Command::Train { data } => {
            let dataset = match data {
                Some(path) => {
                    let (meta, dataset) = import_dataset(path)?;
                    cfg.data = meta.spec;
                    dataset
                }
                None => {
                    cfg.data.validate()?;
                    generate(&cfg.data)?
                }
            };
            cfg.validate()?;
            let dir = prepare_output(&cfg)?;
            let (state, last) = train(&dataset, &cfg.net_spec(), &cfg.train_config())?;
            write_metrics_csv(create(&dir.join("metrics.csv"))?, &state.history)?;
            fs::write(dir.join("state.json"), state.to_json()?)?;
            println!(
                "epoch {}: overall {} avg_class {} head {} tail {}",
                last.epoch,
                fmt6(last.overall_acc),
                fmt6(last.avg_class_acc),
                fmt6(last.head_acc),
                fmt6(last.tail_acc)
            );
        }
        Command::Ablate { seeds } => {
            if seeds.len() < 3 {
                return Err(CliError::Usage("ablate needs at least 3 seeds".into()));
            }
            cfg.validate()?;
            let dir = prepare_output(&cfg)?;
            let report = ablate(&cfg.study_base(), seeds, cli.jobs)?;
            write_ablation_csv(create(&dir.join("ablation.csv"))?, &report.rows())?;
            for s in &report.summary {
                println!(
                    "{}: overall {} avg_class {} head {} tail {}",
                    s.variant.name(),
                    fmt6(s.mean.overall_acc),
                    fmt6(s.mean.avg_class_acc),
                    fmt6(s.mean.head_acc),
                    fmt6(s.mean.tail_acc)
                );
            }
        }
        Command::Sweep { param, values, seeds } => {
            cfg.validate()?;
            let dir = prepare_output(&cfg)?;
            let parameter = match param {
                SweepParam::Sigma => SweepParameter::Sigma,
                SweepParam::Epsilon => SweepParameter::Epsilon,
            };
            let report = sweep(parameter, values, &cfg.study_base(), seeds, cli.jobs)?;
            let path = dir.join(format!("sweep_{}.csv", parameter.name()));
            write_sweep_csv(create(&path)?, &report)?;
            for p in &report.points {
                println!(
                    "{}={}: avg_class {} tail {}",
                    parameter.name(),
                    p.value,
                    fmt6(p.mean.avg_class_acc),
                    fmt6(p.mean.tail_acc)
                );
            }
        }
        Command::Analyze {
            synthetic,
            state,
            data,
            n,
            k,
        } => {
            if *n < MIN_STUDY_PAIRS {
                return Err(CliError::Usage(format!(
                    "analyze needs -n >= {MIN_STUDY_PAIRS}, got {n}"
                )));
            }
            let seed = cli.seed.unwrap_or(0);
            let study = if *synthetic {
                correlation_study(&CorrelationSource::Synthetic { k: *k }, *n, seed)?
            } else {
                let path = state.as_ref().expect("clap enforces --state without --synthetic");
                let trained = TrainState::from_json(&fs::read_to_string(path)?)?;
                let dataset: Dataset = match data {
                    Some(dir) => import_dataset(dir)?.1,
                    None => {
                        cfg.data.validate()?;
                        generate(&cfg.data)?
                    }
                };
                let source = CorrelationSource::Model {
                    network: &trained.network,
                    samples: &dataset.test,
                };
                correlation_study(&source, *n, seed)?
            };
            let dir = prepare_output(&cfg)?;
            write_pairs_csv(create(&dir.join("correlation_pairs.csv"))?, &study.pairs)?;
            println!("spearman(vacuity, entropy_eu) = {}", fmt6(study.spearman));
        }
    }
    Ok(())
}
