//! Command line: `generate`, `run` and `report`.

use std::path::PathBuf;

use adpo_core::datagen::{self, FeatureSource};
use adpo_core::{Algorithm, GeneratorMode, GeneratorSpec, ModelConfig, RefitSchedule};
use clap::{Args, Parser, Subcommand};

use crate::dataset_file::{self, DatasetMeta};
use crate::error::{HarnessError, Result};
use crate::plan::{self, Experiment, ExperimentPlan};
use crate::{report, runner};

#[derive(Debug, Parser)]
#[command(name = "adpo", version, about = "Active preference data selection for log-linear DPO")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a preference dataset and its metadata sidecar.
    Generate(GenerateArgs),
    /// Run selectors over budgets and seeds and write a results CSV.
    Run(RunArgs),
    /// Aggregate a results CSV into a summary, a table and charts.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Output dataset path (JSON Lines); metadata goes to `<out>.meta.json`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 8192)]
    pub n: usize,
    /// Feature dimension in gaussian mode.
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    /// `beta` of the stored optimal policy.
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    /// Embedding file with `phi` rows; with `label` fields rows are paired
    /// by class, otherwise they are used as feature differences.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub positive_label: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub feature_ridge: f64,
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    #[arg(long, default_value_t = 500)]
    pub examples_per_class: usize,
    /// Within-cluster spread of the synthetic class model.
    #[arg(long, default_value_t = 2.0)]
    pub cluster_noise: f64,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Selector to run; repeat for several. All five when omitted.
    #[arg(long = "algo")]
    pub algorithms: Vec<Algorithm>,
    /// Comma list or `pow2:LO:HI`.
    #[arg(long, default_value = "pow2:5:12")]
    pub budgets: String,
    /// Comma list or half-open range `LO..HI`.
    #[arg(long, default_value = "0..20")]
    pub seeds: String,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// Confidence multiplier of the optimistic weights; 0 uses plug-in weights.
    #[arg(long, default_value_t = 3.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = adpo_core::selection::DEFAULT_POOL_SIZE)]
    pub pool: usize,
    /// Score every remaining point in each round.
    #[arg(long)]
    pub no_pool: bool,
    #[arg(long, default_value = "doubling")]
    pub refit: RefitSchedule,
    /// Restrict policies to the unit ball.
    #[arg(long)]
    pub constrain_unit_ball: bool,
    /// Output directory for `results.csv` and `timings.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Results CSV from `run`.
    pub results: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn generator_spec(args: &GenerateArgs, has_labels: bool) -> GeneratorSpec {
    GeneratorSpec {
        mode: if has_labels { GeneratorMode::ClassFeatures } else { GeneratorMode::Gaussian },
        n_points: args.n,
        dim: args.dim,
        positive_label: args.positive_label,
        feature_ridge: args.feature_ridge,
        beta: args.beta,
        n_classes: args.classes,
        examples_per_class: args.examples_per_class,
        cluster_noise: args.cluster_noise,
        ..GeneratorSpec::desk(args.seed)
    }
}

pub fn generate(args: &GenerateArgs) -> Result<()> {
    let (spec, dataset, truth, source) = match &args.embeddings {
        None => {
            let spec = generator_spec(args, false);
            let (ds, truth) = datagen::generate(&spec, FeatureSource::Gaussian)?;
            (spec, ds, truth, None)
        }
        Some(path) => {
            let emb = dataset_file::read_embeddings(path)?;
            let mut spec = generator_spec(args, emb.labels.is_some());
            spec.dim = emb.rows.ncols();
            let (ds, truth) = match &emb.labels {
                Some(labels) => {
                    datagen::generate(&spec, FeatureSource::Classes { features: &emb.rows, labels })?
                }
                None => {
                    spec.n_points = emb.rows.nrows();
                    datagen::generate(&spec, FeatureSource::Differences(&emb.rows))?
                }
            };
            (spec, ds, truth, Some(path.display().to_string()))
        }
    };
    let meta = DatasetMeta::new(&spec, &truth, source);
    dataset_file::write_dataset(&args.out, &dataset, &meta)
}

pub fn experiment(args: &RunArgs) -> Result<Experiment> {
    let algorithms = if args.algorithms.is_empty() { Algorithm::ALL.to_vec() } else { args.algorithms.clone() };
    let mut exp = Experiment::new(algorithms, plan::parse_budgets(&args.budgets)?, plan::parse_seeds(&args.seeds)?);
    exp.model = ModelConfig::new(args.beta, args.gamma, args.alpha)?;
    exp.pool_size = (!args.no_pool).then_some(args.pool);
    exp.refit = args.refit;
    if args.constrain_unit_ball {
        exp.fit = exp.fit.unit_ball();
    }
    Ok(exp)
}

pub fn run(plan: &ExperimentPlan) -> Result<PathBuf> {
    let (dataset, meta) = dataset_file::load(&plan.dataset)?;
    let rows = runner::run(&dataset, &meta, &plan.experiment)?;
    std::fs::create_dir_all(&plan.out_dir).map_err(|e| HarnessError::io(&plan.out_dir, e))?;
    let results = plan.out_dir.join("results.csv");
    runner::write_results(&results, &rows)?;
    runner::write_timings(&plan.out_dir.join("timings.csv"), &rows)?;
    Ok(results)
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(args) => generate(&args),
        Command::Run(args) => {
            let plan = ExperimentPlan { dataset: args.dataset.clone(), out_dir: args.out.clone(), experiment: experiment(&args)? };
            run(&plan).map(|_| ())
        }
        Command::Report(args) => report::write_report(&args.results, &args.out).map(|_| ()),
    }
}
