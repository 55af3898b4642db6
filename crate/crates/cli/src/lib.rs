//! `netexplain` command line: prepare flow tables, train and evaluate the
//! detector, and produce local/global explanations.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data error,
//! 4 runtime failure.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use netexplain_core::cart::CartTree;
use netexplain_core::data::{self, DataError, EncodedDataset, RawTable};
use netexplain_core::globalexplain::{importance_csv, weight_table};
use netexplain_core::localexplain::{render_text, ExplainOptions, TabularExplainer};
use netexplain_core::pipeline::{
    self, Balance, DetectionReport, ExperimentConfig, PipelineError,
};
use netexplain_core::schema::FeatureSchema;
use netexplain_core::synth;

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{0}")]
    Runtime(String),
}

impl From<PipelineError> for CliError {
    fn from(err: PipelineError) -> Self {
        match err {
            PipelineError::Data(e) => CliError::Data(e),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Runtime(err.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(err: serde_json::Error) -> Self {
        CliError::Runtime(err.to_string())
    }
}

fn exit_code(err: &CliError) -> i32 {
    match err {
        CliError::Config(_) => 2,
        CliError::Data(_) => 3,
        CliError::Runtime(_) => 4,
    }
}

#[derive(Parser)]
#[command(
    name = "netexplain",
    version,
    about = "Explainable flow-level intrusion detection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic flow CSV with a planted signal.
    Synth(SynthArgs),
    /// Clean raw CSVs: merge, drop heavily missing rows, impute.
    Prepare(PrepareArgs),
    /// Train a detector end to end and write a run directory.
    Train(TrainArgs),
    /// Score a trained model on a labeled CSV.
    Evaluate(EvaluateArgs),
    /// Produce local explanations for rows of a CSV.
    Explain(ExplainArgs),
    /// Classify rows and attach explanations to low-confidence verdicts.
    Detect(DetectArgs),
}

#[derive(Args)]
struct SchemaArg {
    /// `unsw-nb15`, `synth`, or a path to a schema JSON file.
    #[arg(long, default_value = "unsw-nb15", env = "NETEXPLAIN_SCHEMA")]
    schema: String,
}

impl SchemaArg {
    fn load(&self) -> Result<FeatureSchema, CliError> {
        match self.schema.as_str() {
            "unsw-nb15" => Ok(FeatureSchema::unsw_nb15()),
            "synth" => Ok(synth::schema()),
            path => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read schema `{path}`: {e}")))?;
                FeatureSchema::from_json(&text)
                    .map_err(|e| CliError::Config(format!("bad schema `{path}`: {e}")))
            }
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 1000)]
    rows: usize,
    #[arg(long, default_value_t = 42, env = "NETEXPLAIN_SEED")]
    seed: u64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Also write the matching schema JSON here.
    #[arg(long)]
    schema_out: Option<PathBuf>,
}

#[derive(Args)]
struct PrepareArgs {
    /// Input CSV files; multiple parts are merged in order.
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    #[command(flatten)]
    schema: SchemaArg,
    /// Drop rows whose missing-cell fraction exceeds this.
    #[arg(long, default_value_t = 0.3, env = "NETEXPLAIN_NAN_THRESHOLD")]
    nan_threshold: f64,
    /// Cleaned CSV output path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    #[command(flatten)]
    schema: SchemaArg,
    /// Run directory; created if absent.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 42, env = "NETEXPLAIN_SEED")]
    seed: u64,
    #[arg(long, default_value_t = 0.8, env = "NETEXPLAIN_TRAIN_RATIO")]
    train_ratio: f64,
    #[arg(long, default_value_t = 0.3, env = "NETEXPLAIN_NAN_THRESHOLD")]
    nan_threshold: f64,
    /// Training-side class balancing: none, smote or undersample.
    #[arg(long, default_value = "none", env = "NETEXPLAIN_BALANCE")]
    balance: String,
    #[arg(long, default_value_t = 5)]
    smote_k: usize,
    #[arg(long, default_value_t = 1.0)]
    smote_ratio: f64,
    /// Candidate maximum depths, comma separated.
    #[arg(long, default_value = "4,6,8,10,12,16,20", env = "NETEXPLAIN_DEPTH_GRID")]
    depth_grid: String,
    #[arg(long, default_value_t = 5, env = "NETEXPLAIN_CV_FOLDS")]
    cv_folds: usize,
    #[arg(long, default_value_t = 2)]
    min_samples_split: usize,
    #[arg(long, default_value_t = 5, env = "NETEXPLAIN_PERM_ITERS")]
    perm_iters: usize,
    #[arg(long, default_value_t = 80.0, env = "NETEXPLAIN_WARN_THRESHOLD")]
    warn_threshold: f64,
}

#[derive(Args)]
struct ModelArg {
    /// Model bundle written by `train` (`models/bundle.json`).
    #[arg(long, env = "NETEXPLAIN_MODEL")]
    model: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    model: ModelArg,
    #[arg(long)]
    input: PathBuf,
    /// Metrics JSON output; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExplainArgs {
    #[command(flatten)]
    model: ModelArg,
    #[arg(long)]
    input: PathBuf,
    /// Explain only the first N rows.
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long, default_value_t = 10)]
    top_features: usize,
    #[arg(long, default_value_t = 5000, env = "NETEXPLAIN_EXPLAIN_SAMPLES")]
    n_samples: usize,
    #[arg(long, default_value_t = 0, env = "NETEXPLAIN_SEED")]
    seed: u64,
    /// Directory for per-row explanation JSON; stdout text when omitted.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct DetectArgs {
    #[command(flatten)]
    model: ModelArg,
    #[arg(long)]
    input: PathBuf,
    /// Warn when confidence (0-100) is at or below this value.
    #[arg(long, default_value_t = 80.0, env = "NETEXPLAIN_WARN_THRESHOLD")]
    threshold: f64,
    /// Warn on every predicted attack regardless of confidence.
    #[arg(long, env = "NETEXPLAIN_STRICT_ATTACK")]
    strict_attack: bool,
    #[arg(long, default_value_t = 1000, env = "NETEXPLAIN_EXPLAIN_SAMPLES")]
    n_samples: usize,
    #[arg(long, default_value_t = 0, env = "NETEXPLAIN_SEED")]
    seed: u64,
    /// Detection report JSON path; stdout summary lines either way.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Everything `evaluate`/`explain`/`detect` need: the fitted tree plus the
/// training-side encoders and statistics.
#[derive(Serialize, Deserialize)]
struct ModelBundle {
    model: CartTree,
    train: EncodedDataset,
}

impl ModelBundle {
    fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read model `{}`: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("bad model bundle `{}`: {e}", path.display())))
    }

    /// Encode a raw CSV with the frozen training encoders.
    fn encode(&self, input: &Path) -> Result<EncodedDataset, CliError> {
        let table = data::load_csv(input, &self.train.schema)?;
        let imputed = data::impute_median(&data::drop_high_nan_rows(&table, 0.3))?;
        Ok(data::encode_with(&self.train, &imputed)?)
    }
}

fn load_merged(inputs: &[PathBuf], schema: &FeatureSchema) -> Result<RawTable, CliError> {
    let parts: Vec<RawTable> = inputs
        .iter()
        .map(|p| data::load_csv(p, schema))
        .collect::<Result<_, _>>()?;
    Ok(data::merge_parts(&parts)?)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn parse_depth_grid(text: &str) -> Result<Vec<usize>, CliError> {
    let grid: Result<Vec<usize>, _> = text.split(',').map(|t| t.trim().parse()).collect();
    match grid {
        Ok(g) if !g.is_empty() => Ok(g),
        _ => Err(CliError::Config(format!("bad depth grid `{text}`"))),
    }
}

fn cmd_synth(args: SynthArgs) -> Result<(), CliError> {
    let table = synth::generate(args.rows, args.seed);
    data::write_csv(&table, &args.out)?;
    if let Some(schema_out) = &args.schema_out {
        write_json(schema_out, &table.schema)?;
    }
    println!("wrote {} rows to {}", args.rows, args.out.display());
    Ok(())
}

fn cmd_prepare(args: PrepareArgs) -> Result<(), CliError> {
    let schema = args.schema.load()?;
    let merged = load_merged(&args.input, &schema)?;
    let kept = data::drop_high_nan_rows(&merged, args.nan_threshold);
    let dropped = merged.n_rows() - kept.n_rows();
    let clean = data::impute_median(&kept)?;
    data::write_csv(&clean, &args.out)?;
    println!(
        "prepared {} rows ({} dropped, {} cells imputed) -> {}",
        clean.n_rows(),
        dropped,
        kept.missing_count(),
        args.out.display()
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let schema = args.schema.load()?;
    let balance = match args.balance.as_str() {
        "none" => Balance::None,
        "smote" => Balance::Smote {
            k: args.smote_k,
            ratio: args.smote_ratio,
        },
        "undersample" => Balance::Undersample,
        other => return Err(CliError::Config(format!("unknown balance method `{other}`"))),
    };
    let config = ExperimentConfig {
        seed: args.seed,
        train_ratio: args.train_ratio,
        nan_row_threshold: args.nan_threshold,
        balance,
        depth_grid: parse_depth_grid(&args.depth_grid)?,
        cv_folds: args.cv_folds,
        min_samples_split: args.min_samples_split,
        permutation_iters: args.perm_iters,
        warn_threshold: args.warn_threshold,
    };

    let table = load_merged(&args.input, &schema)?;
    let outcome = pipeline::run_experiment(&table, &config)?;

    // manifest goes first so a crashed run still records its inputs
    fs::create_dir_all(&args.out_dir)?;
    write_json(&args.out_dir.join("manifest.json"), &outcome.manifest)?;
    write_json(
        &args.out_dir.join("models/bundle.json"),
        &ModelBundle {
            model: outcome.model.clone(),
            train: outcome.train.clone(),
        },
    )?;
    write_json(&args.out_dir.join("reports/metrics.json"), &outcome.metrics)?;
    write_json(
        &args.out_dir.join("reports/permutation_importance.json"),
        &outcome.permutation,
    )?;
    let reports = args.out_dir.join("reports");
    fs::write(
        reports.join("permutation_importance.csv"),
        importance_csv(&outcome.permutation),
    )?;
    fs::write(
        reports.join("weight_table.txt"),
        weight_table(&outcome.permutation, 10),
    )?;

    println!(
        "depth {} (5-fold CV over {:?}); test accuracy {:.4}; run dir {}",
        outcome.manifest.chosen_depth,
        config.depth_grid,
        outcome.metrics.accuracy,
        args.out_dir.display()
    );
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let bundle = ModelBundle::load(&args.model.model)?;
    let encoded = bundle.encode(&args.input)?;
    let predictions: Vec<u8> = encoded
        .matrix
        .iter()
        .map(|x| netexplain_core::BlackBoxModel::predict(&bundle.model, x))
        .collect();
    let metrics = pipeline::compute_metrics(&encoded.labels, &predictions);
    match &args.out {
        Some(path) => {
            write_json(path, &metrics)?;
            println!("accuracy {:.4} -> {}", metrics.accuracy, path.display());
        }
        None => println!("{}", serde_json::to_string_pretty(&metrics)?),
    }
    Ok(())
}

fn cmd_explain(args: ExplainArgs) -> Result<(), CliError> {
    let bundle = ModelBundle::load(&args.model.model)?;
    let encoded = bundle.encode(&args.input)?;
    let explainer = TabularExplainer::from_train(&bundle.train);
    let opts = ExplainOptions {
        m: args.top_features,
        n_samples: args.n_samples,
        seed: args.seed,
        ..ExplainOptions::default()
    };
    let limit = args.limit.unwrap_or(encoded.n_rows());
    let rows: Vec<Vec<f64>> = encoded.matrix.iter().take(limit).cloned().collect();
    let explanations = pipeline::explain_batch(&bundle.model, &explainer, &rows, 0, &opts)?;

    match &args.out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            for exp in &explanations {
                write_json(&dir.join(format!("explanation_{:06}.json", exp.instance_id)), exp)?;
            }
            println!("wrote {} explanations to {}", explanations.len(), dir.display());
        }
        None => {
            for exp in &explanations {
                println!("{}", render_text(exp));
            }
        }
    }
    Ok(())
}

fn cmd_detect(args: DetectArgs) -> Result<(), CliError> {
    let bundle = ModelBundle::load(&args.model.model)?;
    let encoded = bundle.encode(&args.input)?;
    let explainer = TabularExplainer::from_train(&bundle.train);
    let opts = ExplainOptions {
        n_samples: args.n_samples,
        seed: args.seed,
        ..ExplainOptions::default()
    };

    let mut reports: Vec<DetectionReport> = Vec::with_capacity(encoded.n_rows());
    for (i, row) in encoded.matrix.iter().enumerate() {
        let report = pipeline::detect(
            &bundle.model,
            &explainer,
            row,
            i as u64,
            args.threshold,
            args.strict_attack,
            &opts,
        )?;
        let verdict = if report.predicted == 1 { "attack" } else { "normal" };
        let flag = if report.warning { " WARNING" } else { "" };
        println!(
            "row {:6}  {}  confidence {:6.2}{}",
            i, verdict, report.confidence, flag
        );
        reports.push(report);
    }
    let warnings = reports.iter().filter(|r| r.warning).count();
    if let Some(path) = &args.out {
        write_json(path, &reports)?;
    }
    println!("{} rows, {} warnings", reports.len(), warnings);
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Prepare(args) => cmd_prepare(args),
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Explain(args) => cmd_explain(args),
        Command::Detect(args) => cmd_detect(args),
    }
}

pub fn run() {
    let cli = Cli::parse();
    if let Err(err) = dispatch(cli) {
        eprintln!("error: {err}");
        std::process::exit(exit_code(&err));
    }
}
