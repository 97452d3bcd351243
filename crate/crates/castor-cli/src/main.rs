//! Command-line front end for the castor time series classifier.
//!
//! Subcommands cover the full workflow: `synth` writes a labelled
//! benchmark dataset, `fit` trains a model and saves it, `predict` and
//! `transform` apply a saved model to new series, `evaluate` runs
//! repeated stratified cross-validation, `ablate` sweeps one
//! hyperparameter axis on shared folds, `bench` measures how fit time
//! scales with dataset size, and `export` dumps a model as JSON.
//!
//! Every command is deterministic given its inputs, flags, and seed.
//! Errors exit with 2 (bad flags or configuration), 3 (unreadable or
//! malformed data and model files), or 4 (internal numeric failure).

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use castor::{
    ablate, ablation_csv, bench_scaling, evaluate, fit_pipeline, generate, load_ucr_tsv,
    shuffle_labels, transform, write_ablation_csv, write_ucr_tsv, AblationAxis, AggregateMode,
    BenchAxis, CastorConfig, CastorError, CastorModel, NormScope, OccurrenceMode, PipelineConfig,
    Result, ScalerKind, SynthConfig,
};

#[derive(Parser)]
#[command(
    name = "castor",
    version,
    about = "Competing dilated shapelet transform for time series classification",
    propagate_version = true
)]
struct Cli {
    /// Cap the rayon worker pool (default: one worker per core).
    /// Results do not depend on the thread count.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on a UCR-style TSV file and save the model.
    Fit(FitArgs),
    /// Label a TSV file with a saved model and emit per-class scores.
    Predict(PredictArgs),
    /// Emit the feature matrix of a TSV file under a saved model.
    Transform(TransformArgs),
    /// Repeated stratified k-fold cross-validation on one dataset.
    Evaluate(EvaluateArgs),
    /// Sweep one hyperparameter axis, all runs on identical folds.
    Ablate(AblateArgs),
    /// Time sampling+transform on stretched copies of a dataset.
    Bench(BenchArgs),
    /// Generate a labelled synthetic dataset as UCR-style TSV.
    Synth(SynthArgs),
    /// Dump a saved model as JSON for inspection.
    Export(ExportArgs),
}

/// Flags that configure shapelet sampling and the transform.
#[derive(Args)]
struct ShapeletFlags {
    /// Number of shapelet groups.
    #[arg(long, default_value_t = 128)]
    groups: usize,

    /// Shapelets per group.
    #[arg(long, default_value_t = 16)]
    shapelets: usize,

    /// Shapelet length (odd, at least 3).
    #[arg(long, default_value_t = 9)]
    shapelet_length: usize,

    /// Lower percentile of the sorted distance profile for threshold sampling.
    #[arg(long, default_value_t = 0.01)]
    lower: f64,

    /// Upper percentile of the sorted distance profile for threshold sampling.
    #[arg(long, default_value_t = 0.2)]
    upper: f64,

    /// Probability that a group compares under z-normalization.
    #[arg(long, default_value_t = 0.5)]
    norm_prob: f64,

    /// Give half the groups the first-order differenced series (default).
    #[arg(long, overrides_with = "no_diff")]
    diff: bool,

    /// Use only the raw series representation.
    #[arg(long, overrides_with = "diff")]
    no_diff: bool,

    /// Aggregation of the distance-minimum feature.
    #[arg(long, value_enum, default_value_t = ModeArg::Soft)]
    min_mode: ModeArg,

    /// Aggregation of the distance-maximum feature.
    #[arg(long, value_enum, default_value_t = ModeArg::Hard)]
    max_mode: ModeArg,

    /// Occurrence counting: per shapelet alone or competing within the group.
    #[arg(long, value_enum, default_value_t = OccurrenceArg::Independent)]
    occurrence: OccurrenceArg,

    /// Granularity of the normalization coin flip.
    #[arg(long, value_enum, default_value_t = ScopeArg::Group)]
    norm_scope: ScopeArg,

    /// Master seed; every random draw derives from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ShapeletFlags {
    fn to_config(&self) -> CastorConfig {
        CastorConfig {
            groups: self.groups,
            shapelets_per_group: self.shapelets,
            shapelet_len: self.shapelet_length,
            rho_lower: self.lower,
            rho_upper: self.upper,
            rho_norm: self.norm_prob,
            use_diff: !self.no_diff,
            min_mode: self.min_mode.into(),
            max_mode: self.max_mode.into(),
            occurrence_mode: self.occurrence.into(),
            norm_scope: self.norm_scope.into(),
            seed: self.seed,
        }
    }
}

/// Flags that configure the ridge classifier stage.
#[derive(Args)]
struct ClassifierFlags {
    /// Regularization grid; the first value with minimal LOOCV error wins.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.01, 1.0, 10.0])]
    alphas: Vec<f64>,

    /// Feature scaling applied before the ridge fit.
    #[arg(long, value_enum, default_value_t = ScalerArg::Sparse)]
    scaler: ScalerArg,
}

fn pipeline_config(shapelet: &ShapeletFlags, classifier: &ClassifierFlags) -> PipelineConfig {
    PipelineConfig {
        castor: shapelet.to_config(),
        alphas: classifier.alphas.clone(),
        scaler: classifier.scaler.into(),
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Hard,
    Soft,
}

impl From<ModeArg> for AggregateMode {
    fn from(v: ModeArg) -> Self {
        match v {
            ModeArg::Hard => AggregateMode::Hard,
            ModeArg::Soft => AggregateMode::Soft,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum OccurrenceArg {
    Independent,
    Competing,
}

impl From<OccurrenceArg> for OccurrenceMode {
    fn from(v: OccurrenceArg) -> Self {
        match v {
            OccurrenceArg::Independent => OccurrenceMode::Independent,
            OccurrenceArg::Competing => OccurrenceMode::Competing,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ScopeArg {
    Group,
    Shapelet,
}

impl From<ScopeArg> for NormScope {
    fn from(v: ScopeArg) -> Self {
        match v {
            ScopeArg::Group => NormScope::Group,
            ScopeArg::Shapelet => NormScope::Shapelet,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ScalerArg {
    Sparse,
    Standard,
    None,
}

impl From<ScalerArg> for ScalerKind {
    fn from(v: ScalerArg) -> Self {
        match v {
            ScalerArg::Sparse => ScalerKind::Sparse,
            ScalerArg::Standard => ScalerKind::Standard,
            ScalerArg::None => ScalerKind::None,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    /// (groups, shapelets) pairs with a fixed product.
    Gk,
    /// Hard/soft combinations for the min and max features.
    Minmax,
    /// Independent versus competing occurrence counting.
    Occurrence,
    /// Grid over the occurrence-threshold percentile window.
    Rho,
    /// Normalization probability crossed with shapelet length.
    Norml,
    /// First-order differencing on or off.
    Diff,
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchAxisArg {
    /// Replicate samples to stretch the dataset.
    Samples,
    /// Tile each series to stretch the time axis.
    Length,
}

impl From<BenchAxisArg> for BenchAxis {
    fn from(v: BenchAxisArg) -> Self {
        match v {
            BenchAxisArg::Samples => BenchAxis::Samples,
            BenchAxisArg::Length => BenchAxis::Length,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Binary,
}

#[derive(Args)]
struct FitArgs {
    /// Training data, one `label<TAB>v1<TAB>...<TAB>vm` row per series.
    train: PathBuf,

    /// Where to write the fitted model.
    #[arg(short, long)]
    output: PathBuf,

    #[command(flatten)]
    shapelet: ShapeletFlags,

    #[command(flatten)]
    classifier: ClassifierFlags,
}

#[derive(Args)]
struct PredictArgs {
    /// A model file produced by `fit`.
    model: PathBuf,

    /// Data to label, same TSV layout as training data.
    data: PathBuf,

    /// Write the predictions CSV here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct TransformArgs {
    /// A model file produced by `fit`.
    model: PathBuf,

    /// Data to transform, same TSV layout as training data.
    data: PathBuf,

    /// Where to write the feature matrix.
    #[arg(short, long)]
    output: PathBuf,

    /// Feature matrix encoding.
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Dataset to cross-validate on.
    data: PathBuf,

    /// Number of stratified folds.
    #[arg(long, default_value_t = 5)]
    folds: usize,

    /// How many times to repeat the k-fold protocol with fresh folds.
    #[arg(long, default_value_t = 5)]
    repeats: usize,

    /// Write the full report as JSON here.
    #[arg(long)]
    json: Option<PathBuf>,

    /// Write the per-fold accuracies as CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,

    #[command(flatten)]
    shapelet: ShapeletFlags,

    #[command(flatten)]
    classifier: ClassifierFlags,
}

#[derive(Args)]
struct AblateArgs {
    /// Dataset to cross-validate on.
    data: PathBuf,

    /// Which hyperparameter axis to sweep.
    #[arg(long, value_enum)]
    axis: AxisArg,

    /// Fixed groups x shapelets product for the `gk` axis (power of two).
    #[arg(long, default_value_t = 2048)]
    product: usize,

    /// Number of stratified folds per configuration.
    #[arg(long, default_value_t = 5)]
    folds: usize,

    /// Repeats per configuration (1 keeps sweeps affordable).
    #[arg(long, default_value_t = 1)]
    repeats: usize,

    /// Write the sweep CSV here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,

    #[command(flatten)]
    shapelet: ShapeletFlags,

    #[command(flatten)]
    classifier: ClassifierFlags,
}

#[derive(Args)]
struct BenchArgs {
    /// Base dataset to stretch and time.
    data: PathBuf,

    /// Which dimension to stretch.
    #[arg(long, value_enum)]
    axis: BenchAxisArg,

    /// Multiplication factors, timed as the median of three runs each.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1, 2, 4])]
    factors: Vec<usize>,

    /// Write the timing CSV here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,

    #[command(flatten)]
    shapelet: ShapeletFlags,
}

#[derive(Args)]
struct SynthArgs {
    /// Where to write the dataset TSV.
    #[arg(short, long)]
    output: PathBuf,

    /// Number of classes (each gets its own localized pattern).
    #[arg(long, default_value_t = 2)]
    classes: usize,

    /// Number of series.
    #[arg(long, default_value_t = 200)]
    samples: usize,

    /// Time steps per series.
    #[arg(long, default_value_t = 128)]
    length: usize,

    /// Height of the class pattern over the unit-variance noise floor.
    #[arg(long, default_value_t = 4.0)]
    amplitude: f64,

    /// Standard deviation of the additive Gaussian noise.
    #[arg(long, default_value_t = 1.0)]
    noise: f64,

    /// Generator seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Randomly permute the labels afterwards (negative-control data).
    #[arg(long)]
    shuffle_seed: Option<u64>,
}

#[derive(Args)]
struct ExportArgs {
    /// A model file produced by `fit`.
    model: PathBuf,

    /// Write the JSON here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        // A reader closing our stdout early (e.g. `castor export m | head`)
        // is not a failure.
        Err(CastorError::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// 2 = bad flags/configuration, 4 = internal numeric failure, 3 = bad or
/// unreadable data, model, and output files.
fn exit_code(err: &CastorError) -> u8 {
    match err {
        CastorError::InvalidConfig(_)
        | CastorError::InvalidShapeletLength(_)
        | CastorError::InvalidFoldCount { .. } => 2,
        CastorError::InvalidFeatures(_)
        | CastorError::InternalPaddingError { .. }
        | CastorError::ShapeletTooLong { .. }
        | CastorError::SubsequenceOutOfBounds { .. } => 4,
        _ => 3,
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CastorError::InvalidConfig(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Transform(args) => cmd_transform(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Ablate(args) => cmd_ablate(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Export(args) => cmd_export(args),
    }
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let train = load_ucr_tsv(&args.train)?;
    let pipe = pipeline_config(&args.shapelet, &args.classifier);
    let fitted = fit_pipeline(&train, &pipe)?;
    fitted.model.save(&args.output)?;
    println!(
        "fitted {} features on {} series of length {} ({} classes)",
        fitted.model.params().feature_count(),
        train.len(),
        train.series_len(),
        train.vocabulary().len()
    );
    let t = &fitted.timings;
    println!(
        "sampling {:.3}s  transform {:.3}s  classifier {:.3}s  (total {:.3}s)",
        t.params_seconds,
        t.transform_seconds,
        t.classifier_seconds,
        t.total()
    );
    println!("selected alpha {}", fitted.ridge.selected_alpha);
    println!("wrote model to {}", args.output.display());
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let model = CastorModel::load(&args.model)?;
    let data = load_ucr_tsv(&args.data)?;
    let predictions = model.predict(data.series())?;
    let vocabulary = model
        .classifier()
        .expect("predict succeeded, so a classifier is present")
        .vocabulary();

    let mut out = String::from("sample,label");
    for token in vocabulary {
        out.push_str(&format!(",score_{token}"));
    }
    out.push('\n');
    for (i, label) in predictions.labels.iter().enumerate() {
        out.push_str(&format!("{i},{label}"));
        for score in predictions.scores.row(i) {
            out.push_str(&format!(",{score}"));
        }
        out.push('\n');
    }
    write_or_stdout(args.output.as_deref(), &out)?;

    let hits = predictions
        .labels
        .iter()
        .zip(data.labels())
        .filter(|(predicted, &actual)| **predicted == data.vocabulary()[actual])
        .count();
    eprintln!(
        "accuracy {:.4} against the {} labelled rows",
        hits as f64 / data.len() as f64,
        data.len()
    );
    Ok(())
}

fn cmd_transform(args: TransformArgs) -> Result<()> {
    let model = CastorModel::load(&args.model)?;
    let data = load_ucr_tsv(&args.data)?;
    let features = transform(data.series(), model.params())?;
    match args.format {
        FormatArg::Csv => features.write_csv(&args.output)?,
        FormatArg::Binary => {
            let file = std::fs::File::create(&args.output)?;
            features.write_binary(std::io::BufWriter::new(file))?;
        }
    }
    println!(
        "wrote {} x {} feature matrix to {}",
        features.n_samples(),
        features.n_features(),
        args.output.display()
    );
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let data = load_ucr_tsv(&args.data)?;
    let pipe = pipeline_config(&args.shapelet, &args.classifier);
    let report = evaluate(&data, &pipe, args.folds, args.repeats, args.shapelet.seed)?;
    println!(
        "evaluated {} folds x {} repeats on {} series (seed {})",
        report.folds,
        report.repeats,
        data.len(),
        report.seed
    );
    println!(
        "mean accuracy {:.4}  std {:.4}",
        report.mean_accuracy, report.std_accuracy
    );
    let t = &report.timings;
    println!(
        "sampling {:.3}s  transform {:.3}s  classifier {:.3}s  (total {:.3}s)",
        t.params_seconds,
        t.transform_seconds,
        t.classifier_seconds,
        t.total()
    );
    if let Some(path) = &args.json {
        report.write_json(path)?;
        println!("wrote JSON report to {}", path.display());
    }
    if let Some(path) = &args.csv {
        report.write_csv(path)?;
        println!("wrote CSV report to {}", path.display());
    }
    Ok(())
}

fn cmd_ablate(args: AblateArgs) -> Result<()> {
    let data = load_ucr_tsv(&args.data)?;
    let base = pipeline_config(&args.shapelet, &args.classifier);
    let axis = match args.axis {
        AxisArg::Gk => AblationAxis::GroupsShapelets {
            product: args.product,
        },
        AxisArg::Minmax => AblationAxis::MinMax,
        AxisArg::Occurrence => AblationAxis::Occurrence,
        AxisArg::Rho => AblationAxis::Rho,
        AxisArg::Norml => AblationAxis::NormLength,
        AxisArg::Diff => AblationAxis::Diff,
    };
    let rows = ablate(
        &data,
        &base,
        &axis,
        args.folds,
        args.repeats,
        args.shapelet.seed,
    )?;
    match &args.output {
        Some(path) => {
            write_ablation_csv(&rows, path)?;
            println!("wrote {} rows to {}", rows.len(), path.display());
        }
        None => write_or_stdout(None, &ablation_csv(&rows))?,
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let data = load_ucr_tsv(&args.data)?;
    let pipe = PipelineConfig {
        castor: args.shapelet.to_config(),
        ..PipelineConfig::default()
    };
    let report = bench_scaling(&data, &pipe, args.axis.into(), &args.factors)?;
    match &args.output {
        Some(path) => {
            report.write_csv(path)?;
            println!("wrote {} rows to {}", report.rows.len(), path.display());
        }
        None => {
            let text = format!("{}# loglog_slope={}\n", report.csv(), report.slope);
            write_or_stdout(None, &text)?;
        }
    }
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let config = SynthConfig {
        classes: args.classes,
        samples: args.samples,
        series_len: args.length,
        amplitude: args.amplitude,
        noise: args.noise,
        seed: args.seed,
    };
    let mut dataset = generate(&config)?;
    if let Some(shuffle_seed) = args.shuffle_seed {
        dataset = shuffle_labels(&dataset, shuffle_seed)?;
    }
    write_ucr_tsv(&dataset, &args.output)?;
    println!(
        "wrote {} series of length {} ({} classes) to {}",
        dataset.len(),
        dataset.series_len(),
        dataset.vocabulary().len(),
        args.output.display()
    );
    Ok(())
}

fn cmd_export(args: ExportArgs) -> Result<()> {
    let model = CastorModel::load(&args.model)?;
    let text = serde_json::to_string_pretty(&model.to_json())
        .map_err(|e| CastorError::ModelFormat(format!("JSON serialization: {e}")))?;
    write_or_stdout(args.output.as_deref(), &format!("{text}\n"))
}

fn write_or_stdout(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(path) => std::fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}
