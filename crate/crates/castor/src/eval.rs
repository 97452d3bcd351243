//! End-to-end pipelines: fitting, repeated cross-validation, ablation
//! sweeps, and scaling benchmarks.
//!
//! Evaluation reseeds every repeat and every fold fit from the master
//! seed, so a report is a pure function of (data, config, folds, repeats,
//! seed). Ablation runs all configurations against the same fold
//! assignments for paired comparison. Benchmarks stretch a dataset by
//! replicating samples or tiling series and time the sampling+transform
//! path, the part with the documented near-linear cost.

use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::classifier::{fit_ridge_loocv, RidgeReport, ScalerKind, DEFAULT_ALPHAS};
use crate::dataset::{stratified_kfold, LabeledDataset, TimeSeries};
use crate::error::{CastorError, Result};
use crate::model::CastorModel;
use crate::params::{fit_params, AggregateMode, CastorConfig, OccurrenceMode};
use crate::rng::{derive_seed, STREAM_FIT, STREAM_FOLDS};
use crate::transform::transform;

/// Everything needed to go from a raw dataset to a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub castor: CastorConfig,
    pub alphas: Vec<f64>,
    pub scaler: ScalerKind,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            castor: CastorConfig::default(),
            alphas: DEFAULT_ALPHAS.to_vec(),
            scaler: ScalerKind::Sparse,
        }
    }
}

/// Wall-clock seconds spent in each phase of one or more fits.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub params_seconds: f64,
    pub transform_seconds: f64,
    pub classifier_seconds: f64,
}

impl PhaseTimings {
    pub fn total(&self) -> f64 {
        self.params_seconds + self.transform_seconds + self.classifier_seconds
    }

    fn absorb(&mut self, other: &PhaseTimings) {
        self.params_seconds += other.params_seconds;
        self.transform_seconds += other.transform_seconds;
        self.classifier_seconds += other.classifier_seconds;
    }
}

/// A fitted model plus how long each phase took.
#[derive(Debug)]
pub struct FittedPipeline {
    pub model: CastorModel,
    pub timings: PhaseTimings,
    pub ridge: RidgeReport,
}

/// Samples parameters on `train`, transforms it, and fits the ridge
/// classifier (scaler included, so cross-validation refits it per fold).
pub fn fit_pipeline(train: &LabeledDataset, pipe: &PipelineConfig) -> Result<FittedPipeline> {
    let start = Instant::now();
    let params = fit_params(train, &pipe.castor)?;
    let params_seconds = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let features = transform(train.series(), &params)?;
    let transform_seconds = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let (ridge_model, ridge) = fit_ridge_loocv(
        features.values(),
        train.labels(),
        train.vocabulary(),
        &pipe.alphas,
        pipe.scaler,
    )?;
    let classifier_seconds = start.elapsed().as_secs_f64();

    Ok(FittedPipeline {
        model: CastorModel::new(params, Some(ridge_model)),
        timings: PhaseTimings {
            params_seconds,
            transform_seconds,
            classifier_seconds,
        },
        ridge,
    })
}

/// One cross-validation measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyEntry {
    pub repeat: usize,
    pub fold: usize,
    pub accuracy: f64,
}

/// Outcome of a repeated stratified k-fold evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub entries: Vec<AccuracyEntry>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    /// Cumulative seconds across all fold fits.
    pub timings: PhaseTimings,
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
    pub config: PipelineConfig,
}

impl RunReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report holds only plain finite values")
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_json())
            .map_err(|e| CastorError::InvalidConfig(format!("report serialization: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("repeat,fold,accuracy\n");
        for e in &self.entries {
            out.push_str(&format!("{},{},{}\n", e.repeat, e.fold, e.accuracy));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.csv())?;
        Ok(())
    }
}

/// Fraction of positions where the two label vectors agree.
///
/// Panics if the lengths differ or both are empty.
pub fn accuracy(predicted: &[usize], expected: &[usize]) -> f64 {
    assert_eq!(predicted.len(), expected.len(), "label vectors must align");
    assert!(!predicted.is_empty(), "empty label vectors");
    let hits = predicted
        .iter()
        .zip(expected)
        .filter(|(a, b)| a == b)
        .count();
    hits as f64 / predicted.len() as f64
}

fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Repeated stratified k-fold cross-validation.
///
/// Repeat `r` derives its fold-assignment seed from the master seed, and
/// the fit inside fold `f` of repeat `r` gets its own derived sampling
/// seed, so reports are reproducible and repeats genuinely differ.
pub fn evaluate(
    dataset: &LabeledDataset,
    pipe: &PipelineConfig,
    folds: usize,
    repeats: usize,
    seed: u64,
) -> Result<RunReport> {
    if repeats < 1 {
        return Err(CastorError::InvalidConfig(
            "need at least one repeat".into(),
        ));
    }
    let mut entries = Vec::with_capacity(folds * repeats);
    let mut timings = PhaseTimings::default();
    for repeat in 0..repeats {
        let fold_seed = derive_seed(seed, &[STREAM_FOLDS, repeat as u64]);
        let assignment = stratified_kfold(dataset, folds, fold_seed)?;
        for fold in 0..folds {
            let (train_idx, test_idx) = assignment.split(fold);
            let train = dataset.subset(&train_idx)?;
            let test = dataset.subset(&test_idx)?;

            let mut fold_pipe = pipe.clone();
            fold_pipe.castor.seed = derive_seed(seed, &[STREAM_FIT, repeat as u64, fold as u64]);
            let fitted = fit_pipeline(&train, &fold_pipe)?;
            timings.absorb(&fitted.timings);

            let predictions = fitted.model.predict(test.series())?;
            entries.push(AccuracyEntry {
                repeat,
                fold,
                accuracy: accuracy(&predictions.indices, test.labels()),
            });
        }
    }
    let accuracies: Vec<f64> = entries.iter().map(|e| e.accuracy).collect();
    let (mean_accuracy, std_accuracy) = mean_and_std(&accuracies);
    Ok(RunReport {
        entries,
        mean_accuracy,
        std_accuracy,
        timings,
        folds,
        repeats,
        seed,
        config: pipe.clone(),
    })
}

/// A hyperparameter axis to sweep while everything else stays fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationAxis {
    /// (groups, shapelets) pairs with a fixed product, groups doubling
    /// from 2 while shapelets stay at least 2.
    GroupsShapelets { product: usize },
    /// All four hard/soft combinations for the min and max features.
    MinMax,
    /// Independent versus competing occurrence counting.
    Occurrence,
    /// Grid over the occurrence-threshold percentile window.
    Rho,
    /// Normalization probability crossed with shapelet length.
    NormLength,
    /// First-order differencing on or off.
    Diff,
}

impl AblationAxis {
    pub fn token(&self) -> &'static str {
        match self {
            AblationAxis::GroupsShapelets { .. } => "gk",
            AblationAxis::MinMax => "minmax",
            AblationAxis::Occurrence => "occurrence",
            AblationAxis::Rho => "rho",
            AblationAxis::NormLength => "norml",
            AblationAxis::Diff => "diff",
        }
    }
}

/// One swept configuration and its measured outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub axis: String,
    pub value: String,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub seconds: f64,
}

/// Expands an axis into labelled configurations derived from `base`.
pub fn ablation_configs(
    base: &PipelineConfig,
    axis: &AblationAxis,
) -> Result<Vec<(String, PipelineConfig)>> {
    let mut out = Vec::new();
    match *axis {
        AblationAxis::GroupsShapelets { product } => {
            if product < 8 || !product.is_power_of_two() {
                return Err(CastorError::InvalidConfig(format!(
                    "group-shapelet product must be a power of two >= 8, got {product}"
                )));
            }
            let mut groups = 2usize;
            while product / groups >= 2 {
                let mut cfg = base.clone();
                cfg.castor.groups = groups;
                cfg.castor.shapelets_per_group = product / groups;
                out.push((format!("g{}-k{}", groups, product / groups), cfg));
                groups *= 2;
            }
        }
        AblationAxis::MinMax => {
            for min_mode in [AggregateMode::Hard, AggregateMode::Soft] {
                for max_mode in [AggregateMode::Hard, AggregateMode::Soft] {
                    let mut cfg = base.clone();
                    cfg.castor.min_mode = min_mode;
                    cfg.castor.max_mode = max_mode;
                    out.push((format!("min={min_mode}:max={max_mode}"), cfg));
                }
            }
        }
        AblationAxis::Occurrence => {
            for mode in [OccurrenceMode::Independent, OccurrenceMode::Competing] {
                let mut cfg = base.clone();
                cfg.castor.occurrence_mode = mode;
                out.push((mode.to_string(), cfg));
            }
        }
        AblationAxis::Rho => {
            for lower in [0.01, 0.05] {
                for upper in [0.05, 0.1, 0.2] {
                    let mut cfg = base.clone();
                    cfg.castor.rho_lower = lower;
                    cfg.castor.rho_upper = upper;
                    out.push((format!("lower={lower}:upper={upper}"), cfg));
                }
            }
        }
        AblationAxis::NormLength => {
            for rho_norm in [0.0, 0.25, 0.5, 0.75, 1.0] {
                for len in [7usize, 9, 11] {
                    let mut cfg = base.clone();
                    cfg.castor.rho_norm = rho_norm;
                    cfg.castor.shapelet_len = len;
                    out.push((format!("norm={rho_norm}:len={len}"), cfg));
                }
            }
        }
        AblationAxis::Diff => {
            for use_diff in [true, false] {
                let mut cfg = base.clone();
                cfg.castor.use_diff = use_diff;
                out.push((if use_diff { "on" } else { "off" }.to_string(), cfg));
            }
        }
    }
    Ok(out)
}

/// Evaluates every configuration of an axis on the same fold assignments
/// (the master seed is shared, so fold seeds coincide run to run).
pub fn ablate(
    dataset: &LabeledDataset,
    base: &PipelineConfig,
    axis: &AblationAxis,
    folds: usize,
    repeats: usize,
    seed: u64,
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for (value, cfg) in ablation_configs(base, axis)? {
        let start = Instant::now();
        let report = evaluate(dataset, &cfg, folds, repeats, seed)?;
        rows.push(AblationRow {
            axis: axis.token().to_string(),
            value,
            mean_accuracy: report.mean_accuracy,
            std_accuracy: report.std_accuracy,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(rows)
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("axis,value,mean_accuracy,std_accuracy,seconds\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.axis, r.value, r.mean_accuracy, r.std_accuracy, r.seconds
        ));
    }
    out
}

pub fn write_ablation_csv(rows: &[AblationRow], path: &Path) -> Result<()> {
    std::fs::write(path, ablation_csv(rows))?;
    Ok(())
}

/// Which dataset dimension a benchmark stretches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchAxis {
    /// Replicate samples to multiply n.
    Samples,
    /// Tile each series to multiply m.
    Length,
}

/// One benchmark measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub factor: usize,
    pub n: usize,
    pub m: usize,
    pub seconds: f64,
}

/// Benchmark rows plus the fitted log-log slope of time against factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub axis: BenchAxis,
    pub rows: Vec<BenchRow>,
    pub slope: f64,
}

impl BenchReport {
    pub fn csv(&self) -> String {
        let mut out = String::from("factor,n,m,seconds\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{}\n", r.factor, r.n, r.m, r.seconds));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(self.csv().as_bytes())?;
        writeln!(file, "# loglog_slope={}", self.slope)?;
        Ok(())
    }
}

/// Stretches a dataset by replicating its samples `n_factor` times and
/// tiling every series `m_factor` times. Labels follow the samples.
pub fn scale_dataset(
    dataset: &LabeledDataset,
    n_factor: usize,
    m_factor: usize,
) -> Result<LabeledDataset> {
    if n_factor < 1 || m_factor < 1 {
        return Err(CastorError::InvalidConfig(format!(
            "scale factors must be at least 1, got n x{n_factor}, m x{m_factor}"
        )));
    }
    let m = dataset.series_len() * m_factor;
    let mut series = Vec::with_capacity(dataset.len() * n_factor);
    let mut labels = Vec::with_capacity(dataset.len() * n_factor);
    for _ in 0..n_factor {
        for (s, &label) in dataset.series().iter().zip(dataset.labels()) {
            let values: Vec<f64> = s.values().iter().copied().cycle().take(m).collect();
            series.push(TimeSeries::new(values)?);
            labels.push(label);
        }
    }
    LabeledDataset::new(series, labels, dataset.vocabulary().to_vec())
}

/// Least-squares slope of ln(y) against ln(x).
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .map(|&(x, y)| (x.max(1e-12).ln(), y.max(1e-12).ln()))
        .collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let cov: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let var: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    cov / var
}

/// Times parameter sampling plus training-set transform on stretched
/// copies of the dataset, median of three runs per factor.
pub fn bench_scaling(
    dataset: &LabeledDataset,
    pipe: &PipelineConfig,
    axis: BenchAxis,
    factors: &[usize],
) -> Result<BenchReport> {
    if factors.is_empty() {
        return Err(CastorError::InvalidConfig("no scale factors given".into()));
    }
    let mut rows = Vec::with_capacity(factors.len());
    for &factor in factors {
        let scaled = match axis {
            BenchAxis::Samples => scale_dataset(dataset, factor, 1)?,
            BenchAxis::Length => scale_dataset(dataset, 1, factor)?,
        };
        let mut secs = [0.0f64; 3];
        for slot in secs.iter_mut() {
            let start = Instant::now();
            let params = fit_params(&scaled, &pipe.castor)?;
            let features = transform(scaled.series(), &params)?;
            *slot = start.elapsed().as_secs_f64();
            // keep the work observable so it cannot be optimized away
            assert!(features.n_samples() == scaled.len());
        }
        secs.sort_by(|a, b| a.total_cmp(b));
        rows.push(BenchRow {
            factor,
            n: scaled.len(),
            m: scaled.series_len(),
            seconds: secs[1],
        });
    }
    let points: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r.factor as f64, r.seconds))
        .collect();
    let slope = loglog_slope(&points);
    Ok(BenchReport { axis, rows, slope })
}
