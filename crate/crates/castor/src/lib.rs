//! Competing dilated shapelet transform for time series classification.
//!
//! The pipeline samples groups of dilated shapelets from the training set,
//! turns each series into a fixed-length feature vector by letting the
//! shapelets of a group compete over distance profiles, and classifies the
//! features with a ridge model whose regularization is picked by exact
//! leave-one-out cross-validation.

pub mod classifier;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod model;
pub mod params;
pub mod profile;
pub mod rng;
pub mod synth;
pub mod transform;

pub use classifier::{
    fit_ridge_loocv, fit_scaler, FittedScaler, Predictions, RidgeModel, RidgeReport, ScalerKind,
    ScalerStats, DEFAULT_ALPHAS,
};
pub use dataset::{
    first_order_difference, load_ucr_tsv, parse_ucr, stratified_kfold, write_ucr_tsv,
    FoldAssignment, LabeledDataset, TimeSeries,
};
pub use error::{CastorError, Result};
pub use eval::{
    ablate, ablation_configs, ablation_csv, accuracy, bench_scaling, evaluate, fit_pipeline,
    loglog_slope, scale_dataset, write_ablation_csv, AblationAxis, AblationRow, AccuracyEntry,
    BenchAxis, BenchReport, BenchRow, FittedPipeline, PhaseTimings, PipelineConfig, RunReport,
};
pub use model::CastorModel;
pub use params::{
    fit_params, num_exponents, sample_threshold, AggregateMode, CastorConfig, CastorParams,
    NormScope, OccurrenceMode, Representation, RepresentationBank, ShapeletProvenance,
};
pub use profile::{
    distance_profile, distance_profile_oracle, extract_dilated_subsequence, standard_padding,
    znormalize, DilatedShapelet, DistanceProfile,
};
pub use synth::{generate, shuffle_labels, SynthConfig};
pub use transform::{
    max_aggregate, min_aggregate, occurrence, transform, transform_oracle, FeatureColumn,
    FeatureKind, FeatureLayout, FeatureMatrix, GroupProfileBlock,
};
