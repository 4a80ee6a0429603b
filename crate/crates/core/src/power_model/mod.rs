//! Regression power models over laptop utilization metrics.
//!
//! The pipeline mirrors how the models are built offline: ingest a metrics
//! log with ground-truth wall power, drop implausible readings, split 80/20,
//! fit ordinary least squares on the selected feature terms, and score the
//! hold-out set.

mod eval;
mod features;
mod fit;
mod metrics;
mod split;
mod subset;

pub use eval::{adjusted_r2, evaluate, mape, minmax_accuracy, pearson, r_squared, EvalReport};
pub use features::{build_features, FeatureSpec, Metric, Os, PowerMode, Term};
pub use fit::{fit, fit_detailed, FitSummary, PowerModel, MODEL_FORMAT};
pub use metrics::{
    filter_outliers, ingest_metrics_log, write_metrics_log, IngestReport, LogKind, MetricsSample, LOG_HEADER,
    MAX_PLAUSIBLE_W, MIN_PLAUSIBLE_W,
};
pub use split::{cross_validate, kfold_indices, train_test_split};
pub use subset::{best_subset_search, SizeRanking, SubsetFit, SubsetSearch, MAX_CANDIDATES, TOP_PER_SIZE};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("unknown name `{0}`")]
    UnknownName(String),
    #[error("invalid feature spec: {0}")]
    InvalidSpec(String),
    #[error("singular fit: collinear terms [{}]", .terms.join(", "))]
    SingularFit { terms: Vec<String> },
    #[error("not enough samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("sample {index} has no real power reading")]
    MissingPower { index: usize },
    #[error("missing metric for term `{0}`")]
    MissingMetric(String),
    #[error("actual power is zero at sample {index}")]
    ZeroActualPower { index: usize },
    #[error("too many candidate terms: {got} exceeds the exhaustive-search bound of {limit}")]
    TooManyCandidates { got: usize, limit: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unsupported model artifact format {0}")]
    UnsupportedFormat(u32),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Default hold-out split.
pub const TRAIN_FRACTION: f64 = 0.8;

/// Outcome of [`fit_pipeline`].
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub model: PowerModel,
    pub report: EvalReport,
    pub outliers_removed: usize,
    pub n_train: usize,
}

/// filter → split → fit → evaluate. The split seed is recorded in the model.
pub fn fit_pipeline(
    samples: Vec<MetricsSample>,
    spec: &FeatureSpec,
    train_fraction: f64,
    seed: u64,
) -> Result<PipelineOutput, ModelError> {
    let before = samples.len();
    let clean = filter_outliers(samples);
    let outliers_removed = before - clean.len();
    let (train, test) = train_test_split(&clean, train_fraction, seed)?;
    let mut model = fit(&train, spec)?;
    model.seed = Some(seed);
    let report = evaluate(&model, &test)?;
    Ok(PipelineOutput {
        model,
        report,
        outliers_removed,
        n_train: train.len(),
    })
}

#[cfg(test)]
pub(crate) use metrics::tests::sample as metrics_tests_sample;
