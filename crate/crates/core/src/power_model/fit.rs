//! Least-squares power models over standardized features.

use serde::{Deserialize, Serialize};

use super::features::{FeatureSpec, Term};
use super::metrics::MetricsSample;
use super::ModelError;
use crate::linalg::{Matrix, Qr};

/// A fitted linear power model `watts = intercept + Σ cᵢ·(xᵢ − μᵢ)/σᵢ`.
///
/// Coefficients live in the standardized feature space; the normalization
/// statistics travel with the model so prediction needs nothing else.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelArtifact", into = "ModelArtifact")]
pub struct PowerModel {
    pub spec: FeatureSpec,
    /// Watts at the feature means.
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub feature_means: Vec<f64>,
    pub feature_stds: Vec<f64>,
    pub fitted_on: usize,
    /// Seed of the train/test split that produced the training set, if any.
    pub seed: Option<u64>,
}

pub const MODEL_FORMAT: u32 = 1;

/// On-disk JSON form of a [`PowerModel`].
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelArtifact {
    format: u32,
    spec: FeatureSpec,
    intercept: f64,
    coefficients: Vec<f64>,
    feature_means: Vec<f64>,
    feature_stds: Vec<f64>,
    fitted_on: usize,
    #[serde(default)]
    seed: Option<u64>,
}

impl TryFrom<ModelArtifact> for PowerModel {
    type Error = ModelError;
    fn try_from(a: ModelArtifact) -> Result<Self, ModelError> {
        if a.format != MODEL_FORMAT {
            return Err(ModelError::UnsupportedFormat(a.format));
        }
        let m = PowerModel {
            spec: a.spec,
            intercept: a.intercept,
            coefficients: a.coefficients,
            feature_means: a.feature_means,
            feature_stds: a.feature_stds,
            fitted_on: a.fitted_on,
            seed: a.seed,
        };
        m.check()?;
        Ok(m)
    }
}

impl From<PowerModel> for ModelArtifact {
    fn from(m: PowerModel) -> Self {
        ModelArtifact {
            format: MODEL_FORMAT,
            spec: m.spec,
            intercept: m.intercept,
            coefficients: m.coefficients,
            feature_means: m.feature_means,
            feature_stds: m.feature_stds,
            fitted_on: m.fitted_on,
            seed: m.seed,
        }
    }
}

impl PowerModel {
    /// Builds a model directly from raw-scale coefficients (no standardization).
    pub fn from_raw(spec: FeatureSpec, intercept: f64, coefficients: Vec<f64>) -> Result<Self, ModelError> {
        let k = spec.len();
        let m = PowerModel {
            spec,
            intercept,
            coefficients,
            feature_means: vec![0.0; k],
            feature_stds: vec![1.0; k],
            fitted_on: 0,
            seed: None,
        };
        m.check()?;
        Ok(m)
    }

    fn check(&self) -> Result<(), ModelError> {
        let k = self.spec.len();
        if self.coefficients.len() != k || self.feature_means.len() != k || self.feature_stds.len() != k {
            return Err(ModelError::InvalidSpec(format!(
                "model has {} terms but {} coefficients, {} means, {} stds",
                k,
                self.coefficients.len(),
                self.feature_means.len(),
                self.feature_stds.len()
            )));
        }
        if let Some(i) = self.feature_stds.iter().position(|s| !(*s > 0.0)) {
            return Err(ModelError::InvalidSpec(format!(
                "non-positive std for term {}",
                self.spec.terms()[i]
            )));
        }
        Ok(())
    }

    /// Predicted watts, clamped at zero. A NaN metric counts as missing.
    pub fn predict(&self, sample: &MetricsSample) -> Result<f64, ModelError> {
        let mut y = self.intercept;
        for (i, term) in self.spec.terms().iter().enumerate() {
            let v = term.value(sample);
            if !v.is_finite() {
                return Err(ModelError::MissingMetric(term.to_string()));
            }
            y += self.coefficients[i] * (v - self.feature_means[i]) / self.feature_stds[i];
        }
        Ok(y.max(0.0))
    }

    /// Intercept and coefficients on the original (unstandardized) scale.
    pub fn raw_coefficients(&self) -> (f64, Vec<f64>) {
        let coefs: Vec<f64> = self
            .coefficients
            .iter()
            .zip(&self.feature_stds)
            .map(|(c, s)| c / s)
            .collect();
        let intercept = self.intercept
            - coefs
                .iter()
                .zip(&self.feature_means)
                .map(|(c, m)| c * m)
                .sum::<f64>();
        (intercept, coefs)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, ModelError> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Per-term z-score statistics. The charging indicator keeps mean 0 / std 1.
#[derive(Debug, Clone)]
pub(crate) struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    /// Fails on a constant non-indicator column (collinear with the intercept).
    pub fn from_columns(terms: &[Term], columns: &[Vec<f64>]) -> Result<Self, ModelError> {
        let mut means = Vec::with_capacity(terms.len());
        let mut stds = Vec::with_capacity(terms.len());
        let mut constant = Vec::new();
        for (t, col) in terms.iter().zip(columns) {
            if t.is_indicator() {
                means.push(0.0);
                stds.push(1.0);
                continue;
            }
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let std = var.sqrt();
            if !(std > 1e-12 * (1.0 + mean.abs())) {
                constant.push(t.to_string());
            }
            means.push(mean);
            stds.push(std);
        }
        if !constant.is_empty() {
            return Err(ModelError::SingularFit { terms: constant });
        }
        Ok(Self { means, stds })
    }

    pub fn apply(&self, columns: &mut [Vec<f64>]) {
        for ((col, m), s) in columns.iter_mut().zip(&self.means).zip(&self.stds) {
            for v in col.iter_mut() {
                *v = (*v - m) / s;
            }
        }
    }
}

pub(crate) fn term_columns(samples: &[MetricsSample], terms: &[Term]) -> Vec<Vec<f64>> {
    terms
        .iter()
        .map(|t| samples.iter().map(|s| t.value(s)).collect())
        .collect()
}

pub(crate) fn targets(samples: &[MetricsSample]) -> Result<Vec<f64>, ModelError> {
    samples
        .iter()
        .enumerate()
        .map(|(index, s)| s.real_power.ok_or(ModelError::MissingPower { index }))
        .collect()
}

/// Model plus the fit diagnostics needed for inference.
#[derive(Debug, Clone)]
pub struct FitSummary {
    pub model: PowerModel,
    pub rss: f64,
    /// Residual variance estimate `RSS / (n − k − 1)`.
    pub sigma2: f64,
    /// Standard error of the raw-scale intercept.
    pub intercept_std_error: f64,
    /// Standard errors of the raw-scale coefficients.
    pub std_errors: Vec<f64>,
}

/// Ordinary least squares with intercept on standardized features.
pub fn fit(train: &[MetricsSample], spec: &FeatureSpec) -> Result<PowerModel, ModelError> {
    fit_detailed(train, spec).map(|s| s.model)
}

pub fn fit_detailed(train: &[MetricsSample], spec: &FeatureSpec) -> Result<FitSummary, ModelError> {
    let n = train.len();
    let k = spec.len();
    if n <= k + 1 {
        return Err(ModelError::TooFewSamples { needed: k + 2, got: n });
    }
    let y = targets(train)?;
    let mut columns = term_columns(train, spec.terms());
    let stats = Standardizer::from_columns(spec.terms(), &columns)?;
    stats.apply(&mut columns);

    let mut design = Vec::with_capacity(k + 1);
    design.push(vec![1.0; n]);
    design.extend(columns);
    let qr = Qr::new(&Matrix::from_columns(design));
    if !qr.is_full_rank() {
        let terms = qr
            .dependent_columns()
            .iter()
            .map(|&c| if c == 0 { "(intercept)".to_string() } else { spec.terms()[c - 1].to_string() })
            .collect();
        return Err(ModelError::SingularFit { terms });
    }
    let ls = qr.solve(&y);
    let sigma2 = ls.rss / (n - k - 1) as f64;

    let model = PowerModel {
        spec: spec.clone(),
        intercept: ls.coefficients[0],
        coefficients: ls.coefficients[1..].to_vec(),
        feature_means: stats.means,
        feature_stds: stats.stds,
        fitted_on: n,
        seed: None,
    };

    // Raw-scale parameters are a linear map a·β of the standardized ones.
    let cov = qr.inverse_gram();
    let var_of = |a: &[f64]| -> f64 {
        let mut v = 0.0;
        for i in 0..=k {
            for j in 0..=k {
                v += a[i] * cov[i][j] * a[j];
            }
        }
        sigma2 * v
    };
    let mut a0 = vec![1.0];
    a0.extend(model.feature_means.iter().zip(&model.feature_stds).map(|(m, s)| -m / s));
    let intercept_std_error = var_of(&a0).sqrt();
    let std_errors = (0..k)
        .map(|j| {
            let mut a = vec![0.0; k + 1];
            a[j + 1] = 1.0 / model.feature_stds[j];
            var_of(&a).sqrt()
        })
        .collect();

    Ok(FitSummary {
        model,
        rss: ls.rss,
        sigma2,
        intercept_std_error,
        std_errors,
    })
}
