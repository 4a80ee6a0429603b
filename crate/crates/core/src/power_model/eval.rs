//! Out-of-sample model quality.

use serde::{Deserialize, Serialize};

use super::fit::{targets, PowerModel};
use super::metrics::MetricsSample;
use super::ModelError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub adj_r2: f64,
    /// Mean absolute percentage error as a fraction.
    pub mape: f64,
    pub minmax_acc: f64,
    pub corr_acc: f64,
    pub n_test: usize,
}

impl EvalReport {
    /// One row in the `OS | Mode | Adj R² | MAPE % | Min/Max % | Corr` layout.
    pub fn table_row(&self, os: &str, mode: &str) -> String {
        format!(
            "{os:<8} {mode:<7} {:>8.4} {:>8.2} {:>8.2} {:>8.4} {:>8}",
            self.adj_r2,
            self.mape * 100.0,
            self.minmax_acc * 100.0,
            self.corr_acc,
            self.n_test
        )
    }

    pub fn table_header() -> String {
        format!(
            "{:<8} {:<7} {:>8} {:>8} {:>8} {:>8} {:>8}",
            "OS", "Mode", "AdjR2", "MAPE%", "MinMax%", "Corr", "n_test"
        )
    }
}

fn check_pairs(actual: &[f64], predicted: &[f64]) -> Result<(), ModelError> {
    if actual.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    if actual.len() != predicted.len() {
        return Err(ModelError::InvalidArgument(format!(
            "{} actual vs {} predicted values",
            actual.len(),
            predicted.len()
        )));
    }
    if let Some(index) = actual.iter().position(|a| *a == 0.0) {
        return Err(ModelError::ZeroActualPower { index });
    }
    Ok(())
}

/// `mean(|predicted − actual| / actual)`.
pub fn mape(actual: &[f64], predicted: &[f64]) -> Result<f64, ModelError> {
    check_pairs(actual, predicted)?;
    let sum: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(a, p)| (p - a).abs() / a)
        .sum();
    Ok(sum / actual.len() as f64)
}

/// `mean(min(actual, predicted) / max(actual, predicted))`.
pub fn minmax_accuracy(actual: &[f64], predicted: &[f64]) -> Result<f64, ModelError> {
    check_pairs(actual, predicted)?;
    let sum: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(a, p)| a.min(*p) / a.max(*p))
        .sum();
    Ok(sum / actual.len() as f64)
}

/// Pearson correlation. NaN when either series is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

/// `1 − (1 − R²)(n − 1)/(n − k − 1)`.
pub fn adjusted_r2(r2: f64, n: usize, k: usize) -> Result<f64, ModelError> {
    if n <= k + 1 {
        return Err(ModelError::TooFewSamples { needed: k + 2, got: n });
    }
    Ok(1.0 - (1.0 - r2) * (n - 1) as f64 / (n - k - 1) as f64)
}

/// Coefficient of determination of `predicted` against `actual`.
pub fn r_squared(actual: &[f64], predicted: &[f64]) -> f64 {
    let n = actual.len() as f64;
    let mean = actual.iter().sum::<f64>() / n;
    let sst: f64 = actual.iter().map(|a| (a - mean).powi(2)).sum();
    let sse: f64 = actual.iter().zip(predicted).map(|(a, p)| (a - p).powi(2)).sum();
    1.0 - sse / sst
}

pub fn evaluate(model: &PowerModel, test: &[MetricsSample]) -> Result<EvalReport, ModelError> {
    if test.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let actual = targets(test)?;
    let predicted = test
        .iter()
        .map(|s| model.predict(s))
        .collect::<Result<Vec<_>, _>>()?;
    let n = test.len();
    let k = model.spec.len();
    let mape = mape(&actual, &predicted)?;
    let minmax_acc = minmax_accuracy(&actual, &predicted)?;
    let adj_r2 = adjusted_r2(r_squared(&actual, &predicted), n, k)?;
    Ok(EvalReport {
        adj_r2,
        mape,
        minmax_acc,
        corr_acc: pearson(&actual, &predicted),
        n_test: n,
    })
}
