//! Seeded hold-out splits and k-fold cross-validation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::features::FeatureSpec;
use super::fit::{fit, targets};
use super::metrics::MetricsSample;
use super::ModelError;

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

/// Random partition with `round(fraction · n)` training items (kept within
/// `[1, n − 1]`). Each side preserves the input order.
pub fn train_test_split<T: Clone>(
    samples: &[T],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>), ModelError> {
    let n = samples.len();
    if n < 2 {
        return Err(ModelError::TooFewSamples { needed: 2, got: n });
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(ModelError::InvalidArgument(format!(
            "train fraction {train_fraction} not in (0, 1)"
        )));
    }
    let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let idx = shuffled(n, seed);
    let mut train_idx = idx[..n_train].to_vec();
    let mut test_idx = idx[n_train..].to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((
        train_idx.iter().map(|&i| samples[i].clone()).collect(),
        test_idx.iter().map(|&i| samples[i].clone()).collect(),
    ))
}

/// Disjoint, exhaustive folds whose sizes differ by at most one.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>, ModelError> {
    if k < 2 {
        return Err(ModelError::InvalidArgument(format!("need at least 2 folds, got {k}")));
    }
    if n < 2 * k {
        return Err(ModelError::TooFewSamples { needed: 2 * k, got: n });
    }
    let idx = shuffled(n, seed);
    Ok((0..k)
        .map(|f| {
            let mut fold = idx[f * n / k..(f + 1) * n / k].to_vec();
            fold.sort_unstable();
            fold
        })
        .collect())
}

/// Held-out mean squared error for each of `k` folds.
pub fn cross_validate(
    samples: &[MetricsSample],
    spec: &FeatureSpec,
    k: usize,
    seed: u64,
) -> Result<Vec<f64>, ModelError> {
    let folds = kfold_indices(samples.len(), k, seed)?;
    targets(samples)?;
    let mut in_fold = vec![usize::MAX; samples.len()];
    for (f, fold) in folds.iter().enumerate() {
        for &i in fold {
            in_fold[i] = f;
        }
    }
    folds
        .iter()
        .enumerate()
        .map(|(f, fold)| {
            let train: Vec<MetricsSample> = samples
                .iter()
                .zip(&in_fold)
                .filter(|(_, g)| **g != f)
                .map(|(s, _)| s.clone())
                .collect();
            let model = fit(&train, spec)?;
            let mut sse = 0.0;
            for &i in fold {
                let s = &samples[i];
                let err = model.predict(s)? - s.real_power.unwrap_or_default();
                sse += err * err;
            }
            Ok(sse / fold.len() as f64)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn eighty_twenty() {
        let data: Vec<u32> = (0..10).collect();
        let (train, test) = train_test_split(&data, 0.8, 7).unwrap();
        assert_eq!((train.len(), test.len()), (8, 2));
        assert_eq!(train_test_split(&data, 0.8, 7).unwrap(), (train, test));
    }

    #[test]
    fn split_errors() {
        assert!(train_test_split(&[1], 0.8, 0).is_err());
        assert!(train_test_split(&[1, 2, 3], 1.0, 0).is_err());
        assert!(train_test_split(&[1, 2, 3], 0.0, 0).is_err());
    }

    #[test]
    fn kfold_errors() {
        assert!(kfold_indices(9, 5, 0).is_err());
        assert!(kfold_indices(10, 1, 0).is_err());
        assert!(kfold_indices(10, 5, 0).is_ok());
    }

    proptest! {
        #[test]
        fn split_is_a_partition(n in 2usize..300, frac in 0.05f64..0.95, seed in any::<u64>()) {
            let data: Vec<usize> = (0..n).collect();
            let (train, test) = train_test_split(&data, frac, seed).unwrap();
            let want = ((frac * n as f64).round() as usize).clamp(1, n - 1);
            prop_assert_eq!(train.len(), want);
            let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, data);
        }

        #[test]
        fn folds_are_balanced_and_exhaustive(k in 2usize..10, extra in 0usize..200, seed in any::<u64>()) {
            let n = 2 * k + extra;
            let folds = kfold_indices(n, k, seed).unwrap();
            let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            let mut all: Vec<usize> = folds.concat();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }
}
