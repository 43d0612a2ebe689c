//! K-fold cross-validated prediction error.

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{predict_with, PredictRule};
use crate::engine::{fit, FitConfig, StopReason};
use crate::error::{Error, Result};
use crate::mixture::Dataset;
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    /// Root mean squared error over all held-out predictions.
    pub rmsep: f64,
    pub fold_rmsep: Vec<f64>,
    /// Folds whose training fit ended on a degenerate partition; their
    /// predictions come from the fit at its stop state.
    pub degenerate_folds: Vec<usize>,
    pub predictions: Vec<f64>,
}

/// Random near-equal partition of `0..n` into `k` folds.
pub fn make_folds<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<Vec<Vec<usize>>> {
    if k < 2 || n < k {
        return Err(Error::InvalidConfig(format!("need n >= k_folds >= 2, got n = {n}, k_folds = {k}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut folds = vec![Vec::with_capacity(n / k + 1); k];
    for (pos, i) in order.into_iter().enumerate() {
        folds[pos % k].push(i);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

pub fn kfold_rmsep<R: Rng + ?Sized>(
    data: &Dataset,
    config: &FitConfig,
    k_folds: usize,
    rng: &mut R,
    rule: PredictRule,
) -> Result<CrossValidation> {
    let folds = make_folds(data.n(), k_folds, rng)?;
    kfold_rmsep_with_folds(data, config, &folds, rule)
}

/// Cross-validation over a given partition. Fold `f` is fitted with seed
/// `derive_seed(config.seed, f)`.
pub fn kfold_rmsep_with_folds(
    data: &Dataset,
    config: &FitConfig,
    folds: &[Vec<usize>],
    rule: PredictRule,
) -> Result<CrossValidation> {
    let n = data.n();
    let mut held_out = vec![usize::MAX; n];
    for (f, fold) in folds.iter().enumerate() {
        for &i in fold {
            if i >= n || held_out[i] != usize::MAX {
                return Err(Error::InvalidConfig(format!("fold assignment is not a partition of 0..{n}")));
            }
            held_out[i] = f;
        }
    }
    if held_out.contains(&usize::MAX) {
        return Err(Error::InvalidConfig(format!("fold assignment does not cover 0..{n}")));
    }

    let mut predictions = DVector::zeros(n);
    let mut fold_rmsep = Vec::with_capacity(folds.len());
    let mut degenerate_folds = Vec::new();
    for (f, test) in folds.iter().enumerate() {
        let train: Vec<usize> = (0..n).filter(|&i| held_out[i] != f).collect();
        let train_data = data.subset(&train)?;
        let mut cfg = config.clone();
        cfg.seed = derive_seed(config.seed, f as u64);
        let fitted = match fit(&train_data, &cfg) {
            Ok(r) => r,
            Err(Error::AllStartsDegenerate { best: Some(best), .. }) => *best,
            Err(e) => return Err(e),
        };
        if fitted.stop_reason == StopReason::DegeneratePartition {
            degenerate_folds.push(f);
        }
        let test_data = data.subset(test)?;
        let pred = predict_with(&fitted.params, test_data.x(), rule)?;
        let sq: f64 = pred.iter().zip(test_data.y().iter()).map(|(p, y)| (y - p).powi(2)).sum();
        fold_rmsep.push((sq / test.len() as f64).sqrt());
        for (t, &i) in test.iter().enumerate() {
            predictions[i] = pred[t];
        }
    }
    let rmsep = ((data.y() - &predictions).norm_squared() / n as f64).sqrt();
    Ok(CrossValidation {
        rmsep,
        fold_rmsep,
        degenerate_folds,
        predictions: predictions.iter().copied().collect(),
    })
}
