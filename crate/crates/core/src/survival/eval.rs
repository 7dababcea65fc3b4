use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{canonical_order, fit_fusion, fit_ols, predict_fused, ClassBins, Feature, SurvivalConfig, SurvivalRecord};
use crate::error::{Error, Result};
use crate::stats;

/// Challenge-style survival scores.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalMetrics {
    pub accuracy: f64,
    pub mse: f64,
    pub median_se: f64,
    /// Population standard deviation of the squared errors.
    pub std_se: f64,
    /// `None` when either ranking is constant.
    pub spearman_r: Option<f64>,
}

/// Score `(predicted_days, true_days)` pairs.
pub fn evaluate_survival(pairs: &[(f64, f64)], bins: &ClassBins) -> Result<SurvivalMetrics> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("survival predictions"));
    }
    let n = pairs.len() as f64;
    let hits = pairs
        .iter()
        .filter(|(p, t)| bins.classify(*p) == bins.classify(*t))
        .count();
    let se: Vec<f64> = pairs.iter().map(|(p, t)| (p - t) * (p - t)).collect();
    let mse = stats::mean(&se);
    let pred: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let truth: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    Ok(SurvivalMetrics {
        accuracy: hits as f64 / n,
        mse,
        median_se: stats::median(&se),
        std_se: stats::population_std(&se, mse),
        spearman_r: stats::pearson(&stats::average_ranks(&pred), &stats::average_ranks(&truth)),
    })
}

/// Fold index of each of `n` records (in canonical order): a seeded shuffle
/// of `0..n`, then position modulo `k`.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % k;
    }
    fold
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_test: usize,
    pub fused_accuracy: f64,
    pub baseline_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<FoldResult>,
    /// Accuracy over all out-of-fold predictions.
    pub fused_accuracy: f64,
    /// Same, for an OLS model on age alone.
    pub baseline_accuracy: f64,
    pub mean_fold_fused_accuracy: f64,
    pub mean_fold_baseline_accuracy: f64,
    /// `(case_id, fused prediction)` in canonical order.
    pub predictions: Vec<(alloc::string::String, f64)>,
}

/// k-fold cross-validation of the fused model against an age-only linear
/// classifier. Folds come from [`fold_assignment`] over the records in
/// canonical order.
pub fn cross_validate(records: &[SurvivalRecord], cfg: &SurvivalConfig, seed: u64) -> Result<CvReport> {
    cfg.validate()?;
    let k = cfg.folds;
    if records.len() < k {
        return Err(Error::InsufficientData {
            needed: k,
            got: records.len(),
        });
    }
    let rows: Vec<SurvivalRecord> = canonical_order(records).into_iter().cloned().collect();
    let truth: Vec<f64> = rows
        .iter()
        .map(|r| r.survival_days.ok_or_else(|| Error::MissingTarget(r.case_id.clone())))
        .collect::<Result<_>>()?;
    let fold = fold_assignment(rows.len(), k, seed);

    let mut fused = vec![0.0; rows.len()];
    let mut baseline = vec![0.0; rows.len()];
    let mut folds = Vec::with_capacity(k);
    for f in 0..k {
        let train: Vec<SurvivalRecord> = (0..rows.len()).filter(|&i| fold[i] != f).map(|i| rows[i].clone()).collect();
        let test: Vec<usize> = (0..rows.len()).filter(|&i| fold[i] == f).collect();
        let model = fit_fusion(&train, cfg)?;
        let age_only = fit_ols(&train, &[Feature::Age], cfg.cap_days)?;
        for &i in &test {
            fused[i] = predict_fused(&model, &rows[i]);
            baseline[i] = age_only.predict(&rows[i]).clamp(0.0, cfg.cap_days);
        }
        let acc = |pred: &[f64]| {
            test.iter()
                .filter(|&&i| cfg.bins.classify(pred[i]) == cfg.bins.classify(truth[i]))
                .count() as f64
                / test.len() as f64
        };
        folds.push(FoldResult {
            fold: f,
            n_test: test.len(),
            fused_accuracy: acc(&fused),
            baseline_accuracy: acc(&baseline),
        });
    }

    let pooled = |pred: &[f64]| -> Result<f64> {
        let pairs: Vec<(f64, f64)> = pred.iter().copied().zip(truth.iter().copied()).collect();
        Ok(evaluate_survival(&pairs, &cfg.bins)?.accuracy)
    };
    let mean_of = |g: fn(&FoldResult) -> f64| stats::mean(&folds.iter().map(g).collect::<Vec<_>>());
    Ok(CvReport {
        fused_accuracy: pooled(&fused)?,
        baseline_accuracy: pooled(&baseline)?,
        mean_fold_fused_accuracy: mean_of(|r| r.fused_accuracy),
        mean_fold_baseline_accuracy: mean_of(|r| r.baseline_accuracy),
        predictions: rows.iter().map(|r| r.case_id.clone()).zip(fused).collect(),
        folds,
    })
}
