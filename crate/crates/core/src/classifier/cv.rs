//! Stratified splitting and k-fold cross-validation.

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{report, roc_auc, ClassificationReport};
use super::{class_counts, fit_model, ClassifierConfig, ClassifierError, LabeledFeatures};

/// Fold index per row. Each class is shuffled and dealt round-robin, the
/// second class continuing where the first stopped, so fold sizes differ by
/// at most one and each fold's class counts by at most one.
pub fn stratified_folds(y: &[u8], k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0; y.len()];
    let mut next = 0;
    for class in [1u8, 0] {
        let mut rows: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        rows.shuffle(&mut rng);
        for r in rows {
            out[r] = next % k;
            next += 1;
        }
    }
    out
}

/// `(train, test)` row indices with about `test_fraction` of each class in
/// test (at least one row of a class with two or more rows).
pub fn stratified_split(y: &[u8], test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for class in [1u8, 0] {
        let mut rows: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        rows.shuffle(&mut rng);
        let n = rows.len();
        let mut k = (n as f64 * test_fraction).round() as usize;
        if n >= 2 {
            k = k.clamp(1, n - 1);
        } else {
            k = 0;
        }
        test.extend_from_slice(&rows[..k]);
        train.extend_from_slice(&rows[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub test_rows: Vec<usize>,
    pub report: ClassificationReport,
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub folds: Vec<FoldResult>,
    pub mean_accuracy: f64,
    /// Population standard deviation over folds.
    pub std_accuracy: f64,
    pub mean_f1: [f64; 2],
    /// Out-of-fold probability for every row.
    pub oof_probability: Vec<f64>,
    /// Report and AUC over the pooled out-of-fold predictions.
    pub pooled: ClassificationReport,
    pub pooled_auc: Option<f64>,
}

/// Stratified k-fold; standardization and the model are refit on each
/// fold's training rows.
pub fn cross_validate(
    raw: &LabeledFeatures,
    cfg: &ClassifierConfig,
    scale_mask: &[bool],
    k: usize,
    seed: u64,
) -> Result<CvResult, ClassifierError> {
    if k < 2 {
        return Err(ClassifierError::InvalidHyperparameter { name: "cv_folds".into(), reason: "must be at least 2".into() });
    }
    let (minority, _) = class_counts(&raw.y);
    if minority == 0 {
        return Err(ClassifierError::SingleClassData);
    }
    if k > minority {
        return Err(ClassifierError::FoldWithoutMinority { folds: k, minority });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let assignment = stratified_folds(&raw.y, k, rng.next_u64());
    let seeds: Vec<u64> = (0..k).map(|_| rng.next_u64()).collect();

    let folds: Vec<(FoldResult, Vec<f64>)> = (0..k)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..raw.len()).filter(|&i| assignment[i] != f).collect();
            let test: Vec<usize> = (0..raw.len()).filter(|&i| assignment[i] == f).collect();
            let model = fit_model(&raw.subset(&train), cfg, scale_mask, seeds[f])?;
            let proba: Vec<f64> = test.iter().map(|&i| model.proba_raw(&raw.x[i])).collect();
            let y_true: Vec<u8> = test.iter().map(|&i| raw.y[i]).collect();
            let y_pred: Vec<u8> = proba.iter().map(|&p| u8::from(p >= cfg.threshold)).collect();
            let rep = report(&y_true, &y_pred)?;
            let auc = roc_auc(&y_true, &proba);
            Ok((FoldResult { fold: f, test_rows: test, report: rep, auc }, proba))
        })
        .collect::<Result<_, ClassifierError>>()?;

    let mut oof = vec![0.0; raw.len()];
    for (fr, proba) in &folds {
        for (&i, &p) in fr.test_rows.iter().zip(proba) {
            oof[i] = p;
        }
    }
    let accs: Vec<f64> = folds.iter().map(|(f, _)| f.report.accuracy).collect();
    let mean_accuracy = accs.iter().sum::<f64>() / k as f64;
    let std_accuracy = (accs.iter().map(|a| (a - mean_accuracy).powi(2)).sum::<f64>() / k as f64).sqrt();
    let mean_f1 = [0, 1].map(|c| folds.iter().map(|(f, _)| f.report.classes[c].f1).sum::<f64>() / k as f64);
    let pooled_pred: Vec<u8> = oof.iter().map(|&p| u8::from(p >= cfg.threshold)).collect();
    let pooled = report(&raw.y, &pooled_pred)?;
    let pooled_auc = roc_auc(&raw.y, &oof);
    Ok(CvResult {
        folds: folds.into_iter().map(|(f, _)| f).collect(),
        mean_accuracy,
        std_accuracy,
        mean_f1,
        oof_probability: oof,
        pooled,
        pooled_auc,
    })
}
