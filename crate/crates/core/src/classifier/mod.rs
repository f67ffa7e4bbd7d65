//! Class-weighted boosting and a five-learner stacking ensemble over
//! balanced down-samples, plus evaluation and bulk labeling.

mod cv;
mod learners;
mod metrics;
mod tree;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scoring::{ScoreMatrix, Standardizer};

pub use cv::{cross_validate, stratified_folds, stratified_split, CvResult, FoldResult};
pub use learners::{
    sigmoid, BoostedTrees, BoostingParams, ForestParams, KNearest, KnnParams, LinearMaxMargin, LinearParams,
    LogisticCombiner, NaiveBayes, NaiveBayesParams, RandomForest,
};
pub use metrics::{report, roc_auc, ClassMetrics, ClassificationReport};
pub use tree::{Node, Tree};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training data contains a single class")]
    SingleClassData,
    #[error("stacking needs at least 2 minority rows, found {0}")]
    TooFewMinority(usize),
    #[error("invalid hyperparameter {name}: {reason}")]
    InvalidHyperparameter { name: String, reason: String },
    #[error("feature mismatch: model expects [{expected}], got [{found}]")]
    FeatureMismatch { expected: String, found: String },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("label {0} is not 0 or 1")]
    InvalidLabel(u8),
    #[error("{folds} folds need at least {folds} rows of each class, the smaller class has {minority}")]
    FoldWithoutMinority { folds: usize, minority: usize },
    #[error("rows are standardized with statistics other than the model's")]
    StandardizationMismatch,
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed classifier config: {0}")]
    Config(#[from] toml::de::Error),
    #[error("malformed model: {0}")]
    Json(#[from] serde_json::Error),
}

fn invalid(name: &str, reason: impl Into<String>) -> ClassifierError {
    ClassifierError::InvalidHyperparameter { name: name.to_string(), reason: reason.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleMode {
    #[serde(alias = "boosting")]
    WeightedBoosting,
    #[default]
    Stacking,
}

/// Minority-class weight for boosting.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ClassWeight {
    /// Majority count over minority count.
    #[default]
    Auto,
    Ratio(f64),
}

impl Serialize for ClassWeight {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ClassWeight::Auto => s.serialize_str("auto"),
            ClassWeight::Ratio(r) => s.serialize_f64(*r),
        }
    }
}

impl<'de> Deserialize<'de> for ClassWeight {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(r) => Ok(ClassWeight::Ratio(r)),
            Raw::Str(s) if s == "auto" => Ok(ClassWeight::Auto),
            Raw::Str(s) => s
                .parse::<f64>()
                .map(ClassWeight::Ratio)
                .map_err(|_| serde::de::Error::custom(format!("expected \"auto\" or a number, got `{s}`"))),
        }
    }
}

impl ClassWeight {
    pub fn resolve(self, y: &[u8]) -> f64 {
        match self {
            ClassWeight::Ratio(r) => r,
            ClassWeight::Auto => {
                let (minority, majority) = class_counts(y);
                if minority == 0 {
                    1.0
                } else {
                    majority as f64 / minority as f64
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaParams {
    pub l2: f64,
    pub inner_folds: usize,
}

impl Default for MetaParams {
    fn default() -> Self {
        MetaParams { l2: 1.0, inner_folds: 5 }
    }
}

/// Contents of `classifier.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub mode: EnsembleMode,
    pub threshold: f64,
    pub test_fraction: f64,
    pub cv_folds: usize,
    pub class_weight_ratio: ClassWeight,
    pub boosting: BoostingParams,
    pub forest: ForestParams,
    pub knn: KnnParams,
    pub linear: LinearParams,
    pub naive_bayes: NaiveBayesParams,
    pub meta: MetaParams,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            mode: EnsembleMode::Stacking,
            threshold: 0.5,
            test_fraction: 0.2,
            cv_folds: 10,
            class_weight_ratio: ClassWeight::Auto,
            boosting: BoostingParams::default(),
            forest: ForestParams::default(),
            knn: KnnParams::default(),
            linear: LinearParams::default(),
            naive_bayes: NaiveBayesParams::default(),
            meta: MetaParams::default(),
        }
    }
}

impl ClassifierConfig {
    pub fn from_toml(text: &str) -> Result<Self, ClassifierError> {
        let cfg: ClassifierConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ClassifierError> {
        let text = std::fs::read_to_string(path).map_err(|source| ClassifierError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(invalid("threshold", "must lie in [0, 1]"));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(invalid("test_fraction", "must lie in (0, 1)"));
        }
        if self.cv_folds < 2 {
            return Err(invalid("cv_folds", "must be at least 2"));
        }
        if let ClassWeight::Ratio(r) = self.class_weight_ratio {
            if !(r > 0.0 && r.is_finite()) {
                return Err(invalid("class_weight_ratio", "must be positive"));
            }
        }
        if !(self.meta.l2 >= 0.0) {
            return Err(invalid("meta.l2", "must be non-negative"));
        }
        if self.meta.inner_folds < 2 {
            return Err(invalid("meta.inner_folds", "must be at least 2"));
        }
        for spec in self.stacking_specs(0) {
            spec.validate()?;
        }
        Ok(())
    }

    pub fn boosting_spec(&self, seed: u64) -> BaseLearnerSpec {
        BaseLearnerSpec { params: LearnerParams::BoostedTrees(self.boosting), seed }
    }

    /// The five stacked learners, in a fixed order, all with `seed`.
    pub fn stacking_specs(&self, seed: u64) -> [BaseLearnerSpec; 5] {
        [
            LearnerParams::RandomForest(self.forest),
            LearnerParams::KNearestNeighbors(self.knn),
            LearnerParams::LinearMaxMargin(self.linear),
            LearnerParams::NaiveBayes(self.naive_bayes),
            LearnerParams::BoostedTrees(self.boosting),
        ]
        .map(|params| BaseLearnerSpec { params, seed })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    BoostedTrees,
    RandomForest,
    KNearestNeighbors,
    LinearMaxMargin,
    NaiveBayes,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "hyperparameters", rename_all = "snake_case")]
pub enum LearnerParams {
    BoostedTrees(BoostingParams),
    RandomForest(ForestParams),
    KNearestNeighbors(KnnParams),
    LinearMaxMargin(LinearParams),
    NaiveBayes(NaiveBayesParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseLearnerSpec {
    #[serde(flatten)]
    pub params: LearnerParams,
    pub seed: u64,
}

impl BaseLearnerSpec {
    pub fn kind(&self) -> LearnerKind {
        match self.params {
            LearnerParams::BoostedTrees(_) => LearnerKind::BoostedTrees,
            LearnerParams::RandomForest(_) => LearnerKind::RandomForest,
            LearnerParams::KNearestNeighbors(_) => LearnerKind::KNearestNeighbors,
            LearnerParams::LinearMaxMargin(_) => LearnerKind::LinearMaxMargin,
            LearnerParams::NaiveBayes(_) => LearnerKind::NaiveBayes,
        }
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        match &self.params {
            LearnerParams::BoostedTrees(p) => {
                if p.rounds < 1 {
                    return Err(invalid("boosting.rounds", "must be at least 1"));
                }
                if p.max_depth < 1 {
                    return Err(invalid("boosting.max_depth", "must be at least 1"));
                }
                if !(p.learning_rate > 0.0 && p.learning_rate <= 1.0) {
                    return Err(invalid("boosting.learning_rate", "must lie in (0, 1]"));
                }
                if !(p.lambda >= 0.0) || !(p.min_child_weight >= 0.0) {
                    return Err(invalid("boosting.lambda", "lambda and min_child_weight must be non-negative"));
                }
            }
            LearnerParams::RandomForest(p) => {
                if p.trees < 1 {
                    return Err(invalid("forest.trees", "must be at least 1"));
                }
                if p.max_depth < 1 {
                    return Err(invalid("forest.max_depth", "must be at least 1"));
                }
                if p.min_samples_leaf < 1 {
                    return Err(invalid("forest.min_samples_leaf", "must be at least 1"));
                }
            }
            LearnerParams::KNearestNeighbors(p) => {
                if p.k < 1 {
                    return Err(invalid("knn.k", "must be at least 1"));
                }
            }
            LearnerParams::LinearMaxMargin(p) => {
                if !(p.lambda > 0.0) {
                    return Err(invalid("linear.lambda", "must be positive"));
                }
                if p.epochs < 1 {
                    return Err(invalid("linear.epochs", "must be at least 1"));
                }
            }
            LearnerParams::NaiveBayes(p) => {
                if !(p.var_smoothing >= 0.0) {
                    return Err(invalid("naive_bayes.var_smoothing", "must be non-negative"));
                }
            }
        }
        Ok(())
    }

    /// Fits with unit row weights except under boosting, where `weights`
    /// applies.
    pub fn fit(&self, x: &[Vec<f64>], y: &[u8], weights: Option<&[f64]>) -> FittedLearner {
        match &self.params {
            LearnerParams::BoostedTrees(p) => {
                let ones;
                let w = match weights {
                    Some(w) => w,
                    None => {
                        ones = vec![1.0; x.len()];
                        &ones
                    }
                };
                FittedLearner::BoostedTrees(BoostedTrees::fit(x, y, w, p))
            }
            LearnerParams::RandomForest(p) => FittedLearner::RandomForest(RandomForest::fit(x, y, p, self.seed)),
            LearnerParams::KNearestNeighbors(p) => FittedLearner::KNearestNeighbors(KNearest::fit(x, y, p)),
            LearnerParams::LinearMaxMargin(p) => FittedLearner::LinearMaxMargin(LinearMaxMargin::fit(x, y, p)),
            LearnerParams::NaiveBayes(p) => FittedLearner::NaiveBayes(NaiveBayes::fit(x, y, p)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FittedLearner {
    BoostedTrees(BoostedTrees),
    RandomForest(RandomForest),
    KNearestNeighbors(KNearest),
    LinearMaxMargin(LinearMaxMargin),
    NaiveBayes(NaiveBayes),
}

impl FittedLearner {
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        let p = match self {
            FittedLearner::BoostedTrees(m) => m.predict_proba(x),
            FittedLearner::RandomForest(m) => m.predict_proba(x),
            FittedLearner::KNearestNeighbors(m) => m.predict_proba(x),
            FittedLearner::LinearMaxMargin(m) => m.predict_proba(x),
            FittedLearner::NaiveBayes(m) => m.predict_proba(x),
        };
        p.clamp(0.0, 1.0)
    }
}

/// Feature rows with 0/1 labels, in matrix row order.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFeatures {
    pub feature_order: Vec<String>,
    pub user_ids: Vec<String>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<u8>,
}

impl LabeledFeatures {
    /// Keeps the labeled rows of `m`.
    pub fn from_matrix(m: &ScoreMatrix) -> Self {
        let mut out = LabeledFeatures {
            feature_order: m.feature_order.clone(),
            user_ids: Vec::new(),
            x: Vec::new(),
            y: Vec::new(),
        };
        for r in &m.rows {
            if let Some(l) = r.label {
                out.user_ids.push(r.user_id.clone());
                out.x.push(r.values.clone());
                out.y.push(l);
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn subset(&self, rows: &[usize]) -> LabeledFeatures {
        LabeledFeatures {
            feature_order: self.feature_order.clone(),
            user_ids: rows.iter().map(|&i| self.user_ids[i].clone()).collect(),
            x: rows.iter().map(|&i| self.x[i].clone()).collect(),
            y: rows.iter().map(|&i| self.y[i]).collect(),
        }
    }

    fn check(&self) -> Result<(), ClassifierError> {
        if let Some(&bad) = self.y.iter().find(|&&v| v > 1) {
            return Err(ClassifierError::InvalidLabel(bad));
        }
        let pos = self.y.iter().filter(|&&v| v == 1).count();
        if pos == 0 || pos == self.y.len() {
            return Err(ClassifierError::SingleClassData);
        }
        Ok(())
    }
}

/// `(minority count, majority count)`; class 1 is the minority on ties.
pub fn class_counts(y: &[u8]) -> (usize, usize) {
    let pos = y.iter().filter(|&&v| v == 1).count();
    let neg = y.len() - pos;
    (pos.min(neg), pos.max(neg))
}

fn minority_label(y: &[u8]) -> u8 {
    let pos = y.iter().filter(|&&v| v == 1).count();
    u8::from(pos <= y.len() - pos)
}

/// Rows one stacked learner is trained on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleDescriptor {
    pub minority_rows: Vec<usize>,
    pub majority_rows: Vec<usize>,
}

impl SampleDescriptor {
    pub fn rows(&self) -> Vec<usize> {
        let mut r: Vec<usize> = self.minority_rows.iter().chain(&self.majority_rows).copied().collect();
        r.sort_unstable();
        r
    }
}

/// Five balanced samples: every minority row plus one part of a shuffled
/// five-way partition of the majority rows (part sizes differ by at most
/// one). When the majority has fewer than five times as many rows as the
/// minority, each sample instead draws `min(m, M)` majority rows
/// independently, so samples stay balanced but may overlap.
pub fn stacking_samples(y: &[u8], seed: u64) -> Result<Vec<SampleDescriptor>, ClassifierError> {
    let (m, big) = class_counts(y);
    if m == 0 {
        return Err(ClassifierError::SingleClassData);
    }
    if m < 2 {
        return Err(ClassifierError::TooFewMinority(m));
    }
    let minority = minority_label(y);
    let minority_rows: Vec<usize> = (0..y.len()).filter(|&i| y[i] == minority).collect();
    let mut majority: Vec<usize> = (0..y.len()).filter(|&i| y[i] != minority).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(5);
    if big >= 5 * m {
        majority.shuffle(&mut rng);
        let (base, extra) = (big / 5, big % 5);
        let mut start = 0;
        for part in 0..5 {
            let len = base + usize::from(part < extra);
            let mut rows = majority[start..start + len].to_vec();
            rows.sort_unstable();
            start += len;
            out.push(SampleDescriptor { minority_rows: minority_rows.clone(), majority_rows: rows });
        }
    } else {
        for _ in 0..5 {
            let mut rows: Vec<usize> = learners::choose(&mut rng, big, m).into_iter().map(|i| majority[i]).collect();
            rows.sort_unstable();
            out.push(SampleDescriptor { minority_rows: minority_rows.clone(), majority_rows: rows });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseModel {
    pub spec: BaseLearnerSpec,
    pub model: FittedLearner,
    pub sample: Option<SampleDescriptor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub mode: EnsembleMode,
    pub feature_order: Vec<String>,
    /// Statistics rows must be standardized with before prediction.
    pub standardization: Option<Standardizer>,
    pub threshold: f64,
    pub seed: u64,
    /// Minority weight used by boosting; 1 for stacking.
    pub class_weight_ratio: f64,
    pub base_models: Vec<BaseModel>,
    pub meta: Option<LogisticCombiner>,
    pub training_users: Vec<String>,
}

impl EnsembleModel {
    /// Class-1 probability of an already standardized row, no name check.
    pub fn proba(&self, row: &[f64]) -> f64 {
        match (&self.mode, &self.meta) {
            (EnsembleMode::Stacking, Some(meta)) => {
                let z: Vec<f64> = self.base_models.iter().map(|b| b.model.predict_proba(row)).collect();
                meta.predict_proba(&z).clamp(0.0, 1.0)
            }
            _ => self.base_models[0].model.predict_proba(row),
        }
    }

    /// Standardizes a raw row with the stored statistics, then predicts.
    pub fn proba_raw(&self, row: &[f64]) -> f64 {
        match &self.standardization {
            Some(st) => self.proba(&st.transform_row(row)),
            None => self.proba(row),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(json: &str) -> Result<Self, ClassifierError> {
        Ok(serde_json::from_str(json)?)
    }

    fn check_features(&self, names: &[String], width: usize) -> Result<(), ClassifierError> {
        if names != self.feature_order.as_slice() || width != self.feature_order.len() {
            return Err(ClassifierError::FeatureMismatch {
                expected: self.feature_order.join(","),
                found: names.join(","),
            });
        }
        Ok(())
    }
}

/// Boosted trees on all rows, minority rows weighted by `class_weight_ratio`.
/// `data` must already be standardized.
pub fn train_weighted_boosting(
    data: &LabeledFeatures,
    spec: &BaseLearnerSpec,
    class_weight_ratio: f64,
) -> Result<EnsembleModel, ClassifierError> {
    data.check()?;
    spec.validate()?;
    if !(class_weight_ratio > 0.0 && class_weight_ratio.is_finite()) {
        return Err(invalid("class_weight_ratio", "must be positive"));
    }
    let minority = minority_label(&data.y);
    let w: Vec<f64> = data
        .y
        .iter()
        .map(|&v| if v == minority { class_weight_ratio } else { 1.0 })
        .collect();
    let model = spec.fit(&data.x, &data.y, Some(&w));
    Ok(EnsembleModel {
        mode: EnsembleMode::WeightedBoosting,
        feature_order: data.feature_order.clone(),
        standardization: None,
        threshold: 0.5,
        seed: spec.seed,
        class_weight_ratio,
        base_models: vec![BaseModel { spec: *spec, model, sample: None }],
        meta: None,
        training_users: data.user_ids.clone(),
    })
}

/// Out-of-sample probabilities of `spec` on `rows` via stratified inner
/// folds; falls back to in-sample fits when a class is too small to fold.
fn inner_oof(
    spec: &BaseLearnerSpec,
    x: &[Vec<f64>],
    y: &[u8],
    rows: &[usize],
    folds: usize,
) -> Vec<f64> {
    let ys: Vec<u8> = rows.iter().map(|&i| y[i]).collect();
    let xs: Vec<Vec<f64>> = rows.iter().map(|&i| x[i].clone()).collect();
    let (m, _) = class_counts(&ys);
    let k = folds.min(m);
    if k < 2 {
        let fit = spec.fit(&xs, &ys, None);
        return xs.iter().map(|r| fit.predict_proba(r)).collect();
    }
    let assignment = stratified_folds(&ys, k, spec.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut out = vec![0.0; rows.len()];
    for f in 0..k {
        let train: Vec<usize> = (0..rows.len()).filter(|&i| assignment[i] != f).collect();
        let tx: Vec<Vec<f64>> = train.iter().map(|&i| xs[i].clone()).collect();
        let ty: Vec<u8> = train.iter().map(|&i| ys[i]).collect();
        let fold_spec = BaseLearnerSpec { seed: spec.seed.wrapping_add(f as u64 + 1), ..*spec };
        let fit = fold_spec.fit(&tx, &ty, None);
        for i in (0..rows.len()).filter(|&i| assignment[i] == f) {
            out[i] = fit.predict_proba(&xs[i]);
        }
    }
    out
}

/// Five learners, each on its own balanced sample, combined by a logistic
/// model fit on out-of-sample base probabilities. `data` must already be
/// standardized.
pub fn train_stacking(
    data: &LabeledFeatures,
    specs: &[BaseLearnerSpec; 5],
    meta: MetaParams,
    seed: u64,
) -> Result<EnsembleModel, ClassifierError> {
    data.check()?;
    for s in specs {
        s.validate()?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = stacking_samples(&data.y, rng.next_u64())?;
    let specs: Vec<BaseLearnerSpec> = specs
        .iter()
        .map(|s| BaseLearnerSpec { seed: rng.next_u64(), ..*s })
        .collect();

    let fitted: Vec<(BaseModel, Vec<f64>)> = specs
        .par_iter()
        .zip(samples.par_iter())
        .map(|(spec, sample)| {
            let rows = sample.rows();
            let xs: Vec<Vec<f64>> = rows.iter().map(|&i| data.x[i].clone()).collect();
            let ys: Vec<u8> = rows.iter().map(|&i| data.y[i]).collect();
            let model = spec.fit(&xs, &ys, None);
            let mut column: Vec<f64> = data.x.iter().map(|r| model.predict_proba(r)).collect();
            for (i, p) in rows.iter().zip(inner_oof(spec, &data.x, &data.y, &rows, meta.inner_folds)) {
                column[*i] = p;
            }
            (BaseModel { spec: *spec, model, sample: Some(sample.clone()) }, column)
        })
        .collect();

    let meta_x: Vec<Vec<f64>> = (0..data.len())
        .map(|i| fitted.iter().map(|(_, col)| col[i]).collect())
        .collect();
    let combiner = LogisticCombiner::fit(&meta_x, &data.y, meta.l2);
    Ok(EnsembleModel {
        mode: EnsembleMode::Stacking,
        feature_order: data.feature_order.clone(),
        standardization: None,
        threshold: 0.5,
        seed,
        class_weight_ratio: 1.0,
        base_models: fitted.into_iter().map(|(b, _)| b).collect(),
        meta: Some(combiner),
        training_users: data.user_ids.clone(),
    })
}

/// Fits standardization on `raw` (columns where `scale_mask` is true), then
/// trains the configured mode on the standardized rows.
pub fn fit_model(
    raw: &LabeledFeatures,
    cfg: &ClassifierConfig,
    scale_mask: &[bool],
    seed: u64,
) -> Result<EnsembleModel, ClassifierError> {
    cfg.validate()?;
    raw.check()?;
    let rows: Vec<&[f64]> = raw.x.iter().map(Vec::as_slice).collect();
    let st = Standardizer::fit(&rows, Some(scale_mask));
    let data = LabeledFeatures { x: st.transform(&raw.x), ..raw.clone() };
    let mut model = match cfg.mode {
        EnsembleMode::WeightedBoosting => {
            let ratio = cfg.class_weight_ratio.resolve(&data.y);
            train_weighted_boosting(&data, &cfg.boosting_spec(seed), ratio)?
        }
        EnsembleMode::Stacking => train_stacking(&data, &cfg.stacking_specs(seed), cfg.meta, seed)?,
    };
    model.standardization = Some(st);
    model.threshold = cfg.threshold;
    Ok(model)
}

/// Probability of class 1 for a row standardized with the model's
/// statistics, named by `feature_order`.
pub fn predict_proba(model: &EnsembleModel, feature_order: &[String], row: &[f64]) -> Result<f64, ClassifierError> {
    model.check_features(feature_order, row.len())?;
    Ok(model.proba(row))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledUser {
    pub user_id: String,
    pub probability: f64,
    pub label: u8,
}

/// Labels every row of `matrix`. A raw matrix is standardized with the
/// model's statistics first; a standardized one must carry those same
/// statistics.
pub fn label_corpus(model: &EnsembleModel, matrix: &ScoreMatrix) -> Result<Vec<LabeledUser>, ClassifierError> {
    model.check_features(&matrix.feature_order, matrix.n_features())?;
    let standardize = match (&matrix.standardization, &model.standardization) {
        (None, _) => true,
        (Some(a), Some(b)) if a == b => false,
        (Some(_), None) => false,
        _ => return Err(ClassifierError::StandardizationMismatch),
    };
    let out = matrix
        .rows
        .par_iter()
        .map(|r| {
            if r.values.len() != model.feature_order.len() {
                return Err(ClassifierError::LengthMismatch { left: r.values.len(), right: model.feature_order.len() });
            }
            let probability = if standardize { model.proba_raw(&r.values) } else { model.proba(&r.values) };
            Ok(LabeledUser {
                user_id: r.user_id.clone(),
                probability,
                label: u8::from(probability >= model.threshold),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(out)
}

/// CSV `user_id,probability,label`.
pub fn labels_to_csv(labels: &[LabeledUser]) -> String {
    let mut s = String::from("user_id,probability,label\n");
    for l in labels {
        s.push_str(&format!("{},{},{}\n", l.user_id, l.probability, l.label));
    }
    s
}
