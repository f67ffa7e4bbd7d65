//! Instance scores: TF-IDF cosine similarity between each user and every
//! lexical binding, plus a phrase count, assembled into a score matrix.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curation::{CuratedRecord, Curator};
use crate::lexicon::{BindingSet, Feature, PhraseList};

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("cannot fit TF-IDF on a corpus without any tokens")]
    EmptyCorpus,
    #[error("no binding for instance `{0}`")]
    MissingBinding(String),
    #[error("phrase list `{0}` is not loaded")]
    MissingPhraseList(String),
    #[error("malformed TF-IDF model: {0}")]
    Model(String),
    #[error("score table: {0}")]
    Csv(#[from] csv::Error),
    #[error("score table: {0}")]
    Table(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Fitted vocabulary and smoothed idf weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfIdfModel {
    /// Sorted; a stem's column is its position.
    pub vocabulary: Vec<String>,
    pub idf: Vec<f64>,
    pub doc_count: usize,
}

impl TfIdfModel {
    pub fn column(&self, stem: &str) -> Option<usize> {
        self.vocabulary
            .binary_search_by(|v| v.as_str().cmp(stem))
            .ok()
    }

    pub fn len(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocabulary.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(json: &str) -> Result<Self, ScoringError> {
        let m: TfIdfModel = serde_json::from_str(json)?;
        if m.idf.len() != m.vocabulary.len() {
            return Err(ScoringError::Model("idf and vocabulary lengths differ".into()));
        }
        if m.vocabulary.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ScoringError::Model("vocabulary is not sorted and unique".into()));
        }
        if m.doc_count == 0 {
            return Err(ScoringError::Model("doc_count is zero".into()));
        }
        Ok(m)
    }
}

/// Fits vocabulary and idf on tokenized documents (one per user chunk).
/// Empty documents still count towards N.
pub fn fit_tfidf(docs: &[Vec<String>]) -> Result<TfIdfModel, ScoringError> {
    let df: BTreeMap<&str, usize> = docs
        .par_iter()
        .map(|doc| {
            let mut m = BTreeMap::new();
            for t in doc.iter().map(String::as_str).collect::<BTreeSet<_>>() {
                m.insert(t, 1usize);
            }
            m
        })
        .reduce(BTreeMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_insert(0) += v;
            }
            a
        });
    if df.is_empty() {
        return Err(ScoringError::EmptyCorpus);
    }
    let n = docs.len() as f64;
    let (vocabulary, idf) = df
        .into_iter()
        .map(|(t, d)| (t.to_string(), ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0))
        .unzip();
    Ok(TfIdfModel {
        vocabulary,
        idf,
        doc_count: docs.len(),
    })
}

/// Sparse non-negative vector, entries sorted by column.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVector {
    pub entries: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn from_map(map: BTreeMap<usize, f64>) -> Self {
        SparseVector {
            entries: map.into_iter().filter(|(_, v)| *v != 0.0).collect(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < self.entries.len() && j < other.entries.len() {
            let (a, b) = (self.entries[i], other.entries[j]);
            match a.0.cmp(&b.0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += a.1 * b.1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    pub fn scaled(&self, alpha: f64) -> SparseVector {
        SparseVector {
            entries: self.entries.iter().map(|&(c, v)| (c, v * alpha)).collect(),
        }
    }

    /// Unit-length copy; the zero vector stays zero.
    pub fn normalized(&self) -> SparseVector {
        let n = self.norm();
        if n == 0.0 {
            SparseVector::default()
        } else {
            self.scaled(1.0 / n)
        }
    }

    pub fn to_dense(&self, len: usize) -> Vec<f64> {
        let mut d = vec![0.0; len];
        for &(c, v) in &self.entries {
            d[c] = v;
        }
        d
    }
}

/// How the user side of the similarity is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UserVectorMode {
    /// One tf vector from all of the user's tokens.
    #[default]
    Concatenated,
    /// Mean of the per-chunk unit vectors.
    ChunkMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ScoringOptions {
    #[serde(default)]
    pub user_vector_mode: UserVectorMode,
    #[serde(default)]
    pub weight_lexicon_by_idf: bool,
}

/// Raw-count tf times idf, L2-normalized. Unknown stems are ignored.
pub fn user_vector(model: &TfIdfModel, tokens: &[String]) -> SparseVector {
    let mut tf: BTreeMap<usize, f64> = BTreeMap::new();
    for t in tokens {
        if let Some(c) = model.column(t) {
            *tf.entry(c).or_insert(0.0) += 1.0;
        }
    }
    for (c, v) in tf.iter_mut() {
        *v *= model.idf[*c];
    }
    SparseVector::from_map(tf).normalized()
}

/// Mean of the unit tf-idf vectors of the non-empty chunks, L2-normalized.
pub fn chunk_mean_vector(model: &TfIdfModel, chunks: &[Vec<String>]) -> SparseVector {
    let mut sum: BTreeMap<usize, f64> = BTreeMap::new();
    let mut k = 0usize;
    for chunk in chunks {
        let v = user_vector(model, chunk);
        if v.is_zero() {
            continue;
        }
        k += 1;
        for (c, x) in v.entries {
            *sum.entry(c).or_insert(0.0) += x;
        }
    }
    if k == 0 {
        return SparseVector::default();
    }
    for v in sum.values_mut() {
        *v /= k as f64;
    }
    SparseVector::from_map(sum).normalized()
}

/// Indicator of `stems ∩ vocabulary` (optionally idf-weighted), L2-normalized.
pub fn lexicon_vector(model: &TfIdfModel, stems: &BTreeSet<String>, weight_by_idf: bool) -> SparseVector {
    let map = stems
        .iter()
        .filter_map(|s| model.column(s))
        .map(|c| (c, if weight_by_idf { model.idf[c] } else { 1.0 }))
        .collect();
    SparseVector::from_map(map).normalized()
}

/// Cosine similarity clamped to [0, 1]; 0 when either side is zero.
pub fn cosine_score(u: &SparseVector, l: &SparseVector) -> f64 {
    let (nu, nl) = (u.norm(), l.norm());
    if nu == 0.0 || nl == 0.0 {
        return 0.0;
    }
    (u.dot(l) / (nu * nl)).clamp(0.0, 1.0)
}

/// Word-boundary anchored alternation over a phrase list.
#[derive(Debug, Clone)]
pub struct PhraseMatcher {
    regex: Option<Regex>,
}

impl PhraseMatcher {
    pub fn new(list: &PhraseList) -> Self {
        let mut phrases: Vec<&String> = list.phrases.iter().filter(|p| !p.is_empty()).collect();
        // Longer phrases first so a phrase wins over its own prefix.
        phrases.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
        phrases.dedup();
        if phrases.is_empty() {
            return PhraseMatcher { regex: None };
        }
        let alternation = phrases
            .iter()
            .map(|p| {
                p.split_whitespace()
                    .map(regex::escape)
                    .collect::<Vec<_>>()
                    .join(r"\s+")
            })
            .collect::<Vec<_>>()
            .join("|");
        let regex = Regex::new(&format!(r"\b(?:{alternation})\b")).expect("escaped phrases form a valid regex");
        PhraseMatcher { regex: Some(regex) }
    }

    /// Non-overlapping, leftmost occurrences of any phrase.
    pub fn count(&self, text: &str) -> usize {
        self.regex.as_ref().map_or(0, |r| r.find_iter(text).count())
    }
}

/// Counts phrase occurrences in normalized lowercase text.
pub fn suicidal_count(text: &str, phrases: &PhraseList) -> usize {
    PhraseMatcher::new(phrases).count(text)
}

/// What scoring needs from one curated user.
#[derive(Debug, Clone, PartialEq)]
pub struct UserDocs {
    pub user_id: String,
    pub label: Option<u8>,
    pub tokens: Vec<String>,
    pub chunk_tokens: Vec<Vec<String>>,
    pub phrase_text: String,
}

impl UserDocs {
    pub fn from_record(record: &CuratedRecord, curator: &Curator) -> Self {
        UserDocs {
            user_id: record.user_id.clone(),
            label: record.label,
            tokens: record.stemmed_tokens.clone(),
            chunk_tokens: curator.chunk_stems(record),
            phrase_text: record.phrase_text.clone(),
        }
    }
}

/// All chunk documents of all users, in user order.
pub fn chunk_documents(users: &[UserDocs]) -> Vec<Vec<String>> {
    users.iter().flat_map(|u| u.chunk_tokens.iter().cloned()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub user_id: String,
    pub label: Option<u8>,
    /// Aligned with [`ScoreMatrix::feature_order`].
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub feature_order: Vec<String>,
    pub rows: Vec<ScoreRow>,
    /// Present once the values have been standardized.
    pub standardization: Option<Standardizer>,
}

impl ScoreMatrix {
    pub fn n_features(&self) -> usize {
        self.feature_order.len()
    }

    pub fn values(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.values.clone()).collect()
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.feature_order.iter().position(|f| f == name)?;
        Some(self.rows.iter().map(|r| r.values[j]).collect())
    }

    /// Header `user_id,label,<features>`; unknown labels are empty cells.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ScoringError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["user_id".to_string(), "label".to_string()];
        header.extend(self.feature_order.iter().cloned());
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.user_id.clone(), r.label.map(|l| l.to_string()).unwrap_or_default()];
            rec.extend(r.values.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, ScoringError> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        if header.len() < 2 || &header[0] != "user_id" || &header[1] != "label" {
            return Err(ScoringError::Table("header must start with user_id,label".into()));
        }
        let feature_order: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| ScoringError::Table(format!("row {}: {what}", i + 1));
            let label = match &rec[1] {
                "" => None,
                "0" => Some(0),
                "1" => Some(1),
                _ => return Err(bad("label must be 0, 1 or empty")),
            };
            let values = rec
                .iter()
                .skip(2)
                .map(|v| v.parse::<f64>().map_err(|_| bad("non-numeric score")))
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(ScoreRow {
                user_id: rec[0].to_string(),
                label,
                values,
            });
        }
        Ok(ScoreMatrix {
            feature_order,
            rows,
            standardization: None,
        })
    }
}

/// Scores every user against every feature in `feature_order`.
pub fn compute_scores(
    users: &[UserDocs],
    bindings: &BindingSet,
    phrase_lists: &BTreeMap<String, PhraseList>,
    model: &TfIdfModel,
    feature_order: &[String],
    options: ScoringOptions,
) -> Result<ScoreMatrix, ScoringError> {
    enum Scorer {
        Cosine(SparseVector),
        Count(PhraseMatcher),
    }
    let mut scorers = Vec::with_capacity(feature_order.len());
    for name in feature_order {
        let feature = bindings
            .features
            .iter()
            .find(|f| f.instance().as_str() == name)
            .ok_or_else(|| ScoringError::MissingBinding(name.clone()))?;
        scorers.push(match feature {
            Feature::Lexical(b) => Scorer::Cosine(lexicon_vector(model, &b.merged_stems, options.weight_lexicon_by_idf)),
            Feature::Phrases { list, .. } => {
                let l = phrase_lists
                    .get(list)
                    .ok_or_else(|| ScoringError::MissingPhraseList(list.clone()))?;
                Scorer::Count(PhraseMatcher::new(l))
            }
        });
    }

    let rows = users
        .par_iter()
        .map(|u| {
            let uv = match options.user_vector_mode {
                UserVectorMode::Concatenated => user_vector(model, &u.tokens),
                UserVectorMode::ChunkMean => chunk_mean_vector(model, &u.chunk_tokens),
            };
            let values = scorers
                .iter()
                .map(|s| match s {
                    Scorer::Cosine(lv) => cosine_score(&uv, lv),
                    Scorer::Count(m) => m.count(&u.phrase_text) as f64,
                })
                .collect();
            ScoreRow {
                user_id: u.user_id.clone(),
                label: u.label,
                values,
            }
        })
        .collect();
    Ok(ScoreMatrix {
        feature_order: feature_order.to_vec(),
        rows,
        standardization: None,
    })
}

/// Columns with a standard deviation below this are treated as constant.
pub const CONSTANT_EPS: f64 = 1e-12;

/// Per-column z-score with population statistics. Columns left out of the
/// mask keep mean 0 and std 1, so they pass through unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[&[f64]], mask: Option<&[bool]>) -> Self {
        let d = rows.first().map_or(0, |r| r.len());
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        let mut std = vec![1.0; d];
        if rows.is_empty() {
            return Standardizer { mean, std };
        }
        for j in 0..d {
            if mask.is_some_and(|m| !m[j]) {
                continue;
            }
            let mu = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[j] - mu).powi(2)).sum::<f64>() / n;
            let s = var.sqrt();
            mean[j] = mu;
            std[j] = if s < CONSTANT_EPS { 1.0 } else { s };
        }
        Standardizer { mean, std }
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    pub fn inverse_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(z, (m, s))| z * s + m)
            .collect()
    }

    pub fn transform(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.transform_row(r)).collect()
    }
}

/// Standardizes `m` using statistics from `fit_rows` only. With
/// `standardize_all` false only phrase-count columns (names in
/// `count_features`) are scaled.
pub fn standardize(
    m: &ScoreMatrix,
    fit_rows: &[usize],
    standardize_all: bool,
    count_features: &[String],
) -> ScoreMatrix {
    let mask: Vec<bool> = m
        .feature_order
        .iter()
        .map(|f| standardize_all || count_features.contains(f))
        .collect();
    let fit: Vec<&[f64]> = fit_rows.iter().map(|&i| m.rows[i].values.as_slice()).collect();
    let st = Standardizer::fit(&fit, Some(&mask));
    let rows = m
        .rows
        .iter()
        .map(|r| ScoreRow {
            user_id: r.user_id.clone(),
            label: r.label,
            values: st.transform_row(&r.values),
        })
        .collect();
    ScoreMatrix {
        feature_order: m.feature_order.clone(),
        rows,
        standardization: Some(st),
    }
}

/// Names of the features scored by phrase counting.
pub fn count_feature_names(bindings: &BindingSet) -> Vec<String> {
    bindings
        .features
        .iter()
        .filter(|f| matches!(f, Feature::Phrases { .. }))
        .map(|f| f.instance().to_string())
        .collect()
}
