//! Stage-wise pipeline: ingest, curate, score, train, evaluate, label. Each
//! stage reads the previous stage's artifact from the output directory and
//! writes its own, so any suffix of the pipeline can be re-run.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::classifier::{
    cross_validate, fit_model, label_corpus, labels_to_csv, report, roc_auc, stratified_split, ClassificationReport,
    ClassifierConfig, ClassifierError, EnsembleModel, LabeledFeatures,
};
use crate::curation::{
    ingest_corpus, CuratedRecord, CurationError, Curator, DictionaryEnrichment, IngestWarning, UserCorpus,
};
use crate::lexicon::{load_binding_config, load_lexicon_dir, load_phrase_list, BindingSet, LexiconError};
use crate::scoring::{
    chunk_documents, compute_scores, fit_tfidf, ScoreMatrix, ScoringError, ScoringOptions, UserDocs, UserVectorMode,
};
use crate::taxonomy::{load_taxonomy, Taxonomy, TaxonomyError};
use crate::text::{Stemmer, StemmerKind, Stopwords};

pub const SEED_ENV: &str = "MINDKB_SEED";
pub const MANIFEST_FILE: &str = "manifest.json";

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const CURATED_FILE: &str = "curated.jsonl";
pub const SCORES_RAW_FILE: &str = "scores_raw.csv";
pub const TFIDF_FILE: &str = "tfidf.json";
pub const MODEL_FILE: &str = "model.json";
pub const SCORES_STD_FILE: &str = "scores_standardized.csv";
pub const REPORT_FILE: &str = "report.json";
pub const REPORT_TEXT_FILE: &str = "report.txt";
pub const LABELS_FILE: &str = "labels.csv";

/// Every file a stage may write, in pipeline order.
pub const ARTIFACTS: [&str; 9] = [
    CORPUS_FILE,
    CURATED_FILE,
    SCORES_RAW_FILE,
    TFIDF_FILE,
    MODEL_FILE,
    SCORES_STD_FILE,
    REPORT_FILE,
    REPORT_TEXT_FILE,
    LABELS_FILE,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Curate,
    Score,
    Train,
    Evaluate,
    Label,
}

impl Stage {
    pub const ALL: [Stage; 6] = [Stage::Ingest, Stage::Curate, Stage::Score, Stage::Train, Stage::Evaluate, Stage::Label];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Curate => "curate",
            Stage::Score => "score",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Label => "label",
        }
    }

    /// Primary artifact.
    pub fn output(self) -> &'static str {
        match self {
            Stage::Ingest => CORPUS_FILE,
            Stage::Curate => CURATED_FILE,
            Stage::Score => SCORES_RAW_FILE,
            Stage::Train => MODEL_FILE,
            Stage::Evaluate => REPORT_FILE,
            Stage::Label => LABELS_FILE,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s.trim())
            .ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

/// Parses `ingest,curate` or `all`; result is in pipeline order.
pub fn parse_stages(list: &str) -> Result<Vec<Stage>, String> {
    if list.trim() == "all" {
        return Ok(Stage::ALL.to_vec());
    }
    let mut out: Vec<Stage> = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(Stage::from_str)
        .collect::<Result<_, _>>()?;
    out.sort();
    out.dedup();
    if out.is_empty() {
        return Err("no stages given".into());
    }
    Ok(out)
}

/// Whether a failure is the caller's environment (files, config) or the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    Io,
    Domain,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("stage {stage}: missing input {path} (run the earlier stages first)")]
    MissingInput { stage: Stage, path: String },
    #[error("stage {stage}: {message}")]
    Stage {
        stage: Stage,
        kind: FailureKind,
        message: String,
    },
}

impl PipelineError {
    /// 1 for domain errors, 2 for I/O and configuration errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Stage { kind: FailureKind::Domain, .. } => 1,
            _ => 2,
        }
    }

    fn stage(stage: Stage, kind: FailureKind, e: impl fmt::Display) -> Self {
        PipelineError::Stage { stage, kind, message: e.to_string() }
    }
}

pub fn curation_kind(e: &CurationError) -> FailureKind {
    match e {
        CurationError::Io { .. } | CurationError::NoChunks(_) => FailureKind::Io,
        _ => FailureKind::Domain,
    }
}

pub fn lexicon_kind(e: &LexiconError) -> FailureKind {
    match e {
        LexiconError::Io { .. } | LexiconError::Parse { .. } | LexiconError::Config(_) => FailureKind::Io,
        _ => FailureKind::Domain,
    }
}

pub fn taxonomy_kind(e: &TaxonomyError) -> FailureKind {
    match e {
        TaxonomyError::Io { .. } | TaxonomyError::Parse(_) => FailureKind::Io,
        _ => FailureKind::Domain,
    }
}

pub fn classifier_kind(e: &ClassifierError) -> FailureKind {
    match e {
        ClassifierError::Io { .. } | ClassifierError::Config(_) | ClassifierError::Json(_) => FailureKind::Io,
        _ => FailureKind::Domain,
    }
}

pub fn scoring_kind(e: &ScoringError) -> FailureKind {
    match e {
        ScoringError::Csv(_) | ScoringError::Json(_) | ScoringError::Table(_) | ScoringError::Model(_) => FailureKind::Io,
        _ => FailureKind::Domain,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringSection {
    pub user_vector_mode: UserVectorMode,
    pub weight_lexicon_by_idf: bool,
    pub standardize_all: bool,
}

impl Default for ScoringSection {
    fn default() -> Self {
        ScoringSection { user_vector_mode: UserVectorMode::Concatenated, weight_lexicon_by_idf: false, standardize_all: true }
    }
}

/// Contents of `pipeline.toml`. Relative paths are resolved against the
/// config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus_root: PathBuf,
    pub taxonomy: PathBuf,
    pub bindings: PathBuf,
    pub lexicons_dir: PathBuf,
    pub phrase_list: PathBuf,
    pub stopwords_path: PathBuf,
    #[serde(default)]
    pub enrichment_dict_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub classifier_config: PathBuf,
    pub seed: u64,
    #[serde(default)]
    pub stemmer: StemmerKind,
    #[serde(default = "yes")]
    pub include_titles: bool,
    #[serde(default = "default_chunks")]
    pub chunk_count: usize,
    #[serde(default)]
    pub scoring: ScoringSection,
}

fn yes() -> bool {
    true
}

fn default_chunks() -> usize {
    crate::curation::DEFAULT_CHUNKS
}

const PATH_KEYS: [&str; 9] = [
    "corpus_root",
    "taxonomy",
    "bindings",
    "lexicons_dir",
    "phrase_list",
    "stopwords_path",
    "enrichment_dict_path",
    "output_dir",
    "classifier_config",
];

/// Parses `value` as a TOML value, falling back to a plain string.
fn toml_value(value: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()))
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), PipelineError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| PipelineError::Config(format!("empty key in `{key}`")))?;
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| PipelineError::Config(format!("`{p}` in `{key}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// A `key=value` override.
pub fn split_override(s: &str) -> Result<(String, String), PipelineError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| PipelineError::Config(format!("override `{s}` is not key=value")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

/// Both configs, resolved and validated.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub pipeline: PipelineConfig,
    pub classifier: ClassifierConfig,
}

fn read_text(path: &Path) -> Result<String, PipelineError> {
    std::fs::read_to_string(path).map_err(|source| PipelineError::Io { path: path.display().to_string(), source })
}

impl Settings {
    /// Loads `pipeline.toml`, applies `MINDKB_SEED` and then the overrides.
    /// Keys starting with `classifier.` go to the classifier config.
    /// Overridden relative paths are taken relative to the working
    /// directory.
    pub fn load(config_path: &Path, overrides: &[(String, String)]) -> Result<Self, PipelineError> {
        let env_seed = std::env::var(SEED_ENV).ok();
        Self::load_with_seed(config_path, overrides, env_seed.as_deref())
    }

    pub fn load_with_seed(
        config_path: &Path,
        overrides: &[(String, String)],
        env_seed: Option<&str>,
    ) -> Result<Self, PipelineError> {
        let text = read_text(config_path)?;
        let mut table: toml::Table =
            toml::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", config_path.display())))?;
        let base = config_path.parent().map(Path::to_path_buf).unwrap_or_default();
        for key in PATH_KEYS {
            if let Some(toml::Value::String(s)) = table.get(key) {
                let p = base.join(s);
                table.insert(key.to_string(), toml::Value::String(p.display().to_string()));
            }
        }
        if let Some(seed) = env_seed {
            let s: i64 = seed
                .trim()
                .parse()
                .map_err(|_| PipelineError::Config(format!("{SEED_ENV}=`{seed}` is not an integer")))?;
            table.insert("seed".into(), toml::Value::Integer(s));
        }
        let cwd = std::env::current_dir().unwrap_or_default();
        let mut classifier_overrides = Vec::new();
        for (k, v) in overrides {
            if let Some(rest) = k.strip_prefix("classifier.") {
                classifier_overrides.push((rest.to_string(), v.clone()));
                continue;
            }
            let value = if PATH_KEYS.contains(&k.as_str()) {
                toml::Value::String(cwd.join(v).display().to_string())
            } else {
                toml_value(v)
            };
            set_path(&mut table, k, value)?;
        }
        let pipeline: PipelineConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e| PipelineError::Config(format!("{}: {e}", config_path.display())))?;
        if pipeline.chunk_count == 0 {
            return Err(PipelineError::Config("chunk_count must be positive".into()));
        }

        let ctext = read_text(&pipeline.classifier_config)?;
        let mut ctable: toml::Table = toml::from_str(&ctext)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", pipeline.classifier_config.display())))?;
        for (k, v) in &classifier_overrides {
            set_path(&mut ctable, k, toml_value(v))?;
        }
        let classifier: ClassifierConfig = toml::Value::Table(ctable)
            .try_into()
            .map_err(|e| PipelineError::Config(format!("{}: {e}", pipeline.classifier_config.display())))?;
        classifier.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(Settings { pipeline, classifier })
    }

    /// Hash of every setting that affects artifact content. Paths are left
    /// out; the contents they point at are checksummed separately.
    pub fn config_hash(&self) -> String {
        let p = &self.pipeline;
        let v = serde_json::json!({
            "seed": p.seed,
            "stemmer": p.stemmer,
            "include_titles": p.include_titles,
            "chunk_count": p.chunk_count,
            "uses_enrichment": p.enrichment_dict_path.is_some(),
            "scoring": p.scoring,
            "classifier": self.classifier,
        });
        sha256_hex(v.to_string().as_bytes())
    }

    pub fn scoring_options(&self) -> ScoringOptions {
        ScoringOptions {
            user_vector_mode: self.pipeline.scoring.user_vector_mode,
            weight_lexicon_by_idf: self.pipeline.scoring.weight_lexicon_by_idf,
        }
    }

    pub fn stemmer(&self) -> Stemmer {
        Stemmer::new(self.pipeline.stemmer)
    }

    pub fn curator(&self) -> Result<Curator, PipelineError> {
        let stop = Stopwords::load(&self.pipeline.stopwords_path).map_err(|source| PipelineError::Io {
            path: self.pipeline.stopwords_path.display().to_string(),
            source,
        })?;
        let mut c = Curator::new(stop, self.stemmer()).include_titles(self.pipeline.include_titles);
        if let Some(path) = &self.pipeline.enrichment_dict_path {
            let dict = DictionaryEnrichment::load(path)
                .map_err(|e| PipelineError::stage(Stage::Curate, curation_kind(&e), e))?;
            c = c.with_enrichment(Box::new(dict));
        }
        Ok(c)
    }

    pub fn taxonomy(&self) -> Result<Taxonomy, PipelineError> {
        let t = load_taxonomy(&self.pipeline.taxonomy).map_err(|e| PipelineError::stage(Stage::Score, taxonomy_kind(&e), e))?;
        let violations = t.validate();
        if !violations.is_empty() {
            return Err(PipelineError::stage(
                Stage::Score,
                FailureKind::Domain,
                TaxonomyError::Validation(violations),
            ));
        }
        Ok(t)
    }

    /// Loads and resolves lexicons, phrase list and binding config.
    pub fn bindings(&self, stage: Stage) -> Result<(BindingSet, BTreeMap<String, crate::lexicon::PhraseList>), PipelineError> {
        let wrap = |e: LexiconError| PipelineError::stage(stage, lexicon_kind(&e), e);
        let taxonomy = self.taxonomy()?;
        let lexicons = load_lexicon_dir(&self.pipeline.lexicons_dir).map_err(wrap)?;
        let phrases = load_phrase_list(&self.pipeline.phrase_list).map_err(wrap)?;
        let specs = load_binding_config(&self.pipeline.bindings).map_err(wrap)?;
        let mut lists = BTreeMap::new();
        lists.insert(phrases.name.clone(), phrases);
        let set = BindingSet::resolve(&taxonomy, &specs, &lexicons, &lists, &self.stemmer()).map_err(wrap)?;
        Ok((set, lists))
    }

    /// Columns standardized before training.
    pub fn scale_mask(&self, feature_order: &[String], count_features: &[String]) -> Vec<bool> {
        feature_order
            .iter()
            .map(|f| self.pipeline.scoring.standardize_all || count_features.contains(f))
            .collect()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_digest(path: &Path) -> Result<String, PipelineError> {
    let bytes = std::fs::read(path).map_err(|source| PipelineError::Io { path: path.display().to_string(), source })?;
    Ok(sha256_hex(&bytes))
}

/// Digest over every regular file under `dir`, by sorted relative path.
fn tree_digest(dir: &Path) -> Result<String, PipelineError> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
        for e in std::fs::read_dir(dir)? {
            let p = e?.path();
            if p.is_dir() {
                walk(root, &p, out)?;
            } else {
                out.push(p.strip_prefix(root).unwrap_or(&p).to_path_buf());
            }
        }
        Ok(())
    }
    let mut files = Vec::new();
    walk(dir, dir, &mut files).map_err(|source| PipelineError::Io { path: dir.display().to_string(), source })?;
    files.sort();
    let mut h = Sha256::new();
    for f in files {
        h.update(f.to_string_lossy().as_bytes());
        h.update([0]);
        h.update(file_digest(&dir.join(&f))?.as_bytes());
        h.update([0]);
    }
    Ok(hex::encode(h.finalize()))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), PipelineError> {
    std::fs::write(path, contents).map_err(|source| PipelineError::Io { path: path.display().to_string(), source })
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), PipelineError> {
    let file = std::fs::File::create(path).map_err(|source| PipelineError::Io { path: path.display().to_string(), source })?;
    let mut w = std::io::BufWriter::new(file);
    for it in items {
        let line = serde_json::to_string(it).expect("record serializes");
        writeln!(w, "{line}").map_err(|source| PipelineError::Io { path: path.display().to_string(), source })?;
    }
    w.flush().map_err(|source| PipelineError::Io { path: path.display().to_string(), source })
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let file = std::fs::File::open(path).map_err(|source| PipelineError::Io { path: path.display().to_string(), source })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| PipelineError::Io { path: path.display().to_string(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| PipelineError::Config(format!("{}:{}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

/// Evaluation written by the evaluate stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub mode: crate::classifier::EnsembleMode,
    pub threshold: f64,
    pub labeled_users: usize,
    pub minority_users: usize,
    pub holdout: HoldoutResult,
    pub cross_validation: Option<CvSummary>,
    /// Why cross-validation was skipped or shrunk, if it was.
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutResult {
    pub train_users: usize,
    pub test_users: Vec<String>,
    pub test_probabilities: Vec<f64>,
    pub report: ClassificationReport,
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub folds: usize,
    pub fold_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_f1: [f64; 2],
    pub pooled: ClassificationReport,
    pub pooled_auc: Option<f64>,
}

impl EvaluationReport {
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "mode: {:?}\nlabeled users: {} ({} minority)\nthreshold: {}\n\nheld-out split ({} test users, {} train users)\n",
            self.mode,
            self.labeled_users,
            self.minority_users,
            self.threshold,
            self.holdout.test_users.len(),
            self.holdout.train_users
        );
        s.push_str(&self.holdout.report.to_text());
        s.push_str(&format!("roc auc: {}\n", fmt_opt(self.holdout.auc)));
        if let Some(cv) = &self.cross_validation {
            s.push_str(&format!(
                "\n{}-fold cross-validation\naccuracy: {:.4} ± {:.4}\nmean f1: class 0 {:.4}, class 1 {:.4}\npooled out-of-fold predictions\n",
                cv.folds, cv.mean_accuracy, cv.std_accuracy, cv.mean_f1[0], cv.mean_f1[1]
            ));
            s.push_str(&cv.pooled.to_text());
            s.push_str(&format!("roc auc: {}\n", fmt_opt(cv.pooled_auc)));
        }
        for n in &self.notes {
            s.push_str(&format!("note: {n}\n"));
        }
        s
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined (single class)".to_string(), |x| format!("{x:.4}"))
}

/// Reproducibility record for the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub seed: u64,
    pub config_hash: String,
    pub stages: Vec<Stage>,
    /// Input role to content digest.
    pub inputs: BTreeMap<String, String>,
    /// Artifact file name to content digest, for every artifact present.
    pub artifacts: BTreeMap<String, String>,
    pub timings_ms: BTreeMap<String, u128>,
    pub warnings: Vec<String>,
    /// Digest over config hash, inputs and artifacts; equal across
    /// repeated identical runs even though timings differ.
    pub content_hash: String,
}

/// What a run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub manifest: Manifest,
    pub evaluation: Option<EvaluationReport>,
}

pub struct Pipeline {
    pub settings: Settings,
}

impl Pipeline {
    pub fn new(settings: Settings) -> Self {
        Pipeline { settings }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.settings.pipeline.output_dir.join(name)
    }

    fn require(&self, stage: Stage, name: &str) -> Result<PathBuf, PipelineError> {
        let p = self.out(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(PipelineError::MissingInput { stage, path: p.display().to_string() })
        }
    }

    pub fn run(&self, stages: &[Stage]) -> Result<RunSummary, PipelineError> {
        let out_dir = &self.settings.pipeline.output_dir;
        std::fs::create_dir_all(out_dir).map_err(|source| PipelineError::Io { path: out_dir.display().to_string(), source })?;
        let mut timings = BTreeMap::new();
        let mut warnings = Vec::new();
        let mut inputs = BTreeMap::new();
        let mut evaluation = None;
        let mut ordered = stages.to_vec();
        ordered.sort();
        ordered.dedup();
        for &stage in &ordered {
            let t0 = Instant::now();
            log::info!("stage {stage}");
            match stage {
                Stage::Ingest => self.ingest(&mut warnings, &mut inputs)?,
                Stage::Curate => self.curate(&mut warnings, &mut inputs)?,
                Stage::Score => self.score(&mut inputs)?,
                Stage::Train => self.train(&mut inputs)?,
                Stage::Evaluate => evaluation = Some(self.evaluate(&mut inputs)?),
                Stage::Label => self.label()?,
            }
            timings.insert(stage.as_str().to_string(), t0.elapsed().as_millis());
        }
        let manifest = self.write_manifest(ordered, inputs, timings, warnings)?;
        Ok(RunSummary { manifest, evaluation })
    }

    fn ingest(&self, warnings: &mut Vec<String>, inputs: &mut BTreeMap<String, String>) -> Result<(), PipelineError> {
        let root = &self.settings.pipeline.corpus_root;
        if !root.is_dir() {
            return Err(PipelineError::MissingInput { stage: Stage::Ingest, path: root.display().to_string() });
        }
        let ing = ingest_corpus(root, self.settings.pipeline.chunk_count)
            .map_err(|e| PipelineError::stage(Stage::Ingest, curation_kind(&e), e))?;
        let mut missing = 0usize;
        for w in &ing.warnings {
            match w {
                IngestWarning::MissingChunkFile { .. } => missing += 1,
                other => {
                    log::warn!("{other}");
                    warnings.push(other.to_string());
                }
            }
        }
        if missing > 0 {
            let msg = format!("{missing} user chunk files missing; treated as empty");
            log::warn!("{msg}");
            warnings.push(msg);
        }
        inputs.insert("corpus".into(), tree_digest(root)?);
        write_jsonl(&self.out(CORPUS_FILE), &ing.users)
    }

    fn curate(&self, warnings: &mut Vec<String>, inputs: &mut BTreeMap<String, String>) -> Result<(), PipelineError> {
        let src = self.require(Stage::Curate, CORPUS_FILE)?;
        let corpora: Vec<UserCorpus> = read_jsonl(&src)?;
        let curator = self.settings.curator()?;
        inputs.insert("stopwords".into(), file_digest(&self.settings.pipeline.stopwords_path)?);
        if let Some(p) = &self.settings.pipeline.enrichment_dict_path {
            inputs.insert("enrichment".into(), file_digest(p)?);
        }
        let records = curator.curate_all(&corpora);
        let empty = records.iter().filter(|r| r.stemmed_tokens.is_empty()).count();
        if empty > 0 {
            warnings.push(format!("{empty} users have no usable text"));
        }
        write_jsonl(&self.out(CURATED_FILE), &records)
    }

    fn record_lexicon_inputs(&self, inputs: &mut BTreeMap<String, String>) -> Result<(), PipelineError> {
        let p = &self.settings.pipeline;
        inputs.insert("taxonomy".into(), file_digest(&p.taxonomy)?);
        inputs.insert("bindings".into(), file_digest(&p.bindings)?);
        inputs.insert("lexicons".into(), tree_digest(&p.lexicons_dir)?);
        inputs.insert("phrase_list".into(), file_digest(&p.phrase_list)?);
        inputs.insert("stopwords".into(), file_digest(&p.stopwords_path)?);
        Ok(())
    }

    fn score(&self, inputs: &mut BTreeMap<String, String>) -> Result<(), PipelineError> {
        let src = self.require(Stage::Score, CURATED_FILE)?;
        let records: Vec<CuratedRecord> = read_jsonl(&src)?;
        self.record_lexicon_inputs(inputs)?;
        let curator = self.settings.curator()?;
        let users: Vec<UserDocs> = records.iter().map(|r| UserDocs::from_record(r, &curator)).collect();
        let wrap = |e: ScoringError| PipelineError::stage(Stage::Score, scoring_kind(&e), e);
        let model = fit_tfidf(&chunk_documents(&users)).map_err(wrap)?;
        write_file(&self.out(TFIDF_FILE), model.to_json().as_bytes())?;
        let (bindings, lists) = self.settings.bindings(Stage::Score)?;
        let matrix = compute_scores(
            &users,
            &bindings,
            &lists,
            &model,
            &bindings.feature_names(),
            self.settings.scoring_options(),
        )
        .map_err(wrap)?;
        write_file(&self.out(SCORES_RAW_FILE), matrix.to_csv_string().as_bytes())
    }

    fn load_scores(&self, stage: Stage) -> Result<ScoreMatrix, PipelineError> {
        let src = self.require(stage, SCORES_RAW_FILE)?;
        let file = std::fs::File::open(&src).map_err(|source| PipelineError::Io { path: src.display().to_string(), source })?;
        ScoreMatrix::read_csv(file).map_err(|e| PipelineError::stage(stage, scoring_kind(&e), e))
    }

    fn count_features(&self, stage: Stage) -> Result<Vec<String>, PipelineError> {
        let specs = load_binding_config(&self.settings.pipeline.bindings)
            .map_err(|e| PipelineError::stage(stage, lexicon_kind(&e), e))?;
        Ok(specs.iter().filter(|s| s.phrases.is_some()).map(|s| s.instance.to_string()).collect())
    }

    fn train(&self, inputs: &mut BTreeMap<String, String>) -> Result<(), PipelineError> {
        let matrix = self.load_scores(Stage::Train)?;
        inputs.insert("classifier_config".into(), file_digest(&self.settings.pipeline.classifier_config)?);
        let counts = self.count_features(Stage::Train)?;
        let data = LabeledFeatures::from_matrix(&matrix);
        let mask = self.settings.scale_mask(&matrix.feature_order, &counts);
        let model = fit_model(&data, &self.settings.classifier, &mask, self.settings.pipeline.seed)
            .map_err(|e| PipelineError::stage(Stage::Train, classifier_kind(&e), e))?;
        let std = model.standardization.clone().expect("fit_model sets statistics");
        let standardized = ScoreMatrix {
            feature_order: matrix.feature_order.clone(),
            rows: matrix
                .rows
                .iter()
                .map(|r| crate::scoring::ScoreRow { values: std.transform_row(&r.values), ..r.clone() })
                .collect(),
            standardization: Some(std),
        };
        write_file(&self.out(SCORES_STD_FILE), standardized.to_csv_string().as_bytes())?;
        write_file(&self.out(MODEL_FILE), model.to_json().as_bytes())
    }

    fn evaluate(&self, inputs: &mut BTreeMap<String, String>) -> Result<EvaluationReport, PipelineError> {
        let matrix = self.load_scores(Stage::Evaluate)?;
        inputs.insert("classifier_config".into(), file_digest(&self.settings.pipeline.classifier_config)?);
        let counts = self.count_features(Stage::Evaluate)?;
        let data = LabeledFeatures::from_matrix(&matrix);
        let mask = self.settings.scale_mask(&matrix.feature_order, &counts);
        let report = evaluate_matrix(&data, &self.settings.classifier, &mask, self.settings.pipeline.seed)?;
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        write_file(&self.out(REPORT_FILE), json.as_bytes())?;
        write_file(&self.out(REPORT_TEXT_FILE), report.to_text().as_bytes())?;
        Ok(report)
    }

    fn label(&self) -> Result<(), PipelineError> {
        let matrix = self.load_scores(Stage::Label)?;
        let model_path = self.require(Stage::Label, MODEL_FILE)?;
        let model = EnsembleModel::from_json(&read_text(&model_path)?)
            .map_err(|e| PipelineError::stage(Stage::Label, classifier_kind(&e), e))?;
        let labels = label_corpus(&model, &matrix).map_err(|e| PipelineError::stage(Stage::Label, classifier_kind(&e), e))?;
        write_file(&self.out(LABELS_FILE), labels_to_csv(&labels).as_bytes())
    }

    fn write_manifest(
        &self,
        stages: Vec<Stage>,
        mut inputs: BTreeMap<String, String>,
        timings_ms: BTreeMap<String, u128>,
        warnings: Vec<String>,
    ) -> Result<Manifest, PipelineError> {
        let previous: Option<Manifest> = std::fs::read_to_string(self.out(MANIFEST_FILE))
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok());
        if let Some(prev) = &previous {
            for (k, v) in &prev.inputs {
                inputs.entry(k.clone()).or_insert_with(|| v.clone());
            }
        }
        let mut artifacts = BTreeMap::new();
        for name in ARTIFACTS {
            let p = self.out(name);
            if p.is_file() {
                artifacts.insert(name.to_string(), file_digest(&p)?);
            }
        }
        let config_hash = self.settings.config_hash();
        let mut h = Sha256::new();
        h.update(config_hash.as_bytes());
        for (k, v) in inputs.iter().chain(artifacts.iter()) {
            h.update(k.as_bytes());
            h.update([0]);
            h.update(v.as_bytes());
            h.update([0]);
        }
        let manifest = Manifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.settings.pipeline.seed,
            config_hash,
            stages,
            inputs,
            artifacts,
            timings_ms,
            warnings,
            content_hash: hex::encode(h.finalize()),
        };
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        write_file(&self.out(MANIFEST_FILE), json.as_bytes())?;
        Ok(manifest)
    }
}

/// Held-out split evaluation plus stratified cross-validation on the
/// labeled rows of a raw score matrix. Models are refit on the training
/// part of every split.
pub fn evaluate_matrix(
    data: &LabeledFeatures,
    cfg: &ClassifierConfig,
    mask: &[bool],
    seed: u64,
) -> Result<EvaluationReport, PipelineError> {
    let wrap = |e: ClassifierError| PipelineError::stage(Stage::Evaluate, classifier_kind(&e), e);
    let (minority, _) = crate::classifier::class_counts(&data.y);
    let mut notes = Vec::new();
    let (train, test) = stratified_split(&data.y, cfg.test_fraction, seed);
    let model = fit_model(&data.subset(&train), cfg, mask, seed).map_err(wrap)?;
    let probs: Vec<f64> = test.iter().map(|&i| model.proba_raw(&data.x[i])).collect();
    let y_true: Vec<u8> = test.iter().map(|&i| data.y[i]).collect();
    let y_pred: Vec<u8> = probs.iter().map(|&p| u8::from(p >= cfg.threshold)).collect();
    let holdout = HoldoutResult {
        train_users: train.len(),
        test_users: test.iter().map(|&i| data.user_ids[i].clone()).collect(),
        report: report(&y_true, &y_pred).map_err(wrap)?,
        auc: roc_auc(&y_true, &probs),
        test_probabilities: probs,
    };

    let k = cfg.cv_folds.min(minority);
    let cross_validation = if k >= 2 {
        if k < cfg.cv_folds {
            notes.push(format!("cross-validation reduced from {} to {k} folds (minority class has {minority} users)", cfg.cv_folds));
        }
        let cv = cross_validate(data, cfg, mask, k, seed).map_err(wrap)?;
        Some(CvSummary {
            folds: k,
            fold_accuracy: cv.folds.iter().map(|f| f.report.accuracy).collect(),
            mean_accuracy: cv.mean_accuracy,
            std_accuracy: cv.std_accuracy,
            mean_f1: cv.mean_f1,
            pooled: cv.pooled,
            pooled_auc: cv.pooled_auc,
        })
    } else {
        notes.push(format!("cross-validation skipped: minority class has {minority} users"));
        None
    };
    Ok(EvaluationReport {
        mode: cfg.mode,
        threshold: cfg.threshold,
        labeled_users: data.len(),
        minority_users: minority,
        holdout,
        cross_validation,
        notes,
    })
}

impl Settings {
    /// Raw (unstemmed) words of every bound lexicon category, minus
    /// stopwords, and the phrases of the phrase list. The synthetic corpus
    /// generator draws its signal words from these.
    pub fn signal_vocabulary(&self) -> Result<(Vec<String>, Vec<String>), PipelineError> {
        let wrap = |e: LexiconError| PipelineError::Config(e.to_string());
        let lexicons = load_lexicon_dir(&self.pipeline.lexicons_dir).map_err(wrap)?;
        let specs = load_binding_config(&self.pipeline.bindings).map_err(wrap)?;
        let stop = Stopwords::load(&self.pipeline.stopwords_path).map_err(|source| PipelineError::Io {
            path: self.pipeline.stopwords_path.display().to_string(),
            source,
        })?;
        let mut words = std::collections::BTreeSet::new();
        for spec in &specs {
            for sel in &spec.selections {
                let lex = lexicons
                    .get(&sel.source)
                    .ok_or_else(|| wrap(LexiconError::UnknownSource(sel.source.clone())))?;
                for w in lex.category(&sel.category).unwrap_or_default() {
                    let n = crate::text::normalize_text(w);
                    if !n.is_empty() && !n.split(' ').any(|t| stop.contains(t)) {
                        words.insert(n);
                    }
                }
            }
        }
        let phrases = load_phrase_list(&self.pipeline.phrase_list).map_err(wrap)?.phrases;
        Ok((words.into_iter().collect(), phrases))
    }
}
