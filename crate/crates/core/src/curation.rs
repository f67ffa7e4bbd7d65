//! Corpus ingestion and curation: raw chunked XML posts in, cleaned and
//! stemmed per-user records out.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use chrono::NaiveDateTime;
use quick_xml::events::Event;
use quick_xml::Reader;
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{normalize_text, normalize_words, Stemmer, Stopwords};

/// Number of chunks in the eRisk layout.
pub const DEFAULT_CHUNKS: usize = 10;

pub const LABELS_FILE: &str = "golden_truth.txt";

static CHUNK_DIR: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^chunk[ _-]?(\d+)$").expect("chunk regex"));

#[derive(Debug, Error)]
pub enum CurationError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed XML in {path} at byte {offset}: {message}")]
    MalformedXml {
        path: String,
        offset: u64,
        message: String,
    },
    #[error("{path}:{line}: malformed label line `{text}`")]
    LabelLine { path: String, line: usize, text: String },
    #[error("{0} contains no chunk directories")]
    NoChunks(String),
    #[error("malformed enrichment dictionary: {0}")]
    Enrichment(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub title: String,
    pub date: Option<NaiveDateTime>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserCorpus {
    pub user_id: String,
    /// 1 = depressed, 0 = not depressed.
    pub label: Option<u8>,
    pub chunks: Vec<Vec<Post>>,
}

impl UserCorpus {
    pub fn post_count(&self) -> usize {
        self.chunks.iter().map(Vec::len).sum()
    }
}

/// Non-fatal problems found while ingesting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IngestWarning {
    MissingChunkFile { user_id: String, chunk: usize },
    UnlabeledUser(String),
    LabelWithoutUser(String),
    NoLabelsFile,
}

impl fmt::Display for IngestWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IngestWarning::MissingChunkFile { user_id, chunk } => {
                write!(f, "user {user_id} has no file in chunk {chunk}")
            }
            IngestWarning::UnlabeledUser(u) => write!(f, "user {u} is missing from the labels file"),
            IngestWarning::LabelWithoutUser(u) => write!(f, "label for {u} has no corpus files"),
            IngestWarning::NoLabelsFile => write!(f, "no {LABELS_FILE}; all labels left empty"),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Ingested {
    /// Sorted by user id.
    pub users: Vec<UserCorpus>,
    pub warnings: Vec<IngestWarning>,
}

/// Parses one eRisk individual file. Returns the `<ID>` (if any) and posts.
pub fn parse_individual_xml(xml: &str, origin: &str) -> Result<(Option<String>, Vec<Post>), CurationError> {
    #[derive(Clone, Copy, PartialEq)]
    enum Field {
        Id,
        Title,
        Date,
        Text,
        Other,
    }
    let mut reader = Reader::from_str(xml);
    let mut id: Option<String> = None;
    let mut posts = Vec::new();
    let mut in_writing = false;
    let mut field: Option<Field> = None;
    let mut title = String::new();
    let mut date = String::new();
    let mut text = String::new();

    let malformed = |reader: &Reader<&[u8]>, message: String| CurationError::MalformedXml {
        path: origin.to_string(),
        offset: reader.error_position(),
        message,
    };

    loop {
        let event = reader
            .read_event()
            .map_err(|e| malformed(&reader, e.to_string()))?;
        match event {
            Event::Start(e) => {
                let name = e.name();
                let name = name.as_ref();
                match name {
                    b"WRITING" => {
                        in_writing = true;
                        title.clear();
                        date.clear();
                        text.clear();
                    }
                    b"ID" if !in_writing => field = Some(Field::Id),
                    b"TITLE" if in_writing => field = Some(Field::Title),
                    b"DATE" if in_writing => field = Some(Field::Date),
                    b"TEXT" if in_writing => field = Some(Field::Text),
                    _ => field = Some(Field::Other),
                }
            }
            Event::End(e) => {
                if e.name().as_ref() == b"WRITING" {
                    in_writing = false;
                    posts.push(Post {
                        title: title.trim().to_string(),
                        date: parse_date(&date),
                        text: text.trim().to_string(),
                    });
                }
                field = None;
            }
            Event::Text(t) => {
                let chunk = match t.unescape() {
                    Ok(s) => s.into_owned(),
                    // HTML entities such as &nbsp; are common in scraped posts.
                    Err(_) => String::from_utf8_lossy(t.as_ref()).into_owned(),
                };
                append_field(field, &chunk, &mut id, &mut title, &mut date, &mut text);
            }
            Event::CData(t) => {
                let chunk = String::from_utf8_lossy(t.as_ref()).into_owned();
                append_field(field, &chunk, &mut id, &mut title, &mut date, &mut text);
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if in_writing {
        return Err(malformed(&reader, "unterminated WRITING element".into()));
    }

    fn append_field(
        field: Option<Field>,
        chunk: &str,
        id: &mut Option<String>,
        title: &mut String,
        date: &mut String,
        text: &mut String,
    ) {
        match field {
            Some(Field::Id) => id.get_or_insert_with(String::new).push_str(chunk.trim()),
            Some(Field::Title) => title.push_str(chunk),
            Some(Field::Date) => date.push_str(chunk),
            Some(Field::Text) => text.push_str(chunk),
            _ => {}
        }
    }
    Ok((id.filter(|s| !s.is_empty()), posts))
}

fn parse_date(raw: &str) -> Option<NaiveDateTime> {
    let s = raw.trim();
    if s.is_empty() {
        return None;
    }
    const FORMATS: [&str; 4] = ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y/%m/%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S%.f"];
    FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .or_else(|| {
            chrono::DateTime::parse_from_rfc3339(s)
                .ok()
                .map(|d| d.naive_utc())
        })
        .or_else(|| {
            chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d")
                .or_else(|_| chrono::NaiveDate::parse_from_str(s, "%Y/%m/%d"))
                .ok()
                .and_then(|d| d.and_hms_opt(0, 0, 0))
        })
}

/// Parses `user_id label` lines (whitespace separated).
pub fn parse_labels(contents: &str, origin: &str) -> Result<BTreeMap<String, u8>, CurationError> {
    let mut out = BTreeMap::new();
    for (i, line) in contents.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let mut parts = t.split_whitespace();
        let bad = || CurationError::LabelLine {
            path: origin.to_string(),
            line: i + 1,
            text: t.to_string(),
        };
        let (user, label) = match (parts.next(), parts.next(), parts.next()) {
            (Some(u), Some(l), None) => (u, l),
            _ => return Err(bad()),
        };
        let label = match label {
            "0" => 0,
            "1" => 1,
            _ => return Err(bad()),
        };
        out.insert(user.to_string(), label);
    }
    Ok(out)
}

fn chunk_dirs(root: &Path) -> Result<Vec<(usize, PathBuf)>, CurationError> {
    let io = |source| CurationError::Io {
        path: root.display().to_string(),
        source,
    };
    let mut dirs = Vec::new();
    for entry in std::fs::read_dir(root).map_err(io)? {
        let entry = entry.map_err(io)?;
        if !entry.path().is_dir() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(c) = CHUNK_DIR.captures(&name) {
            if let Ok(n) = c[1].parse::<usize>() {
                if n >= 1 {
                    dirs.push((n, entry.path()));
                }
            }
        }
    }
    dirs.sort();
    Ok(dirs)
}

/// Reads an eRisk-style directory: `chunk1..chunkN/<user>.xml` plus an
/// optional `golden_truth.txt`. Users missing from a chunk get an empty post
/// list for it.
pub fn ingest_corpus(root: &Path, chunk_count: usize) -> Result<Ingested, CurationError> {
    let dirs = chunk_dirs(root)?;
    if dirs.is_empty() {
        return Err(CurationError::NoChunks(root.display().to_string()));
    }
    let chunk_count = chunk_count.max(dirs.iter().map(|(n, _)| *n).max().unwrap_or(0));

    let mut files: Vec<(usize, PathBuf)> = Vec::new();
    for (n, dir) in &dirs {
        let io = |source| CurationError::Io {
            path: dir.display().to_string(),
            source,
        };
        for entry in std::fs::read_dir(dir).map_err(io)? {
            let p = entry.map_err(io)?.path();
            if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("xml")) {
                files.push((*n, p));
            }
        }
    }
    files.sort();

    let parsed: Vec<(usize, String, Vec<Post>)> = files
        .par_iter()
        .map(|(n, p)| {
            let bytes = std::fs::read(p).map_err(|source| CurationError::Io {
                path: p.display().to_string(),
                source,
            })?;
            let xml = String::from_utf8_lossy(&bytes);
            let (id, posts) = parse_individual_xml(&xml, &p.display().to_string())?;
            let user = id.unwrap_or_else(|| user_from_file_name(p, *n));
            Ok((*n, user, posts))
        })
        .collect::<Result<_, CurationError>>()?;

    let mut by_user: BTreeMap<String, Vec<Vec<Post>>> = BTreeMap::new();
    let mut present: HashMap<String, BTreeSet<usize>> = HashMap::new();
    for (n, user, posts) in parsed {
        let chunks = by_user
            .entry(user.clone())
            .or_insert_with(|| vec![Vec::new(); chunk_count]);
        chunks[n - 1].extend(posts);
        present.entry(user).or_default().insert(n);
    }

    let mut warnings = Vec::new();
    for (user, have) in present.iter().collect::<BTreeMap<_, _>>() {
        for c in 1..=chunk_count {
            if !have.contains(&c) {
                warnings.push(IngestWarning::MissingChunkFile {
                    user_id: user.clone(),
                    chunk: c,
                });
            }
        }
    }

    let labels_path = root.join(LABELS_FILE);
    let labels = if labels_path.is_file() {
        let text = std::fs::read_to_string(&labels_path).map_err(|source| CurationError::Io {
            path: labels_path.display().to_string(),
            source,
        })?;
        Some(parse_labels(&text, &labels_path.display().to_string())?)
    } else {
        warnings.push(IngestWarning::NoLabelsFile);
        None
    };

    let mut users = Vec::with_capacity(by_user.len());
    for (user_id, chunks) in by_user {
        let label = match &labels {
            Some(l) => {
                let v = l.get(&user_id).copied();
                if v.is_none() {
                    warnings.push(IngestWarning::UnlabeledUser(user_id.clone()));
                }
                v
            }
            None => None,
        };
        users.push(UserCorpus { user_id, label, chunks });
    }
    if let Some(l) = &labels {
        for user in l.keys() {
            if users.binary_search_by(|u| u.user_id.as_str().cmp(user)).is_err() {
                warnings.push(IngestWarning::LabelWithoutUser(user.clone()));
            }
        }
    }
    Ok(Ingested { users, warnings })
}

/// `subject42_3.xml` in chunk 3 is user `subject42`; otherwise the stem.
fn user_from_file_name(p: &Path, chunk: usize) -> String {
    let stem = p
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    stem.strip_suffix(&format!("_{chunk}"))
        .map(str::to_string)
        .unwrap_or(stem)
}

/// Lowercases and strips URLs, markup, punctuation, digits and stopwords,
/// leaving single-space separated words.
pub fn clean_text(raw: &str, stopwords: &Stopwords) -> String {
    normalize_words(raw)
        .into_iter()
        .filter(|w| !stopwords.contains(w))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Whitespace tokenization followed by stemming.
pub fn tokenize_and_stem(cleaned: &str, stemmer: &Stemmer) -> Vec<String> {
    cleaned
        .split_whitespace()
        .map(|t| stemmer.stem(t))
        .filter(|s| !s.is_empty())
        .collect()
}

/// Synonym / acronym expansion.
pub trait EnrichmentProvider: Send + Sync {
    /// Expansion terms for `term`; empty when the term is unknown.
    fn expand(&self, term: &str) -> Vec<String>;
}

/// Adds nothing.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoEnrichment;

impl EnrichmentProvider for NoEnrichment {
    fn expand(&self, _term: &str) -> Vec<String> {
        Vec::new()
    }
}

/// Expansion table read from a JSON object of `term -> [terms]`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DictionaryEnrichment {
    table: BTreeMap<String, Vec<String>>,
}

impl DictionaryEnrichment {
    pub fn new(table: BTreeMap<String, Vec<String>>) -> Self {
        let table = table
            .into_iter()
            .map(|(k, v)| (normalize_text(&k), v))
            .collect();
        DictionaryEnrichment { table }
    }

    pub fn from_json(json: &str) -> Result<Self, CurationError> {
        Ok(Self::new(serde_json::from_str(json)?))
    }

    pub fn load(path: &Path) -> Result<Self, CurationError> {
        let text = std::fs::read_to_string(path).map_err(|source| CurationError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }
}

impl EnrichmentProvider for DictionaryEnrichment {
    fn expand(&self, term: &str) -> Vec<String> {
        self.table.get(term).cloned().unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuratedRecord {
    pub user_id: String,
    pub label: Option<u8>,
    /// Cleaned concatenation of every post.
    pub cleaned_full_text: String,
    /// Normalized concatenation with stopwords kept; phrase lists are
    /// matched against this.
    pub phrase_text: String,
    pub stemmed_tokens: Vec<String>,
    /// One cleaned document per chunk.
    pub chunk_docs: Vec<String>,
}

/// Bundles everything curation needs.
pub struct Curator {
    stopwords: Stopwords,
    stemmed_stopwords: BTreeSet<String>,
    stemmer: Stemmer,
    enrichment: Box<dyn EnrichmentProvider>,
    include_titles: bool,
}

impl fmt::Debug for Curator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Curator")
            .field("stopwords", &self.stopwords.len())
            .field("stemmer", &self.stemmer)
            .field("include_titles", &self.include_titles)
            .finish()
    }
}

impl Curator {
    pub fn new(stopwords: Stopwords, stemmer: Stemmer) -> Self {
        let stemmed_stopwords = stopwords.stemmed(&stemmer);
        Curator {
            stopwords,
            stemmed_stopwords,
            stemmer,
            enrichment: Box::new(NoEnrichment),
            include_titles: true,
        }
    }

    pub fn with_enrichment(mut self, enrichment: Box<dyn EnrichmentProvider>) -> Self {
        self.enrichment = enrichment;
        self
    }

    pub fn include_titles(mut self, yes: bool) -> Self {
        self.include_titles = yes;
        self
    }

    pub fn stopwords(&self) -> &Stopwords {
        &self.stopwords
    }

    pub fn stemmer(&self) -> &Stemmer {
        &self.stemmer
    }

    /// Stems of a cleaned document, minus anything that stems to a stemmed
    /// stopword.
    pub fn stems(&self, cleaned: &str) -> Vec<String> {
        let mut out = tokenize_and_stem(cleaned, &self.stemmer);
        out.retain(|s| !self.stemmed_stopwords.contains(s));
        out
    }

    /// Per-chunk stem lists of a record, i.e. its TF-IDF documents.
    pub fn chunk_stems(&self, record: &CuratedRecord) -> Vec<Vec<String>> {
        record.chunk_docs.iter().map(|d| self.stems(d)).collect()
    }

    fn post_text(&self, post: &Post) -> String {
        if self.include_titles && !post.title.is_empty() {
            format!("{}\n{}", post.title, post.text)
        } else {
            post.text.clone()
        }
    }

    pub fn curate(&self, corpus: &UserCorpus) -> CuratedRecord {
        let chunk_raw: Vec<String> = corpus
            .chunks
            .iter()
            .map(|posts| {
                posts
                    .iter()
                    .map(|p| self.post_text(p))
                    .collect::<Vec<_>>()
                    .join("\n")
            })
            .collect();
        let full_raw = chunk_raw.join("\n");
        let chunk_docs: Vec<String> = chunk_raw
            .iter()
            .map(|c| clean_text(c, &self.stopwords))
            .collect();
        let cleaned_full_text = clean_text(&full_raw, &self.stopwords);
        let phrase_text = normalize_text(&full_raw);

        let mut stemmed_tokens = self.stems(&cleaned_full_text);
        let mut extra = Vec::new();
        for token in cleaned_full_text.split_whitespace() {
            for expansion in self.enrichment.expand(token) {
                let cleaned = clean_text(&expansion, &self.stopwords);
                extra.extend(self.stems(&cleaned));
            }
        }
        stemmed_tokens.extend(extra);

        if cleaned_full_text.is_empty() {
            log::warn!("user {} has no usable text", corpus.user_id);
        }
        CuratedRecord {
            user_id: corpus.user_id.clone(),
            label: corpus.label,
            cleaned_full_text,
            phrase_text,
            stemmed_tokens,
            chunk_docs,
        }
    }

    /// Curates every user in parallel; output order follows input order.
    pub fn curate_all(&self, corpora: &[UserCorpus]) -> Vec<CuratedRecord> {
        corpora.par_iter().map(|c| self.curate(c)).collect()
    }
}

/// Free-function form of [`Curator::curate`].
pub fn curate(
    corpus: &UserCorpus,
    stopwords: &Stopwords,
    stemmer: &Stemmer,
    enrichment: Box<dyn EnrichmentProvider>,
) -> CuratedRecord {
    Curator::new(stopwords.clone(), stemmer.clone())
        .with_enrichment(enrichment)
        .curate(corpus)
}
