//! Lexical sources and their binding to taxonomy instances.
//!
//! Lexicons are TSV files of `word<TAB>category` pairs. A line with an empty
//! word field only declares its category. Once loaded, a lexicon is
//! preprocessed (symbols stripped, words stemmed) and its categories are
//! merged into per-instance stem sets, one [`InstanceBinding`] per
//! taxonomy instance.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taxonomy::{NodeId, NodeKind, Taxonomy};
use crate::text::{normalize_text, Stemmer, StemmerKind};

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("category `{category}` in {source_name} has no words")]
    EmptyCategory {
        source_name: String,
        category: String,
    },
    #[error("phrase list {0} contains no phrases")]
    EmptyFile(String),
    #[error("`{0}` is not an instance or sub-instance of the taxonomy")]
    UnknownInstance(NodeId),
    #[error("lexicon `{source_name}` has no category `{category}`")]
    UnknownCategory {
        source_name: String,
        category: String,
    },
    #[error("no lexicon named `{0}` is loaded")]
    UnknownSource(String),
    #[error("no phrase list named `{0}` is loaded")]
    UnknownPhraseList(String),
    #[error("lexicon `{0}` must be preprocessed before binding")]
    NotPreprocessed(String),
    #[error("binding for `{0}` resolves to an empty stem set")]
    EmptyBinding(NodeId),
    #[error("binding entry for `{0}` needs either selections or a phrase list, not both")]
    AmbiguousBinding(NodeId),
    #[error("instance `{0}` is bound more than once")]
    DuplicateBinding(NodeId),
    #[error("malformed binding config: {0}")]
    Config(#[from] serde_json::Error),
}

/// A named collection of word categories.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    pub source_name: String,
    /// Category name to words, in first-seen order without duplicates.
    pub categories: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub license_note: String,
    /// Set once the words have been stemmed.
    #[serde(default)]
    pub stemmed_with: Option<StemmerKind>,
}

impl Lexicon {
    /// Parses lexicon TSV. `origin` is only used in error messages.
    pub fn parse_tsv(contents: &str, source_name: &str, origin: &str) -> Result<Self, LexiconError> {
        let mut categories: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut license_note = String::new();
        for (idx, raw) in contents.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            if let Some(comment) = line.trim_start().strip_prefix('#') {
                if license_note.is_empty() {
                    license_note = comment.trim().to_string();
                }
                continue;
            }
            let mut fields = line.split('\t');
            let (word, category) = match (fields.next(), fields.next(), fields.next()) {
                (Some(w), Some(c), None) => (w.trim(), c.trim()),
                _ => {
                    return Err(LexiconError::Parse {
                        path: origin.to_string(),
                        line: line_no,
                        message: "expected `word<TAB>category`".into(),
                    })
                }
            };
            if category.is_empty() {
                return Err(LexiconError::Parse {
                    path: origin.to_string(),
                    line: line_no,
                    message: "empty category".into(),
                });
            }
            let words = categories.entry(category.to_string()).or_default();
            let word = normalize_word(word);
            if !word.is_empty() && !words.contains(&word) {
                words.push(word);
            }
        }
        if let Some((category, _)) = categories.iter().find(|(_, w)| w.is_empty()) {
            return Err(LexiconError::EmptyCategory {
                source_name: source_name.to_string(),
                category: category.clone(),
            });
        }
        Ok(Lexicon {
            source_name: source_name.to_string(),
            categories,
            license_note,
            stemmed_with: None,
        })
    }

    pub fn category(&self, name: &str) -> Option<&[String]> {
        self.categories.get(name).map(Vec::as_slice)
    }

    pub fn word_count(&self) -> usize {
        self.categories.values().map(Vec::len).sum()
    }
}

/// Lowercase, whitespace-collapsed surface form. Symbols are kept at this
/// stage; preprocessing strips them.
fn normalize_word(word: &str) -> String {
    word.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Loads a lexicon TSV file.
pub fn load_lexicon(path: &Path, source_name: &str) -> Result<Lexicon, LexiconError> {
    let text = std::fs::read_to_string(path).map_err(|source| LexiconError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Lexicon::parse_tsv(&text, source_name, &path.display().to_string())
}

/// Loads every `*.tsv` file in `dir`, naming each lexicon after its file stem.
pub fn load_lexicon_dir(dir: &Path) -> Result<BTreeMap<String, Lexicon>, LexiconError> {
    let io_err = |source| LexiconError::Io {
        path: dir.display().to_string(),
        source,
    };
    let mut out = BTreeMap::new();
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(io_err)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "tsv"))
        .collect();
    paths.sort();
    for p in paths {
        let name = p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let lex = load_lexicon(&p, &name)?;
        out.insert(name, lex);
    }
    Ok(out)
}

/// Strips symbols from every word, stems it, and drops words that end up
/// empty. Categories are deduplicated after stemming.
///
/// Words are stemmed at most once: a lexicon already stemmed with the same
/// stemmer is only re-cleaned, so the operation is idempotent.
pub fn preprocess_lexicon(lex: &Lexicon, stemmer: &Stemmer) -> Lexicon {
    let already = lex.stemmed_with == Some(stemmer.kind());
    let categories = lex
        .categories
        .iter()
        .map(|(cat, words)| {
            let mut seen = BTreeSet::new();
            let mut out = Vec::new();
            for w in words {
                let cleaned: String = normalize_text(w).split(' ').collect();
                if cleaned.is_empty() {
                    continue;
                }
                let stem = if already { cleaned } else { stemmer.stem(&cleaned) };
                if !stem.is_empty() && seen.insert(stem.clone()) {
                    out.push(stem);
                }
            }
            (cat.clone(), out)
        })
        .collect();
    Lexicon {
        source_name: lex.source_name.clone(),
        categories,
        license_note: lex.license_note.clone(),
        stemmed_with: Some(stemmer.kind()),
    }
}

/// The stem set an instance is scored against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceBinding {
    pub instance: NodeId,
    /// `(source_name, category)` pairs the stems were drawn from.
    pub sources: Vec<(String, String)>,
    pub merged_stems: BTreeSet<String>,
}

/// Merges the chosen categories of preprocessed lexicons into the stem set
/// for `instance`.
pub fn bind_instance(
    taxonomy: &Taxonomy,
    instance: &NodeId,
    selections: &[(&Lexicon, &str)],
) -> Result<InstanceBinding, LexiconError> {
    match taxonomy.node(instance) {
        Some(n) if matches!(n.kind, NodeKind::Instance | NodeKind::SubInstance) => {}
        _ => return Err(LexiconError::UnknownInstance(instance.clone())),
    }
    let mut merged = BTreeSet::new();
    let mut sources = Vec::with_capacity(selections.len());
    for (lex, category) in selections {
        if lex.stemmed_with.is_none() {
            return Err(LexiconError::NotPreprocessed(lex.source_name.clone()));
        }
        let words = lex.category(category).ok_or_else(|| LexiconError::UnknownCategory {
            source_name: lex.source_name.clone(),
            category: category.to_string(),
        })?;
        merged.extend(words.iter().cloned());
        sources.push((lex.source_name.clone(), category.to_string()));
    }
    if merged.is_empty() {
        return Err(LexiconError::EmptyBinding(instance.clone()));
    }
    Ok(InstanceBinding {
        instance: instance.clone(),
        sources,
        merged_stems: merged,
    })
}

/// Ordered multi-word phrases, normalized like text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhraseList {
    pub name: String,
    pub phrases: Vec<String>,
}

impl PhraseList {
    /// One phrase per line; blank lines and `#` comments are skipped.
    /// Duplicates after normalization keep their first position.
    pub fn parse(contents: &str, name: &str) -> Result<Self, LexiconError> {
        let mut phrases: Vec<String> = Vec::new();
        for line in contents.lines() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let p = normalize_text(t);
            if !p.is_empty() && !phrases.contains(&p) {
                phrases.push(p);
            }
        }
        if phrases.is_empty() {
            return Err(LexiconError::EmptyFile(name.to_string()));
        }
        Ok(PhraseList {
            name: name.to_string(),
            phrases,
        })
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }
}

/// Loads a phrase list; the list is named after the file stem.
pub fn load_phrase_list(path: &Path) -> Result<PhraseList, LexiconError> {
    let bytes = std::fs::read(path).map_err(|source| LexiconError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let text = String::from_utf8(bytes).map_err(|e| LexiconError::Parse {
        path: path.display().to_string(),
        line: 1 + e.as_bytes()[..e.utf8_error().valid_up_to()]
            .iter()
            .filter(|&&b| b == b'\n')
            .count(),
        message: "invalid UTF-8".into(),
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    PhraseList::parse(&text, &name)
}

/// One entry of the binding config file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BindingSpec {
    pub instance: NodeId,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub selections: Vec<Selection>,
    /// Name of a phrase list; the instance is scored by phrase counting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phrases: Option<String>,
    #[serde(default)]
    pub attested: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub source: String,
    pub category: String,
}

pub fn parse_binding_config(json: &str) -> Result<Vec<BindingSpec>, LexiconError> {
    Ok(serde_json::from_str(json)?)
}

pub fn load_binding_config(path: &Path) -> Result<Vec<BindingSpec>, LexiconError> {
    let text = std::fs::read_to_string(path).map_err(|source| LexiconError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_binding_config(&text)
}

/// How one feature is scored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Feature {
    Lexical(InstanceBinding),
    Phrases { instance: NodeId, list: String },
}

impl Feature {
    pub fn instance(&self) -> &NodeId {
        match self {
            Feature::Lexical(b) => &b.instance,
            Feature::Phrases { instance, .. } => instance,
        }
    }
}

/// All resolved features in config order. The order fixes the score
/// matrix columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BindingSet {
    pub features: Vec<Feature>,
}

impl BindingSet {
    /// Resolves a binding config against loaded (raw or preprocessed)
    /// lexicons and phrase lists.
    pub fn resolve(
        taxonomy: &Taxonomy,
        specs: &[BindingSpec],
        lexicons: &BTreeMap<String, Lexicon>,
        phrase_lists: &BTreeMap<String, PhraseList>,
        stemmer: &Stemmer,
    ) -> Result<Self, LexiconError> {
        let prepared: BTreeMap<&str, Lexicon> = lexicons
            .iter()
            .map(|(k, v)| (k.as_str(), preprocess_lexicon(v, stemmer)))
            .collect();
        let mut seen = BTreeSet::new();
        let mut features = Vec::with_capacity(specs.len());
        for spec in specs {
            if !seen.insert(spec.instance.clone()) {
                return Err(LexiconError::DuplicateBinding(spec.instance.clone()));
            }
            let feature = match (&spec.phrases, spec.selections.is_empty()) {
                (Some(list), true) => {
                    match taxonomy.node(&spec.instance) {
                        Some(n) if matches!(n.kind, NodeKind::Instance | NodeKind::SubInstance) => {}
                        _ => return Err(LexiconError::UnknownInstance(spec.instance.clone())),
                    }
                    if !phrase_lists.contains_key(list) {
                        return Err(LexiconError::UnknownPhraseList(list.clone()));
                    }
                    Feature::Phrases {
                        instance: spec.instance.clone(),
                        list: list.clone(),
                    }
                }
                (None, false) => {
                    let mut sel = Vec::with_capacity(spec.selections.len());
                    for s in &spec.selections {
                        let lex = prepared
                            .get(s.source.as_str())
                            .ok_or_else(|| LexiconError::UnknownSource(s.source.clone()))?;
                        sel.push((lex, s.category.as_str()));
                    }
                    Feature::Lexical(bind_instance(taxonomy, &spec.instance, &sel)?)
                }
                _ => return Err(LexiconError::AmbiguousBinding(spec.instance.clone())),
            };
            features.push(feature);
        }
        Ok(BindingSet { features })
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.instance().to_string()).collect()
    }

    pub fn lexical(&self) -> impl Iterator<Item = &InstanceBinding> {
        self.features.iter().filter_map(|f| match f {
            Feature::Lexical(b) => Some(b),
            Feature::Phrases { .. } => None,
        })
    }

    pub fn get(&self, instance: &NodeId) -> Option<&Feature> {
        self.features.iter().find(|f| f.instance() == instance)
    }
}
