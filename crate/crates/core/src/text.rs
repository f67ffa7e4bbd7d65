//! Text normalization primitives shared by lexicon loading, curation and
//! phrase matching.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use rust_stemmers::Algorithm;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

static MARKUP: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"<[^<>\n]{0,200}>|&#?[a-z0-9]{1,10};").expect("markup regex"));
static URL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?:https?://|ftp://|www\.)\S*").expect("url regex"));

fn is_apostrophe(c: char) -> bool {
    matches!(c, '\'' | '\u{2019}' | '\u{2018}' | '`' | '\u{02BC}')
}

/// Lowercases, strips markup and URLs, drops apostrophes and replaces every
/// other non-alphabetic character with a space. Returns the surviving words.
///
/// Stopwords are kept; this is the form phrase lists are matched against.
pub fn normalize_words(raw: &str) -> Vec<String> {
    let lowered: String = raw.nfc().collect::<String>().to_lowercase();
    let lowered: String = lowered.nfc().collect();
    let no_markup = MARKUP.replace_all(&lowered, " ");
    let no_urls = URL.replace_all(&no_markup, " ");

    let mut words = Vec::new();
    let mut current = String::new();
    for c in no_urls.chars() {
        if is_apostrophe(c) {
            continue;
        }
        if c.is_alphabetic() {
            current.push(c);
        } else if !current.is_empty() {
            words.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        words.push(current);
    }
    words
}

/// Single-space joined form of [`normalize_words`].
pub fn normalize_text(raw: &str) -> String {
    normalize_words(raw).join(" ")
}

/// Lowercase stopword set. Entries are normalized the same way as text, so
/// `can't` and `cant` are the same stopword.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Stopwords {
    words: BTreeSet<String>,
}

impl Stopwords {
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let words = words
            .into_iter()
            .flat_map(|w| normalize_words(w.as_ref()))
            .collect();
        Stopwords { words }
    }

    /// One word per line, `#` starts a comment line.
    pub fn parse(contents: &str) -> Self {
        Self::new(
            contents
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }

    /// The stopword set passed through `stemmer`.
    pub fn stemmed(&self, stemmer: &Stemmer) -> BTreeSet<String> {
        self.words.iter().map(|w| stemmer.stem(w)).collect()
    }
}

/// Which stemming algorithm to apply. Pinned in configuration so stems stay
/// stable between runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StemmerKind {
    /// Snowball English (Porter2).
    #[default]
    #[serde(alias = "snowball", alias = "english")]
    Porter2,
    /// Identity; useful for tests and for pre-stemmed inputs.
    None,
}

impl fmt::Display for StemmerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StemmerKind::Porter2 => f.write_str("porter2"),
            StemmerKind::None => f.write_str("none"),
        }
    }
}

pub struct Stemmer {
    kind: StemmerKind,
    inner: Option<rust_stemmers::Stemmer>,
}

impl fmt::Debug for Stemmer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Stemmer").field("kind", &self.kind).finish()
    }
}

impl Clone for Stemmer {
    fn clone(&self) -> Self {
        Stemmer::new(self.kind)
    }
}

impl Default for Stemmer {
    fn default() -> Self {
        Stemmer::new(StemmerKind::Porter2)
    }
}

impl Stemmer {
    pub fn new(kind: StemmerKind) -> Self {
        let inner = match kind {
            StemmerKind::Porter2 => Some(rust_stemmers::Stemmer::create(Algorithm::English)),
            StemmerKind::None => None,
        };
        Stemmer { kind, inner }
    }

    pub fn kind(&self) -> StemmerKind {
        self.kind
    }

    pub fn stem(&self, word: &str) -> String {
        match &self.inner {
            Some(s) => s.stem(word).into_owned(),
            None => word.to_string(),
        }
    }
}
