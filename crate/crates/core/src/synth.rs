//! Synthetic eRisk-layout corpora with a planted, tunable signal.
//!
//! Every user writes posts of filler pseudo-words mixed with lexicon words.
//! Minority users draw lexicon words (and suicidal phrases) at a higher rate;
//! with `signal_strength = 0` both classes come from the same distribution.

use std::path::Path;

use chrono::{Duration, NaiveDate};
use quick_xml::escape::escape;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curation::{DEFAULT_CHUNKS, LABELS_FILE};

pub const MANIFEST_FILE: &str = "synth_manifest.json";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_users: usize,
    /// Share of users labeled 1.
    pub minority_fraction: f64,
    /// Extra per-word probability of a lexicon word for minority users.
    pub signal_strength: f64,
    pub posts_per_user: usize,
    /// Number of distinct filler pseudo-words.
    pub vocabulary_size: usize,
    /// Mean words per post; actual lengths vary uniformly by ±50%.
    pub words_per_post: usize,
    /// Per-word probability of a lexicon word for every user.
    pub lexicon_base_rate: f64,
    /// Per-post probability of a suicidal phrase for every user; minority
    /// users add `signal_strength` on top.
    pub phrase_base_rate: f64,
    pub chunks: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_users: 200,
            minority_fraction: 0.1,
            signal_strength: 0.1,
            posts_per_user: 20,
            vocabulary_size: 2000,
            words_per_post: 30,
            lexicon_base_rate: 0.05,
            phrase_base_rate: 0.02,
            chunks: DEFAULT_CHUNKS,
            seed: 42,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidSpec(m.to_string()));
        if self.n_users < 2 {
            return bad("n_users must be at least 2");
        }
        if !(self.minority_fraction > 0.0 && self.minority_fraction < 1.0) {
            return bad("minority_fraction must lie in (0, 1)");
        }
        if !(self.signal_strength >= 0.0) {
            return bad("signal_strength must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.lexicon_base_rate) || self.lexicon_base_rate + self.signal_strength > 1.0 {
            return bad("lexicon_base_rate + signal_strength must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.phrase_base_rate) {
            return bad("phrase_base_rate must lie in [0, 1]");
        }
        if self.posts_per_user == 0 || self.words_per_post == 0 {
            return bad("posts_per_user and words_per_post must be positive");
        }
        if self.vocabulary_size == 0 {
            return bad("vocabulary_size must be positive");
        }
        if self.chunks == 0 {
            return bad("chunks must be positive");
        }
        Ok(())
    }

    pub fn minority_count(&self) -> usize {
        ((self.n_users as f64 * self.minority_fraction).round() as usize).clamp(1, self.n_users - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthUser {
    pub user_id: String,
    pub label: u8,
    pub posts: usize,
    pub lexicon_words: usize,
    pub phrases: usize,
}

/// Written next to the corpus so tests can check ingestion against it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub spec: SyntheticSpec,
    pub users: Vec<SynthUser>,
}

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

/// Deterministic three-syllable pseudo-word for `index`.
pub fn pseudo_word(index: usize) -> String {
    let n = CONSONANTS.len() * VOWELS.len();
    let mut i = index;
    let mut w = String::with_capacity(7);
    for _ in 0..3 {
        let s = i % n;
        i /= n;
        w.push(CONSONANTS[s / VOWELS.len()] as char);
        w.push(VOWELS[s % VOWELS.len()] as char);
    }
    // Index beyond 70^3 would wrap; a trailing marker keeps words distinct.
    if i > 0 {
        w.push_str(&"x".repeat(i));
    }
    w
}

fn write(path: &Path, contents: &str) -> Result<(), SynthError> {
    std::fs::write(path, contents).map_err(|source| SynthError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes `chunk1..chunkN/<user>_<n>.xml`, `golden_truth.txt` and a
/// manifest under `out`. Same spec and word lists give identical bytes.
pub fn synth_corpus(
    spec: &SyntheticSpec,
    lexicon_words: &[String],
    phrases: &[String],
    out: &Path,
) -> Result<SynthManifest, SynthError> {
    spec.validate()?;
    if lexicon_words.is_empty() {
        return Err(SynthError::InvalidSpec("no lexicon words to draw from".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let width = spec.n_users.to_string().len().max(4);
    let mut labels = vec![0u8; spec.n_users];
    for l in labels.iter_mut().take(spec.minority_count()) {
        *l = 1;
    }
    labels.shuffle(&mut rng);

    let filler: Vec<String> = (0..spec.vocabulary_size).map(pseudo_word).collect();
    let start = NaiveDate::from_ymd_opt(2016, 1, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid date");

    let mut chunk_files: Vec<Vec<(String, String)>> = vec![Vec::new(); spec.chunks];
    let mut users = Vec::with_capacity(spec.n_users);
    let mut truth = String::new();
    for (u, &label) in labels.iter().enumerate() {
        let user_id = format!("subject{:0width$}", u + 1);
        let word_rate = spec.lexicon_base_rate + if label == 1 { spec.signal_strength } else { 0.0 };
        let phrase_rate =
            (spec.phrase_base_rate + if label == 1 { spec.signal_strength } else { 0.0 }).min(1.0);
        let mut per_chunk: Vec<String> = vec![String::new(); spec.chunks];
        let (mut lex_count, mut phrase_count) = (0, 0);
        for p in 0..spec.posts_per_user {
            let lo = (spec.words_per_post / 2).max(1);
            let hi = spec.words_per_post + spec.words_per_post / 2;
            let len = rng.random_range(lo..=hi);
            let mut words = Vec::with_capacity(len + 4);
            for _ in 0..len {
                if rng.random_bool(word_rate) {
                    words.push(lexicon_words[rng.random_range(0..lexicon_words.len())].as_str());
                    lex_count += 1;
                } else {
                    words.push(filler[rng.random_range(0..filler.len())].as_str());
                }
            }
            if !phrases.is_empty() && rng.random_bool(phrase_rate) {
                let at = rng.random_range(0..=words.len());
                words.insert(at, phrases[rng.random_range(0..phrases.len())].as_str());
                phrase_count += 1;
            }
            let title: Vec<&str> = (0..3).map(|_| filler[rng.random_range(0..filler.len())].as_str()).collect();
            let date = start + Duration::hours((u * spec.posts_per_user + p) as i64);
            let chunk = p * spec.chunks / spec.posts_per_user;
            per_chunk[chunk].push_str(&format!(
                "<WRITING>\n\t<TITLE>{}</TITLE>\n\t<DATE>{}</DATE>\n\t<INFO>synthetic</INFO>\n\t<TEXT>{}</TEXT>\n</WRITING>\n",
                escape(title.join(" ").as_str()),
                date.format("%Y-%m-%d %H:%M:%S"),
                escape(words.join(" ").as_str()),
            ));
        }
        for (c, body) in per_chunk.into_iter().enumerate() {
            chunk_files[c].push((user_id.clone(), format!("<INDIVIDUAL>\n<ID>{user_id}</ID>\n{body}</INDIVIDUAL>\n")));
        }
        truth.push_str(&format!("{user_id} {label}\n"));
        users.push(SynthUser {
            user_id,
            label,
            posts: spec.posts_per_user,
            lexicon_words: lex_count,
            phrases: phrase_count,
        });
    }

    for (c, files) in chunk_files.iter().enumerate() {
        let dir = out.join(format!("chunk{}", c + 1));
        std::fs::create_dir_all(&dir).map_err(|source| SynthError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        for (user, xml) in files {
            write(&dir.join(format!("{user}_{}.xml", c + 1)), xml)?;
        }
    }
    write(&out.join(LABELS_FILE), &truth)?;
    let manifest = SynthManifest { spec: spec.clone(), users };
    write(
        &out.join(MANIFEST_FILE),
        &serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pseudo_words_are_distinct_and_alphabetic() {
        let words: std::collections::BTreeSet<String> = (0..5000).map(pseudo_word).collect();
        assert_eq!(words.len(), 5000);
        assert!(words.iter().all(|w| w.chars().all(|c| c.is_ascii_lowercase())));
    }

    #[test]
    fn invalid_specs() {
        let ok = SyntheticSpec::default();
        assert!(ok.validate().is_ok());
        for bad in [
            SyntheticSpec { minority_fraction: 0.0, ..ok.clone() },
            SyntheticSpec { minority_fraction: 1.0, ..ok.clone() },
            SyntheticSpec { signal_strength: -0.1, ..ok.clone() },
            SyntheticSpec { signal_strength: 0.99, ..ok.clone() },
            SyntheticSpec { n_users: 1, ..ok.clone() },
        ] {
            assert!(matches!(bad.validate(), Err(SynthError::InvalidSpec(_))));
        }
    }

    #[test]
    fn minority_count_rounds() {
        let s = SyntheticSpec { n_users: 100, minority_fraction: 0.1, ..Default::default() };
        assert_eq!(s.minority_count(), 10);
    }
}
