//! Brute-force reference implementations used to check the scoring code.

use std::collections::BTreeSet;

/// Independent tf-idf over dense vectors with nested loops.
pub struct Oracle {
    pub vocab: Vec<String>,
    pub idf: Vec<f64>,
}

impl Oracle {
    pub fn fit(docs: &[Vec<String>]) -> Self {
        let mut vocab: Vec<String> = Vec::new();
        for d in docs {
            for t in d {
                if !vocab.contains(t) {
                    vocab.push(t.clone());
                }
            }
        }
        vocab.sort();
        let n = docs.len() as f64;
        let idf = vocab
            .iter()
            .map(|term| {
                let mut df = 0.0;
                for d in docs {
                    if d.iter().any(|t| t == term) {
                        df += 1.0;
                    }
                }
                ((1.0 + n) / (1.0 + df)).ln() + 1.0
            })
            .collect();
        Oracle { vocab, idf }
    }

    pub fn unit(v: Vec<f64>) -> Vec<f64> {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            v
        } else {
            v.into_iter().map(|x| x / norm).collect()
        }
    }

    pub fn user(&self, tokens: &[String]) -> Vec<f64> {
        let v = self
            .vocab
            .iter()
            .enumerate()
            .map(|(j, term)| tokens.iter().filter(|t| *t == term).count() as f64 * self.idf[j])
            .collect();
        Self::unit(v)
    }

    pub fn chunk_mean(&self, chunks: &[Vec<String>]) -> Vec<f64> {
        let mut sum = vec![0.0; self.vocab.len()];
        let mut k = 0.0;
        for c in chunks {
            let v = self.user(c);
            if v.iter().all(|&x| x == 0.0) {
                continue;
            }
            k += 1.0;
            for j in 0..sum.len() {
                sum[j] += v[j];
            }
        }
        if k == 0.0 {
            return sum;
        }
        Self::unit(sum.into_iter().map(|x| x / k).collect())
    }

    pub fn lexicon(&self, stems: &BTreeSet<String>, weighted: bool) -> Vec<f64> {
        let v = self
            .vocab
            .iter()
            .enumerate()
            .map(|(j, t)| if stems.contains(t) { if weighted { self.idf[j] } else { 1.0 } } else { 0.0 })
            .collect();
        Self::unit(v)
    }

    pub fn cosine(u: &[f64], l: &[f64]) -> f64 {
        let dot: f64 = u.iter().zip(l).map(|(a, b)| a * b).sum();
        let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nl = l.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nu == 0.0 || nl == 0.0 {
            0.0
        } else {
            (dot / (nu * nl)).clamp(0.0, 1.0)
        }
    }
}


/// Non-overlapping phrase occurrences found by scanning word positions and
/// taking the longest phrase that starts at each position.
pub fn count_phrases(text: &str, phrases: &[String]) -> usize {
    let words: Vec<&str> = text.split_whitespace().collect();
    let lists: Vec<Vec<&str>> = phrases.iter().map(|p| p.split_whitespace().collect()).collect();
    let (mut i, mut n) = (0, 0);
    while i < words.len() {
        let best = lists
            .iter()
            .filter(|p| !p.is_empty() && i + p.len() <= words.len() && words[i..i + p.len()] == p[..])
            .map(Vec::len)
            .max();
        match best {
            Some(len) => {
                n += 1;
                i += len;
            }
            None => i += 1,
        }
    }
    n
}
