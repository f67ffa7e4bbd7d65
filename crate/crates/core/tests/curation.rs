mod common;

use std::collections::BTreeMap;
use std::path::Path;

use mindkb::curation::{
    clean_text, ingest_corpus, parse_individual_xml, tokenize_and_stem, CuratedRecord, CurationError, Curator,
    DictionaryEnrichment, IngestWarning, Post, UserCorpus,
};
use mindkb::synth::SynthManifest;
use mindkb::text::{Stopwords, Stemmer};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

use common::{fixture, workspace_root};

fn stopwords() -> Stopwords {
    Stopwords::load(&workspace_root().join("config/stopwords_en.txt")).expect("bundled stopwords")
}

fn curator() -> Curator {
    Curator::new(stopwords(), Stemmer::default())
}

fn post(text: &str) -> Post {
    Post { title: String::new(), date: None, text: text.into() }
}

#[test]
fn cleaning_matches_golden_file() {
    let stop = stopwords();
    let golden = std::fs::read_to_string(fixture("golden/clean_text.tsv")).expect("golden");
    for line in golden.lines() {
        let (raw, expected) = line.split_once('\t').expect("tab-separated");
        assert_eq!(clean_text(raw, &stop), expected, "input `{raw}`");
    }
}

#[test]
fn stemming_examples() {
    let st = Stemmer::default();
    assert_eq!(tokenize_and_stem("feeling hopeless feelings", &st), ["feel", "hopeless", "feel"]);
    assert!(tokenize_and_stem("", &st).is_empty());
    assert_eq!(tokenize_and_stem("sadness", &st).len(), 1);
}

#[test]
fn four_user_fixture_matches_its_manifest() {
    let root = fixture("corpus4");
    let manifest: SynthManifest =
        serde_json::from_str(&std::fs::read_to_string(root.join("synth_manifest.json")).expect("manifest")).expect("parses");
    let ingested = ingest_corpus(&root, 10).expect("ingests");
    assert!(ingested.warnings.is_empty(), "{:?}", ingested.warnings);
    assert_eq!(ingested.users.len(), manifest.users.len());
    for (u, m) in ingested.users.iter().zip(&manifest.users) {
        assert_eq!(u.user_id, m.user_id);
        assert_eq!(u.label, Some(m.label));
        assert_eq!(u.post_count(), m.posts);
        assert_eq!(u.chunks.len(), 10);
    }
}

fn copy_shuffled(src: &Path, dst: &Path, seed: u64) {
    let mut files = Vec::new();
    for entry in walk(src) {
        files.push(entry.strip_prefix(src).expect("under root").to_path_buf());
    }
    files.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    for rel in files {
        let to = dst.join(&rel);
        std::fs::create_dir_all(to.parent().expect("parent")).expect("mkdir");
        std::fs::copy(src.join(&rel), to).expect("copy");
    }
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).expect("readable") {
        let p = e.expect("entry").path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn ingest_is_order_independent() {
    let reference = ingest_corpus(&fixture("corpus4"), 10).expect("ingests").users;
    for seed in 0..3 {
        let tmp = TempDir::new().expect("tmp");
        copy_shuffled(&fixture("corpus4"), tmp.path(), seed);
        assert_eq!(ingest_corpus(tmp.path(), 10).expect("ingests").users, reference);
    }
}

#[test]
fn single_post_user_fills_one_chunk() {
    let tmp = TempDir::new().expect("tmp");
    let dir = tmp.path().join("chunk1");
    std::fs::create_dir_all(&dir).expect("mkdir");
    std::fs::write(
        dir.join("subject7_1.xml"),
        "<INDIVIDUAL><ID>subject7</ID><WRITING><TITLE></TITLE><DATE>2017-03-01 10:00:00</DATE><TEXT>hello there</TEXT></WRITING></INDIVIDUAL>",
    )
    .expect("write");
    let ingested = ingest_corpus(tmp.path(), 10).expect("ingests");
    assert_eq!(ingested.users.len(), 1);
    let u = &ingested.users[0];
    assert_eq!(u.label, None);
    assert_eq!(u.chunks.len(), 10);
    assert_eq!(u.chunks[0].len(), 1);
    assert!(u.chunks[1..].iter().all(Vec::is_empty));
    assert!(ingested.warnings.contains(&IngestWarning::NoLabelsFile));
}

#[test]
fn malformed_xml_reports_the_file() {
    let err = parse_individual_xml("<INDIVIDUAL><WRITING><TEXT>oops</WRITING>", "broken.xml").unwrap_err();
    assert!(matches!(err, CurationError::MalformedXml { .. }), "{err}");
    assert!(err.to_string().contains("broken.xml"));
}

#[test]
fn empty_root_has_no_chunks() {
    let tmp = TempDir::new().expect("tmp");
    assert!(matches!(ingest_corpus(tmp.path(), 10), Err(CurationError::NoChunks(_))));
}

#[test]
fn user_without_text_curates_to_empty_record() {
    let corpus = UserCorpus { user_id: "u".into(), label: Some(0), chunks: vec![vec![post(""), post("  ")]; 10] };
    let r = curator().curate(&corpus);
    assert!(r.stemmed_tokens.is_empty());
    assert_eq!(r.chunk_docs.len(), 10);
    assert!(r.chunk_docs.iter().all(String::is_empty));
}

#[test]
fn fixture_user_matches_golden_record() {
    let users = ingest_corpus(&fixture("corpus4"), 10).expect("ingests").users;
    let record = curator().curate(&users[1]);
    let golden: CuratedRecord =
        serde_json::from_str(&std::fs::read_to_string(fixture("golden/corpus4_subject0002.json")).expect("golden"))
            .expect("parses");
    assert_eq!(record, golden);
}

#[test]
fn enrichment_appends_expansion_stems() {
    let table = BTreeMap::from([("ibs".to_string(), vec!["inflammatory".into(), "bowel".into(), "disease".into()])]);
    let c = curator().with_enrichment(Box::new(DictionaryEnrichment::new(table)));
    let corpus = UserCorpus { user_id: "u".into(), label: None, chunks: vec![vec![post("my IBS again")]] };
    let r = c.curate(&corpus);
    let tail: Vec<&str> = r.stemmed_tokens.iter().rev().take(3).rev().map(String::as_str).collect();
    assert_eq!(tail, ["inflammatori", "bowel", "diseas"]);
}

#[test]
fn token_count_equals_sum_over_chunks() {
    let c = curator();
    for u in ingest_corpus(&fixture("corpus4"), 10).expect("ingests").users {
        let r = c.curate(&u);
        let per_chunk: usize = c.chunk_stems(&r).iter().map(Vec::len).sum();
        assert_eq!(r.stemmed_tokens.len(), per_chunk, "{}", u.user_id);
    }
}

#[test]
fn no_stem_is_a_stopword() {
    let c = curator();
    let stemmed_stop = stopwords().stemmed(&Stemmer::default());
    let corpus = UserCorpus {
        user_id: "u".into(),
        label: None,
        chunks: vec![vec![post("I was being myself, doing what others did; yours and ours are theirs!")]],
    };
    for u in ingest_corpus(&fixture("corpus4"), 10).expect("ingests").users.iter().chain([&corpus]) {
        for s in c.curate(u).stemmed_tokens {
            assert!(!stemmed_stop.contains(&s), "`{s}` is a stemmed stopword");
            assert!(s.chars().all(char::is_alphabetic), "`{s}`");
        }
    }
}

proptest! {
    #[test]
    fn cleaning_is_idempotent(raw in "\\PC{0,80}") {
        let stop = stopwords();
        let once = clean_text(&raw, &stop);
        prop_assert_eq!(clean_text(&once, &stop), once);
    }

    #[test]
    fn cleaning_markup_heavy_text_is_idempotent(
        parts in prop::collection::vec(prop_oneof![
            Just("<br/>".to_string()), Just("http://x.org/a?b=1".to_string()), Just("don't".to_string()),
            Just("&amp;".to_string()), "[A-Za-z]{1,8}", "[0-9]{1,4}", Just("Ünïcödé".to_string())
        ], 0..20)
    ) {
        let stop = stopwords();
        let raw = parts.join(" ");
        let once = clean_text(&raw, &stop);
        prop_assert_eq!(clean_text(&once, &stop), once);
    }
}
