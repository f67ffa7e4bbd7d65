mod common;

use std::collections::{BTreeMap, BTreeSet};

use mindkb::curation::CuratedRecord;
use mindkb::lexicon::{BindingSet, Feature, InstanceBinding, PhraseList};
use mindkb::pipeline::{read_jsonl, Pipeline, Settings, Stage};
use mindkb::scoring::{
    compute_scores, cosine_score, fit_tfidf, lexicon_vector, standardize, suicidal_count, user_vector, ScoreMatrix,
    ScoringOptions, SparseVector, Standardizer, TfIdfModel, UserDocs,
};
use mindkb::taxonomy::NodeId;
use proptest::prelude::*;
use tempfile::TempDir;

use common::oracle::{count_phrases, Oracle};
use common::{config_path, fixture};

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

fn stems(s: &str) -> BTreeSet<String> {
    toks(s).into_iter().collect()
}

fn sparse(pairs: &[(usize, f64)]) -> SparseVector {
    SparseVector::from_map(pairs.iter().copied().collect())
}

#[test]
fn idf_decreases_with_document_frequency() {
    let m = fit_tfidf(&[toks("a b"), toks("a")]).expect("fits");
    let (a, b) = (m.idf[m.column("a").unwrap()], m.idf[m.column("b").unwrap()]);
    assert!(a < b);
    assert_eq!(m.doc_count, 2);
}

#[test]
fn term_in_every_document_has_minimal_idf() {
    let m = fit_tfidf(&[toks("x y"), toks("x z"), toks("x")]).expect("fits");
    let x = m.idf[m.column("x").unwrap()];
    assert_eq!(x, 1.0);
    assert!(m.idf.iter().all(|&v| v >= x && v > 0.0));
}

#[test]
fn six_document_idf_matches_hand_computation() {
    let docs: Vec<Vec<String>> =
        ["sad tire", "sad", "happi walk", "walk walk", "", "tire sad never"].iter().map(|d| toks(d)).collect();
    let m = fit_tfidf(&docs).expect("fits");
    let o = Oracle::fit(&docs);
    assert_eq!(m.vocabulary, o.vocab);
    // df: happi 1, never 1, sad 3, tire 2, walk 2; N = 6 including the empty document.
    let hand = [(7.0f64 / 2.0).ln() + 1.0, (7.0f64 / 2.0).ln() + 1.0, (7.0f64 / 4.0).ln() + 1.0, (7.0f64 / 3.0).ln() + 1.0, (7.0f64 / 3.0).ln() + 1.0];
    for ((a, b), c) in m.idf.iter().zip(&o.idf).zip(hand) {
        assert!((a - b).abs() < 1e-12 && (a - c).abs() < 1e-12);
    }
}

#[test]
fn unique_tokens_give_a_unit_vector() {
    let m = fit_tfidf(&[toks("a b c")]).expect("fits");
    let v = user_vector(&m, &toks("a b c"));
    assert!((v.norm() - 1.0).abs() < 1e-12);
    assert!(user_vector(&m, &[]).is_zero());
}

#[test]
fn full_coverage_lexicon_is_uniform() {
    let m = fit_tfidf(&[toks("a b c d")]).expect("fits");
    let l = lexicon_vector(&m, &stems("a b c d"), false);
    assert_eq!(l.to_dense(4), vec![0.5; 4]);
    assert!(lexicon_vector(&m, &stems("zz yy"), false).is_zero());
}

#[test]
fn cosine_examples() {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let u = sparse(&[(0, h), (1, h)]);
    assert!((cosine_score(&u, &u) - 1.0).abs() < 1e-12);
    assert_eq!(cosine_score(&u, &sparse(&[(2, 1.0)])), 0.0);
    assert!((cosine_score(&u, &sparse(&[(0, h), (2, h)])) - 0.5).abs() < 1e-12);
    assert_eq!(cosine_score(&u, &SparseVector::default()), 0.0);
}

#[test]
fn phrase_counting_examples() {
    let list = PhraseList::parse("end my life\n", "p").expect("parses");
    assert_eq!(suicidal_count("i want to end my life i said end my life", &list), 2);
    assert_eq!(suicidal_count("nothing to see here", &list), 0);
    let nested = PhraseList::parse("kill\nkill myself\n", "p").expect("parses");
    assert_eq!(suicidal_count("i will kill myself kill", &nested), 2);
}

fn lexical_set(bindings: &[(&str, &str)]) -> BindingSet {
    BindingSet {
        features: bindings
            .iter()
            .map(|(name, words)| {
                Feature::Lexical(InstanceBinding {
                    instance: NodeId::new(*name),
                    sources: Vec::new(),
                    merged_stems: stems(words),
                })
            })
            .collect(),
    }
}

#[test]
fn out_of_vocabulary_user_scores_zero_except_counts() {
    let (set, lists) = common::settings().bindings(Stage::Score).expect("bindings");
    let model = fit_tfidf(&[toks("sad walk"), toks("never")]).expect("fits");
    let user = UserDocs {
        user_id: "u".into(),
        label: None,
        tokens: toks("qqq zzz"),
        chunk_tokens: vec![toks("qqq zzz")],
        phrase_text: "i want to kill myself".into(),
    };
    let order = set.feature_names();
    let m = compute_scores(&[user], &set, &lists, &model, &order, ScoringOptions::default()).expect("scores");
    let counts = mindkb::scoring::count_feature_names(&set);
    for (f, v) in order.iter().zip(&m.rows[0].values) {
        if counts.contains(f) {
            assert_eq!(*v, 1.0);
        } else {
            assert_eq!(*v, 0.0, "{f}");
        }
    }
}

#[test]
fn missing_binding_is_reported() {
    let set = lexical_set(&[("a", "x")]);
    let model = fit_tfidf(&[toks("x")]).expect("fits");
    let err = compute_scores(&[], &set, &BTreeMap::new(), &model, &["b".to_string()], ScoringOptions::default());
    assert!(err.is_err());
}

/// Scores the four-user fixture through the library pipeline.
fn fixture_scores() -> (TempDir, Settings) {
    let tmp = TempDir::new().expect("tmp");
    let settings = Settings::load(
        &config_path(),
        &[
            ("corpus_root".into(), fixture("corpus4").display().to_string()),
            ("output_dir".into(), tmp.path().display().to_string()),
        ],
    )
    .expect("settings");
    Pipeline::new(settings.clone()).run(&[Stage::Ingest, Stage::Curate, Stage::Score]).expect("runs");
    (tmp, settings)
}

#[test]
fn fixture_matrix_matches_golden_and_oracle() {
    let (tmp, settings) = fixture_scores();
    let produced = std::fs::read_to_string(tmp.path().join("scores_raw.csv")).expect("scores");
    let golden = std::fs::read_to_string(fixture("golden/corpus4_scores_raw.csv")).expect("golden");
    assert_eq!(produced, golden);

    let matrix = ScoreMatrix::read_csv(produced.as_bytes()).expect("parses");
    assert_eq!((matrix.rows.len(), matrix.n_features()), (4, 17));
    let records: Vec<CuratedRecord> = read_jsonl(&tmp.path().join("curated.jsonl")).expect("curated");
    let curator = settings.curator().expect("curator");
    let chunks: Vec<Vec<Vec<String>>> = records.iter().map(|r| curator.chunk_stems(r)).collect();
    let docs: Vec<Vec<String>> = chunks.iter().flatten().cloned().collect();
    let oracle = Oracle::fit(&docs);
    let (set, lists) = settings.bindings(Stage::Score).expect("bindings");
    for (r, row) in records.iter().zip(&matrix.rows) {
        let u = oracle.user(&r.stemmed_tokens);
        for (name, &value) in matrix.feature_order.iter().zip(&row.values) {
            let expected = match set.get(&NodeId::new(name.clone())).expect("bound") {
                Feature::Lexical(b) => Oracle::cosine(&u, &oracle.lexicon(&b.merged_stems, false)),
                Feature::Phrases { list, .. } => count_phrases(&r.phrase_text, &lists[list].phrases) as f64,
            };
            assert!((value - expected).abs() <= 1e-12, "{} {name}: {value} vs {expected}", r.user_id);
        }
    }
}

#[test]
fn tfidf_model_round_trips() {
    let (tmp, _) = fixture_scores();
    let json = std::fs::read_to_string(tmp.path().join("tfidf.json")).expect("model");
    let m = TfIdfModel::from_json(&json).expect("parses");
    assert_eq!(m.idf.len(), m.vocabulary.len());
    assert_eq!(m.doc_count, 40);
    assert_eq!(TfIdfModel::from_json(&m.to_json()).expect("parses"), m);
}

/// Appending a binding word does not always raise that binding's score:
/// extra weight on a word that already dominates moves the user vector
/// away from the uniform lexicon direction.
#[test]
fn binding_words_can_lower_the_score() {
    let model = fit_tfidf(&[toks("w x")]).expect("fits");
    let l = lexicon_vector(&model, &stems("w x"), false);
    let before = cosine_score(&user_vector(&model, &toks("w w w x")), &l);
    let after = cosine_score(&user_vector(&model, &toks("w w w w x")), &l);
    assert!((before - 4.0 / (10f64.sqrt() * 2f64.sqrt())).abs() < 1e-12);
    assert!(after < before);
}

#[test]
fn standardization_examples() {
    let rows = [vec![1.0, 5.0], vec![3.0, 5.0]];
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    let st = Standardizer::fit(&refs, None);
    assert_eq!(st.mean, [2.0, 5.0]);
    assert_eq!(st.std, [1.0, 1.0]);
    assert_eq!(st.transform(&rows), [vec![-1.0, 0.0], vec![1.0, 0.0]]);
    // A held-out row uses the fitted statistics.
    assert_eq!(st.transform_row(&[5.0, 9.0]), [3.0, 4.0]);
}

#[test]
fn standardize_respects_the_fit_rows_and_mask() {
    let m = ScoreMatrix {
        feature_order: vec!["a".into(), "count".into()],
        rows: [[1.0, 2.0], [3.0, 4.0], [100.0, 0.0]]
            .iter()
            .enumerate()
            .map(|(i, v)| mindkb::scoring::ScoreRow { user_id: format!("u{i}"), label: Some(0), values: v.to_vec() })
            .collect(),
        standardization: None,
    };
    let s = standardize(&m, &[0, 1], false, &["count".to_string()]);
    assert_eq!(s.rows[0].values, [1.0, -1.0]);
    assert_eq!(s.rows[2].values, [100.0, -3.0]);
}

fn dense_unit(v: &[f64]) -> SparseVector {
    sparse(&v.iter().copied().enumerate().filter(|(_, x)| *x != 0.0).collect::<Vec<_>>())
}

proptest! {
    #[test]
    fn cosine_is_symmetric_and_scale_invariant(
        u in prop::collection::vec(0.0f64..5.0, 6),
        l in prop::collection::vec(0.0f64..5.0, 6),
        alpha in 0.01f64..100.0,
    ) {
        let (u, l) = (dense_unit(&u), dense_unit(&l));
        let c = cosine_score(&u, &l);
        prop_assert!((0.0..=1.0).contains(&c));
        prop_assert!((c - cosine_score(&l, &u)).abs() < 1e-12);
        prop_assert!((c - cosine_score(&u.scaled(alpha), &l)).abs() < 1e-12);
    }

    #[test]
    fn standardize_inverts(rows in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 4), 2..30)) {
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let st = Standardizer::fit(&refs, None);
        let z = st.transform(&rows);
        for (r, zr) in rows.iter().zip(&z) {
            for (a, b) in r.iter().zip(st.inverse_row(zr)) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
        let n = rows.len() as f64;
        for j in 0..4 {
            let raw_mu = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let raw_sd = (rows.iter().map(|r| (r[j] - raw_mu).powi(2)).sum::<f64>() / n).sqrt();
            let mu = z.iter().map(|r| r[j]).sum::<f64>() / n;
            let sd = (z.iter().map(|r| (r[j] - mu).powi(2)).sum::<f64>() / n).sqrt();
            prop_assert!(mu.abs() < 1e-9);
            if raw_sd > 1e-9 {
                prop_assert!((sd - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn phrase_counts_match_scanner(
        words in prop::collection::vec(prop_oneof![Just("end"), Just("my"), Just("life"), Just("kill"), Just("myself"), Just("ok")], 0..40),
    ) {
        let phrases: Vec<String> = ["end my life", "kill myself", "kill", "my life"].iter().map(|s| s.to_string()).collect();
        let list = PhraseList { name: "p".into(), phrases: phrases.clone() };
        let text = words.join(" ");
        prop_assert_eq!(suicidal_count(&text, &list), count_phrases(&text, &phrases));
    }

    #[test]
    fn words_outside_the_binding_never_raise_its_score(
        user in prop::collection::vec(0usize..8, 0..20),
        extra in prop::collection::vec(4usize..8, 1..10),
    ) {
        let vocab: Vec<String> = (0..8).map(|i| format!("w{i}")).collect();
        let docs = vec![vocab[..5].to_vec(), vocab[3..].to_vec(), user.iter().map(|&i| vocab[i].clone()).collect()];
        let model = fit_tfidf(&docs).expect("fits");
        let l = lexicon_vector(&model, &vocab[..4].iter().cloned().collect(), false);
        let tokens: Vec<String> = user.iter().map(|&i| vocab[i].clone()).collect();
        let more: Vec<String> = tokens.iter().cloned().chain(extra.iter().map(|&i| vocab[i].clone())).collect();
        let before = cosine_score(&user_vector(&model, &tokens), &l);
        let after = cosine_score(&user_vector(&model, &more), &l);
        prop_assert!(after <= before + 1e-12);
    }

    #[test]
    fn binding_words_lift_a_zero_score(
        user in prop::collection::vec(4usize..8, 0..20),
        extra in prop::collection::vec(0usize..4, 1..10),
    ) {
        let vocab: Vec<String> = (0..8).map(|i| format!("w{i}")).collect();
        let model = fit_tfidf(std::slice::from_ref(&vocab)).expect("fits");
        let l = lexicon_vector(&model, &vocab[..4].iter().cloned().collect(), false);
        let tokens: Vec<String> = user.iter().map(|&i| vocab[i].clone()).collect();
        prop_assert_eq!(cosine_score(&user_vector(&model, &tokens), &l), 0.0);
        let more: Vec<String> = tokens.iter().cloned().chain(extra.iter().map(|&i| vocab[i].clone())).collect();
        prop_assert!(cosine_score(&user_vector(&model, &more), &l) > 0.0);
    }
}

#[test]
fn score_matrix_csv_round_trips() {
    let text = std::fs::read_to_string(fixture("golden/corpus4_scores_raw.csv")).expect("golden");
    let m = ScoreMatrix::read_csv(text.as_bytes()).expect("parses");
    assert_eq!(m.to_csv_string(), text);
}
