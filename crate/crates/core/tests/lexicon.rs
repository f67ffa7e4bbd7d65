mod common;

use std::collections::{BTreeMap, BTreeSet};

use mindkb::lexicon::{
    bind_instance, load_binding_config, load_lexicon, load_lexicon_dir, load_phrase_list, preprocess_lexicon,
    BindingSet, Lexicon, LexiconError, PhraseList,
};
use mindkb::pipeline::Stage;
use mindkb::taxonomy::{load_taxonomy, NodeId, Taxonomy};
use mindkb::text::Stemmer;
use proptest::prelude::*;

use common::{fixture, settings, workspace_root};

fn lexicons() -> BTreeMap<String, Lexicon> {
    load_lexicon_dir(&workspace_root().join("lexicons")).expect("bundled lexicons")
}

fn kb() -> Taxonomy {
    load_taxonomy(&fixture("depression.mkb.json")).expect("bundled taxonomy")
}

fn golden_lines(name: &str) -> Vec<String> {
    std::fs::read_to_string(fixture(&format!("golden/{name}")))
        .expect("golden file")
        .lines()
        .map(str::to_string)
        .collect()
}

#[test]
fn absolutist_list_has_nineteen_words() {
    let lex = load_lexicon(&workspace_root().join("lexicons/absolutist.tsv"), "absolutist").expect("loads");
    assert_eq!(lex.categories.len(), 1);
    assert_eq!(lex.category("absolutist").map(<[String]>::len), Some(19));
}

#[test]
fn absolutist_stems_match_golden() {
    let lex = load_lexicon(&workspace_root().join("lexicons/absolutist.tsv"), "absolutist").expect("loads");
    let stems = preprocess_lexicon(&lex, &Stemmer::default());
    let got: Vec<String> = stems.category("absolutist").expect("category").to_vec();
    assert_eq!(got, golden_lines("absolutist_stems.txt"));
    assert!(got.contains(&"absolut".to_string()));
}

#[test]
fn empty_category_is_rejected() {
    let err = Lexicon::parse_tsv("\tsad\n", "x", "inline").unwrap_err();
    assert!(matches!(err, LexiconError::EmptyCategory { .. }), "{err}");
}

#[test]
fn duplicate_words_collapse() {
    let lex = Lexicon::parse_tsv("sad\tneg\nSad\tneg\nsad \tneg\n", "x", "inline").expect("parses");
    assert_eq!(lex.category("neg"), Some(&["sad".to_string()][..]));
}

#[test]
fn symbol_only_words_are_dropped() {
    let lex = Lexicon::parse_tsv("\u{2014}\tneg\nsad\tneg\n", "x", "inline").expect("parses");
    let p = preprocess_lexicon(&lex, &Stemmer::default());
    assert_eq!(p.category("neg"), Some(&["sad".to_string()][..]));
}

/// Porter2 is not a projection: a few of its outputs stem further
/// (`curse -> curs -> cur`). Preprocessing stays idempotent because stemmed
/// lexicons are marked and never stemmed again. The exceptions within the
/// bundled vocabulary are pinned so a stemmer change shows up here.
#[test]
fn stems_that_are_not_fixed_points_are_pinned() {
    let st = Stemmer::default();
    let mut moved = BTreeSet::new();
    for lex in lexicons().values() {
        let once = preprocess_lexicon(lex, &st);
        for stems in once.categories.values() {
            for s in stems {
                let again = st.stem(s);
                if &again != s {
                    moved.insert(format!("{s}\t{again}"));
                }
            }
        }
        assert_eq!(preprocess_lexicon(&once, &st), once);
    }
    let expected: BTreeSet<String> = golden_lines("stems_not_fixed_points.tsv").into_iter().collect();
    assert_eq!(moved, expected);
}

#[test]
fn negative_feeling_merges_both_negative_categories() {
    let st = Stemmer::default();
    let lex = lexicons();
    let liwc = preprocess_lexicon(&lex["liwc_subset"], &st);
    let nrc = preprocess_lexicon(&lex["nrc_subset"], &st);
    let b = bind_instance(&kb(), &NodeId::from("negative_feeling"), &[(&liwc, "negemo"), (&nrc, "negative")]).expect("binds");
    let expected: BTreeSet<String> =
        liwc.category("negemo").unwrap().iter().chain(nrc.category("negative").unwrap()).cloned().collect();
    assert_eq!(b.merged_stems, expected);
}

#[test]
fn single_word_category_binds_one_stem() {
    let st = Stemmer::default();
    let one = preprocess_lexicon(&Lexicon::parse_tsv("crying\tcry\n", "tiny", "inline").unwrap(), &st);
    let b = bind_instance(&kb(), &NodeId::from("sadness"), &[(&one, "cry")]).expect("binds");
    assert_eq!(b.merged_stems.len(), 1);
}

#[test]
fn overlapping_categories_union_idempotently() {
    let st = Stemmer::default();
    let a = preprocess_lexicon(&Lexicon::parse_tsv("sad\tx\ngloomy\tx\n", "a", "inline").unwrap(), &st);
    let b = preprocess_lexicon(&Lexicon::parse_tsv("gloomy\ty\nsad\ty\n", "b", "inline").unwrap(), &st);
    let bound = bind_instance(&kb(), &NodeId::from("sadness"), &[(&a, "x"), (&b, "y")]).expect("binds");
    assert_eq!(bound.merged_stems.len(), 2);
}

#[test]
fn raw_lexicons_cannot_be_bound() {
    let raw = Lexicon::parse_tsv("sad\tx\n", "a", "inline").unwrap();
    assert!(matches!(
        bind_instance(&kb(), &NodeId::from("sadness"), &[(&raw, "x")]),
        Err(LexiconError::NotPreprocessed(_))
    ));
}

#[test]
fn bundled_bindings_are_complete_and_clean() {
    let (set, lists) = settings().bindings(Stage::Score).expect("bindings resolve");
    assert_eq!(set.features.len(), 17);
    let lexical: Vec<_> = set.lexical().collect();
    assert_eq!(lexical.len(), 16);
    for b in lexical {
        assert!(!b.merged_stems.is_empty(), "{} is empty", b.instance);
        for s in &b.merged_stems {
            assert!(s.chars().all(|c| c.is_alphabetic() && !c.is_uppercase()), "{}: `{s}`", b.instance);
        }
    }
    assert_eq!(lists.len(), 1);
}

#[test]
fn binding_config_names_known_instances() {
    let specs = load_binding_config(&workspace_root().join("config/depression_bindings.json")).expect("config");
    let t = kb();
    for s in &specs {
        assert!(t.node(&s.instance).is_some(), "{}", s.instance);
    }
}

#[test]
fn three_line_phrase_file() {
    let p = PhraseList::parse("end my life\nkill myself\nwant to die\n", "p").expect("parses");
    assert_eq!(p.len(), 3);
}

#[test]
fn phrase_normalization() {
    let p = PhraseList::parse("End MY LIFE \n", "p").expect("parses");
    assert_eq!(p.phrases, ["end my life"]);
}

#[test]
fn blank_lines_are_skipped_in_order() {
    let p = load_phrase_list(&fixture("phrases_with_blanks.txt")).expect("loads");
    assert_eq!(p.phrases, golden_lines("phrases_with_blanks.txt"));
}

#[test]
fn bundled_phrases_are_normalized() {
    let p = load_phrase_list(&workspace_root().join("lexicons/suicidal_phrases.txt")).expect("loads");
    for phrase in &p.phrases {
        assert_eq!(phrase, &phrase.to_lowercase());
        assert_eq!(phrase, &phrase.split_whitespace().collect::<Vec<_>>().join(" "));
    }
}

proptest! {
    #[test]
    fn binding_order_never_changes_the_union(
        cats in prop::collection::vec(prop::collection::vec("[a-z]{2,9}", 1..6), 1..5),
        perm in Just(()).prop_perturb(|_, mut rng| rng.random::<u64>()),
    ) {
        let st = Stemmer::default();
        let mut tsv = String::new();
        for (i, words) in cats.iter().enumerate() {
            for w in words {
                tsv.push_str(&format!("{w}\tc{i}\n"));
            }
        }
        let lex = preprocess_lexicon(&Lexicon::parse_tsv(&tsv, "r", "generated").unwrap(), &st);
        let names: Vec<String> = (0..cats.len()).map(|i| format!("c{i}")).collect();
        let forward: Vec<(&Lexicon, &str)> = names.iter().map(|n| (&lex, n.as_str())).collect();
        let mut shuffled = forward.clone();
        let k = (perm as usize) % shuffled.len().max(1);
        shuffled.rotate_left(k);
        shuffled.reverse();
        let id = NodeId::from("sadness");
        let a = bind_instance(&kb(), &id, &forward);
        let b = bind_instance(&kb(), &id, &shuffled);
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a.merged_stems, b.merged_stems),
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "order changed success"),
        }
    }

    #[test]
    fn preprocessing_is_idempotent(words in prop::collection::vec("[A-Za-z'\\-]{1,12}", 1..20)) {
        let st = Stemmer::default();
        let tsv: String = words.iter().map(|w| format!("{w}\tc\n")).collect();
        if let Ok(lex) = Lexicon::parse_tsv(&tsv, "r", "generated") {
            let once = preprocess_lexicon(&lex, &st);
            prop_assert_eq!(preprocess_lexicon(&once, &st), once);
        }
    }
}

#[test]
fn resolved_bindings_round_trip_through_json() {
    let (set, _) = settings().bindings(Stage::Score).expect("bindings");
    let back: BindingSet = serde_json::from_str(&serde_json::to_string(&set).unwrap()).unwrap();
    assert_eq!(back, set);
}
