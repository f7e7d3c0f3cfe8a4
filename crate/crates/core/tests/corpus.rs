use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use embias::corpus::{
    intersect_documents, lemmatize_corpus, parse_tagger_output, prepare_corpus, read_tagger_output,
    residual_rule_keys, tokenize, MatchLevel, PrepareOptions, ScrubRules, TaggerItem,
};
use embias::Error;
use proptest::prelude::*;

const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/de.tagged.tsv");

fn doc_ids() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec("d[0-9]{1,2}", 1..12)
}

proptest! {
    #[test]
    fn intersection_matches_set_oracle(sets in prop::collection::vec(doc_ids(), 4)) {
        let collections: Vec<(String, Vec<String>)> = ["de", "en", "es", "nl"]
            .iter()
            .map(|l| l.to_string())
            .zip(sets.clone())
            .collect();
        let oracle = sets
            .iter()
            .map(|s| s.iter().cloned().collect::<BTreeSet<_>>())
            .reduce(|a, b| &a & &b)
            .unwrap();
        match intersect_documents(&collections) {
            Ok(manifest) => {
                prop_assert_eq!(manifest.documents, oracle.into_iter().collect::<Vec<_>>());
                prop_assert_eq!(manifest.languages, ["de", "en", "es", "nl"]);
            }
            Err(e) => {
                prop_assert!(oracle.is_empty());
                prop_assert!(e.to_string().contains("empty intersection"));
            }
        }
        // Order of languages does not matter.
        let mut reversed = collections.clone();
        reversed.reverse();
        prop_assert_eq!(
            intersect_documents(&collections).ok(),
            intersect_documents(&reversed).ok()
        );
    }

    #[test]
    fn tokens_are_lowercase_and_clean(text in "[A-Za-zÄÖÜäöü0-9 .,!?'\\-\n]{0,200}") {
        for sentence in tokenize(&text) {
            prop_assert!(!sentence.is_empty());
            for token in sentence.split(' ') {
                prop_assert!(!token.is_empty());
                prop_assert_eq!(token.to_lowercase(), token);
                prop_assert!(token.chars().next().unwrap().is_alphanumeric());
                prop_assert!(token.chars().last().unwrap().is_alphanumeric());
            }
        }
    }
}

#[test]
fn tokenizer_examples() {
    assert_eq!(
        tokenize("Der Tisch ist hart. Die Tabelle ist weich!\n\nIt's 3.5 well-known"),
        ["der tisch ist hart", "die tabelle ist weich", "it's 3.5 well-known"]
    );
}

#[test]
fn intersection_errors() {
    let one = [("en", vec!["a"])];
    assert!(intersect_documents(&one).is_err());
    let dup = [("en", vec!["a"]), ("en", vec!["a"])];
    assert!(intersect_documents(&dup).is_err());
    let empty = [("en", vec!["a"]), ("de", vec![])];
    assert!(intersect_documents(&empty).is_err());
}

fn write_docs(root: &Path, lang: &str, docs: &[(&str, &str)]) {
    let dir = root.join(lang);
    fs::create_dir_all(&dir).unwrap();
    for (id, text) in docs {
        fs::write(dir.join(format!("{id}.txt")), text).unwrap();
    }
}

#[test]
fn prepares_parallel_corpora() {
    let input = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    write_docs(input.path(), "en", &[("a", "The sun is hot. The moon is cold."), ("b", "Only English.")]);
    write_docs(input.path(), "de", &[("a", "Die Sonne ist heiß. Der Mond ist kalt."), ("c", "Nur Deutsch.")]);
    let options = PrepareOptions {
        tagger_input: true,
        ..PrepareOptions::default()
    };
    let manifest = prepare_corpus(input.path(), out.path(), &options).unwrap();
    assert_eq!(manifest.documents, ["a"]);
    assert_eq!(manifest.counts, BTreeMap::from([("de".into(), 8), ("en".into(), 8)]));
    let de = fs::read_to_string(out.path().join("de.raw.txt")).unwrap();
    assert_eq!(de, "die sonne ist heiß\nder mond ist kalt\n");
    let tagger = fs::read_to_string(out.path().join("de.tagger-input.txt")).unwrap();
    assert_eq!(tagger.lines().filter(|l| *l == "<s>").count(), 2);
    assert!(out.path().join("manifest.json").exists());
}

#[test]
fn tagger_output_is_parsed_with_boundaries() {
    let items = parse_tagger_output(FIXTURE).unwrap();
    let boundaries = items.iter().filter(|i| matches!(i, TaggerItem::Boundary)).count();
    assert_eq!(boundaries, 4);
    let TaggerItem::Token(first) = &items[1] else { panic!() };
    assert_eq!((first.surface.as_str(), first.pos.as_str(), first.lemma.as_str()), ("Der", "ART", "die"));

    match read_tagger_output("a\tNN\ta\nb\tNN\n".as_bytes()) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("{other:?}"),
    }
}

#[test]
fn scrubbing_leaves_no_rule_keys() {
    let items = parse_tagger_output(FIXTURE).unwrap();
    let rules = ScrubRules::builtin("de").unwrap();
    let out = lemmatize_corpus(&items, &rules);
    assert!(residual_rule_keys(&out.lines, &rules).is_empty());
    assert_eq!((out.tokens_in, out.tokens_out), (30, 30));
    assert_eq!(out.lines.len(), 5);
    assert_eq!(out.lines[0], "d tisch sein hart");
    assert_eq!(out.lines[2], "pron3 geben pron3 ein schlüssel und pron3 danken pron3");
    assert!(out.lines[3].ends_with("vater zugspitzbahn"));
    let total: usize = out.lines.iter().map(|l| l.split(' ').count()).sum();
    assert_eq!(total as u64, out.tokens_out);
}

#[test]
fn surface_rules_catch_what_the_lemma_hides() {
    let rules = ScrubRules::parse("ihr\tpron3\nsie\tpron3\n", "de", MatchLevel::Surface).unwrap();
    let items = read_tagger_output("Sie\tPPER\t<unknown>\nsieht\tVVFIN\tsehen\nihr\tPPOSAT\tihr|ihre\n".as_bytes()).unwrap();
    let out = lemmatize_corpus(&items, &rules);
    assert_eq!(out.lines, ["pron3 sehen pron3"]);
}

#[test]
fn rule_files_are_validated() {
    let chain = ScrubRules::parse("sie\ter\ner\tpron3\n", "de", MatchLevel::Lemma).unwrap_err();
    assert!(chain.to_string().contains("rule-chain violation"), "{chain}");
    let conflict = ScrubRules::parse("sie\ter\nsie\tpron3\n", "de", MatchLevel::Lemma).unwrap_err();
    assert!(matches!(conflict, Error::Parse { line: 2, .. }));
    assert!(ScrubRules::parse("a\tb c\n", "de", MatchLevel::Lemma).is_err());
    for lang in ["en", "nl", "de", "es"] {
        assert!(!ScrubRules::builtin(lang).unwrap().is_empty(), "{lang}");
    }
}
