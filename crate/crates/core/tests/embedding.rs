use std::fs;

use embias::embedding::{meta_path, read_text};
use embias::{CorpusVersion, EmbeddingMeta, EmbeddingSet, Error};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_set(rng: &mut ChaCha8Rng, words: usize, dim: usize) -> EmbeddingSet {
    let vocab = (0..words).map(|i| format!("w{i}")).collect();
    let matrix = (0..words * dim).map(|_| rng.random_range(-5.0f32..5.0)).collect();
    EmbeddingSet::new(vocab, matrix, dim, EmbeddingMeta::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn save_load_save_is_byte_identical(seed in any::<u64>()) {
        let dir = tempfile::tempdir().unwrap();
        let set = random_set(&mut ChaCha8Rng::seed_from_u64(seed), 50, 20);
        let first = dir.path().join("first.vec");
        let second = dir.path().join("second.vec");
        set.save_text_format(&first).unwrap();
        let loaded = EmbeddingSet::load_text_format(&first).unwrap();
        prop_assert_eq!(&loaded.words().collect::<Vec<_>>(), &set.words().collect::<Vec<_>>());
        loaded.save_text_format(&second).unwrap();
        prop_assert_eq!(fs::read(&first).unwrap(), fs::read(&second).unwrap());
    }
}

#[test]
fn thousand_words_survive_a_round_trip() {
    let set = random_set(&mut ChaCha8Rng::seed_from_u64(9), 1000, 16);
    let mut buf = Vec::new();
    set.write_text(&mut buf).unwrap();
    let back = read_text(buf.as_slice()).unwrap();
    assert_eq!(back.len(), 1000);
    for (i, word) in set.words().enumerate() {
        let max_err = set
            .row(i)
            .iter()
            .zip(back.vector(word).unwrap())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(max_err <= 1e-6, "{word}: {max_err}");
    }
}

#[test]
fn provenance_travels_in_the_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let meta = EmbeddingMeta {
        language: "de".into(),
        corpus_version: CorpusVersion::Lemmatized,
        seed: 42,
        source: "unit test".into(),
    };
    let set = random_set(&mut ChaCha8Rng::seed_from_u64(1), 3, 4).with_meta(meta.clone());
    let path = dir.path().join("vectors.vec");
    set.save_text_format(&path).unwrap();
    assert!(meta_path(&path).exists());
    assert_eq!(EmbeddingSet::load_text_format(&path).unwrap().meta(), &meta);

    // Without a sidecar the file name is the only provenance.
    let named = dir.path().join("es.raw.seed7.vec");
    fs::copy(&path, &named).unwrap();
    let meta = EmbeddingSet::load_text_format(&named).unwrap().meta().clone();
    assert_eq!((meta.language.as_str(), meta.corpus_version, meta.seed), ("es", CorpusVersion::Raw, 7));
}

#[test]
fn malformed_files_report_the_line() {
    let cases = [
        ("2 2\na 1 2\nb 1\n", 3),
        ("2 2\na 1 2\na 3 4\n", 3),
        ("1 2\na 1 nan\n", 2),
        ("1 2\na 1 x\n", 2),
        ("3 2\na 1 2\nb 3 4\n", 4),
    ];
    for (text, line) in cases {
        match read_text(text.as_bytes()) {
            Err(Error::Parse { line: got, .. }) => assert_eq!(got, line, "{text:?}"),
            other => panic!("{text:?}: {other:?}"),
        }
    }
    assert!(read_text("".as_bytes()).is_err());
    assert!(read_text("1 two\n".as_bytes()).is_err());
}
