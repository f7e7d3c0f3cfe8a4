use std::collections::BTreeMap;

use embias::report::{load_aggregate, RunReport};
use embias::weat::{aggregate, Labels, WeatMethod};
use embias::{AggregateResult, CorpusVersion, EmbeddingMeta, WeatResult};

fn aggregate_of(lang: &str, version: CorpusVersion, spec: &str, statistics: &[f64]) -> AggregateResult {
    let runs = statistics
        .iter()
        .enumerate()
        .map(|(seed, &statistic)| WeatResult {
            spec_name: spec.to_owned(),
            labels: Labels::default(),
            statistic,
            effect_size: statistic / 2.0,
            p_value: 0.5,
            method: WeatMethod::Exact,
            n_partitions_evaluated: 70,
            per_word: Default::default(),
            embedding_meta: EmbeddingMeta {
                language: lang.to_owned(),
                corpus_version: version,
                seed: seed as u64,
                source: String::new(),
            },
            oov_dropped: vec![],
        })
        .collect();
    aggregate(runs).unwrap()
}

/// `(data-mts, height)` of every bar.
fn bars(svg: &str) -> Vec<(f64, f64)> {
    let attr = |tag: &str, name: &str| -> f64 {
        let start = tag.find(&format!(" {name}=\"")).unwrap() + name.len() + 3;
        let end = start + tag[start..].find('"').unwrap();
        tag[start..end].parse().unwrap()
    };
    svg.split("<rect")
        .filter(|tag| tag.contains("class=\"bar\""))
        .map(|tag| (attr(tag, "data-mts"), attr(tag, "height")))
        .collect()
}

fn sample() -> Vec<AggregateResult> {
    use CorpusVersion::*;
    vec![
        aggregate_of("en", Raw, "career-family/iat", &[0.6, 0.62]),
        aggregate_of("en", Lemmatized, "career-family/iat", &[0.3]),
        aggregate_of("de", Raw, "career-family/iat", &[1.5, 1.56]),
        aggregate_of("de", Raw, "masculine-feminine/objects", &[2.62]),
        aggregate_of("de", Lemmatized, "masculine-feminine/objects", &[0.15]),
        aggregate_of("es", Raw, "career-family/masculine", &[-0.03]),
    ]
}

#[test]
fn bar_heights_are_proportional() {
    let report = RunReport::from_aggregates(&sample(), BTreeMap::new()).unwrap();
    let bars = bars(&report.to_svg());
    assert_eq!(bars.len(), 6);
    let scale = bars[0].1 / bars[0].0.abs();
    for (mts, height) in bars {
        assert!((height - scale * mts.abs()).abs() <= 0.005 * scale * mts.abs(), "{mts} -> {height}");
    }
}

#[test]
fn tables_round_to_three_decimals() {
    let aggregates = &sample()[..2];
    let report = RunReport::from_aggregates(aggregates, BTreeMap::new()).unwrap();
    let tsv = report.to_tsv();
    let lines: Vec<&str> = tsv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], "language\tversion\tspec\tm.t.s.\tm.e.s.\tm.p.v.\tn_runs");
    assert_eq!(lines[1], "en\traw\tcareer-family/iat\t0.610\t0.305\t0.500\t2");
    assert_eq!(lines[2], "en\tlemmatized\tcareer-family/iat\t0.300\t0.150\t0.500\t1");
    assert!(report.to_markdown().contains("| en | raw | career-family/iat | 0.610 |"));
}

#[test]
fn persisted_aggregates_give_the_same_report() {
    let dir = tempfile::tempdir().unwrap();
    let aggregates = sample();
    let mut loaded = Vec::new();
    for (i, a) in aggregates.iter().enumerate() {
        let path = dir.path().join(format!("aggregate.{i}.json"));
        std::fs::write(&path, serde_json::to_string_pretty(a).unwrap()).unwrap();
        loaded.push(load_aggregate(&path).unwrap());
    }
    assert_eq!(loaded, aggregates);
    let direct = RunReport::from_aggregates(&aggregates, BTreeMap::new()).unwrap();
    let reloaded = RunReport::from_aggregates(&loaded, BTreeMap::new()).unwrap();
    assert_eq!(direct.to_svg(), reloaded.to_svg());
    assert_eq!(direct.to_tsv(), reloaded.to_tsv());
}
