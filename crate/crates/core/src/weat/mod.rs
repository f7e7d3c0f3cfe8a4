//! Word Embedding Association Test.
//!
//! For target sets X, Y and attribute sets A, B the differential association
//! of a word is `s(w, A, B) = mean_a cos(w, a) - mean_b cos(w, b)`, the test
//! statistic is `S = sum_x s(x) - sum_y s(y)` and the effect size is the
//! difference of the per-set means of `s` divided by the population standard
//! deviation of `s` over X ∪ Y. Positive values mean X associates with A and
//! Y with B. Significance comes from a one-sided permutation test over
//! equal-size repartitions of X ∪ Y (see [`permutation`]).

pub mod permutation;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::embedding::{CorpusVersion, EmbeddingMeta, EmbeddingSet, OovPolicy};
use crate::error::{Error, Result};
use crate::stimuli::StimulusSpec;

pub use permutation::{permutation_test, PermutationConfig, PermutationMode, PermutationOutcome, WeatMethod};

/// Names of the four word sets, carried through to every result.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Labels {
    #[serde(rename = "X")]
    pub x: String,
    #[serde(rename = "Y")]
    pub y: String,
    #[serde(rename = "A")]
    pub a: String,
    #[serde(rename = "B")]
    pub b: String,
}

/// Validated vectors for one comparison, in double precision.
#[derive(Debug, Clone)]
pub struct WeatInput {
    x: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    pub labels: Labels,
}

impl WeatInput {
    pub fn new(
        x: Vec<Vec<f64>>,
        y: Vec<Vec<f64>>,
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        labels: Labels,
    ) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::Invalid(format!(
                "target sets must be non-empty and of equal size (|X| = {}, |Y| = {})",
                x.len(),
                y.len()
            )));
        }
        if a.is_empty() || b.is_empty() {
            return Err(Error::Invalid("attribute sets must be non-empty".into()));
        }
        let dim = x[0].len();
        for (name, set) in [("X", &x), ("Y", &y), ("A", &a), ("B", &b)] {
            for (i, v) in set.iter().enumerate() {
                if v.len() != dim || dim == 0 {
                    return Err(Error::Invalid(format!(
                        "{name}[{i}] has dimension {}, expected {dim}",
                        v.len()
                    )));
                }
                if v.iter().any(|c| !c.is_finite()) {
                    return Err(Error::Invalid(format!("{name}[{i}] has non-finite components")));
                }
                if norm(v) == 0.0 {
                    return Err(Error::Invalid(format!("{name}[{i}] is the zero vector")));
                }
            }
        }
        Ok(WeatInput { x, y, a, b, labels })
    }

    pub fn from_f32<'a, I>(x: I, y: I, a: I, b: I, labels: Labels) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f32]>,
    {
        fn widen<'a>(set: impl IntoIterator<Item = &'a [f32]>) -> Vec<Vec<f64>> {
            set.into_iter()
                .map(|v| v.iter().map(|&c| f64::from(c)).collect())
                .collect()
        }
        WeatInput::new(widen(x), widen(y), widen(a), widen(b), labels)
    }

    pub fn x(&self) -> &[Vec<f64>] {
        &self.x
    }

    pub fn y(&self) -> &[Vec<f64>] {
        &self.y
    }

    pub fn a(&self) -> &[Vec<f64>] {
        &self.a
    }

    pub fn b(&self) -> &[Vec<f64>] {
        &self.b
    }

    /// Number of words in each target set.
    pub fn target_size(&self) -> usize {
        self.x.len()
    }

    /// The same comparison with X and Y exchanged.
    pub fn swap_targets(&self) -> Self {
        let mut labels = self.labels.clone();
        std::mem::swap(&mut labels.x, &mut labels.y);
        WeatInput {
            x: self.y.clone(),
            y: self.x.clone(),
            a: self.a.clone(),
            b: self.b.clone(),
            labels,
        }
    }

    /// The same comparison with A and B exchanged.
    pub fn swap_attributes(&self) -> Self {
        let mut labels = self.labels.clone();
        std::mem::swap(&mut labels.a, &mut labels.b);
        WeatInput {
            x: self.x.clone(),
            y: self.y.clone(),
            a: self.b.clone(),
            b: self.a.clone(),
            labels,
        }
    }

    /// Differential associations of X followed by Y.
    pub fn associations(&self) -> Vec<f64> {
        self.x
            .iter()
            .chain(&self.y)
            .map(|w| association(w, &self.a, &self.b))
            .collect()
    }
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Cosine similarity, computed in double precision.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Invalid(format!(
            "dimension mismatch: {} vs {}",
            u.len(),
            v.len()
        )));
    }
    let denom = norm(u) * norm(v);
    if denom == 0.0 {
        return Err(Error::Invalid("cosine similarity of a zero-norm vector".into()));
    }
    Ok((dot(u, v) / denom).clamp(-1.0, 1.0))
}

/// `s(w, A, B)`: mean similarity to A minus mean similarity to B.
pub fn differential_association(w: &[f64], a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Invalid("attribute sets must be non-empty".into()));
    }
    let mean = |set: &[Vec<f64>]| -> Result<f64> {
        let mut total = 0.0;
        for v in set {
            total += cosine_similarity(w, v)?;
        }
        Ok(total / set.len() as f64)
    };
    Ok(mean(a)? - mean(b)?)
}

// Inputs are validated at construction, so the cosine cannot fail here.
fn association(w: &[f64], a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    differential_association(w, a, b).expect("validated WEAT input")
}

fn sum_associations(set: &[Vec<f64>], a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    set.iter().map(|w| association(w, a, b)).sum()
}

/// `S(X, Y, A, B) = sum_x s(x) - sum_y s(y)`.
pub fn test_statistic(input: &WeatInput) -> f64 {
    sum_associations(&input.x, &input.a, &input.b) - sum_associations(&input.y, &input.a, &input.b)
}

/// Effect size with a population (divide by N) standard deviation, so `|d| <= 2`.
pub fn effect_size(input: &WeatInput) -> Result<f64> {
    effect_size_from_associations(&input.associations(), input.target_size())
}

/// Effect size from associations laid out as X followed by Y, `n` words each.
pub(crate) fn effect_size_from_associations(s: &[f64], n: usize) -> Result<f64> {
    debug_assert_eq!(s.len(), 2 * n);
    let (sx, sy) = s.split_at(n);
    let mean_x = sx.iter().sum::<f64>() / n as f64;
    let mean_y = sy.iter().sum::<f64>() / n as f64;
    let mean = s.iter().sum::<f64>() / s.len() as f64;
    let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / s.len() as f64;
    let std = var.sqrt();
    if std.is_nan() || std <= 0.0 {
        return Err(Error::Numeric(
            "effect size undefined: differential associations have zero standard deviation".into(),
        ));
    }
    Ok((mean_x - mean_y) / std)
}

/// Options for a complete test run.
#[derive(Debug, Clone, Default)]
pub struct WeatConfig {
    pub permutation: PermutationConfig,
    pub oov: OovPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatResult {
    pub spec_name: String,
    pub labels: Labels,
    pub statistic: f64,
    pub effect_size: f64,
    pub p_value: f64,
    pub method: WeatMethod,
    pub n_partitions_evaluated: u64,
    /// Differential association of every target word; X words first, then Y words.
    pub per_word: IndexMap<String, f64>,
    pub embedding_meta: EmbeddingMeta,
    /// Stimulus words dropped because they are missing from the vocabulary.
    #[serde(default)]
    pub oov_dropped: Vec<String>,
}

/// Words paired with their differential association.
pub type WordScores<'a> = Vec<(&'a str, f64)>;

impl WeatResult {
    /// Per-word associations split into (X, Y).
    pub fn split_per_word(&self) -> (WordScores<'_>, WordScores<'_>) {
        let n = self.per_word.len() / 2;
        let all: Vec<(&str, f64)> = self.per_word.iter().map(|(w, s)| (w.as_str(), *s)).collect();
        let (x, y) = all.split_at(n);
        (x.to_vec(), y.to_vec())
    }
}

/// Runs one comparison against one embedding set.
pub fn run_weat(embeddings: &EmbeddingSet, spec: &StimulusSpec, config: &WeatConfig) -> Result<WeatResult> {
    let x = embeddings.lookup_all(&spec.x.words, config.oov);
    let y = embeddings.lookup_all(&spec.y.words, config.oov);
    let a = embeddings.lookup_all(&spec.a.words, config.oov);
    let b = embeddings.lookup_all(&spec.b.words, config.oov);
    if config.oov == OovPolicy::Strict {
        let missing: Vec<String> = [&x, &y, &a, &b]
            .into_iter()
            .filter_map(|r| match r {
                Err(Error::OutOfVocabulary { words }) => Some(words.clone()),
                _ => None,
            })
            .flatten()
            .collect();
        if !missing.is_empty() {
            return Err(Error::OutOfVocabulary { words: missing });
        }
    }
    let (x, y, a, b) = (x?, y?, a?, b?);

    let mut dropped = Vec::new();
    for (name, set) in [("X", &x), ("Y", &y), ("A", &a), ("B", &b)] {
        if set.found.is_empty() {
            return Err(Error::Invalid(format!(
                "no word of set {name} of '{}' is in the vocabulary",
                spec.name
            )));
        }
        dropped.extend(set.missing.iter().cloned());
    }
    if x.found.len() != y.found.len() {
        return Err(Error::Invalid(format!(
            "target sets of '{}' are unequal after skipping out-of-vocabulary words ({} vs {})",
            spec.name,
            x.found.len(),
            y.found.len()
        )));
    }

    let labels = spec.labels();
    let input = WeatInput::from_f32(x.vectors(), y.vectors(), a.vectors(), b.vectors(), labels.clone())?;
    let associations = input.associations();
    let n = input.target_size();
    let statistic = associations[..n].iter().sum::<f64>() - associations[n..].iter().sum::<f64>();
    let effect_size = effect_size_from_associations(&associations, n)?;
    let outcome = permutation::test_associations(&associations, n, &config.permutation)?;

    let per_word = x
        .found
        .iter()
        .chain(&y.found)
        .zip(&associations)
        .map(|((word, _), s)| ((*word).to_owned(), *s))
        .collect();

    Ok(WeatResult {
        spec_name: spec.name.clone(),
        labels,
        statistic,
        effect_size,
        p_value: outcome.p_value,
        method: outcome.method,
        n_partitions_evaluated: outcome.n_partitions_evaluated,
        per_word,
        embedding_meta: embeddings.meta().clone(),
        oov_dropped: dropped,
    })
}

/// Means over an ensemble of runs of the same comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    pub spec_name: String,
    pub language: String,
    pub corpus_version: CorpusVersion,
    pub labels: Labels,
    pub mean_statistic: f64,
    pub mean_effect_size: f64,
    pub mean_p_value: f64,
    pub n_runs: usize,
    pub per_run: Vec<WeatResult>,
}

pub fn aggregate(results: Vec<WeatResult>) -> Result<AggregateResult> {
    let Some(first) = results.first() else {
        return Err(Error::Invalid("cannot aggregate an empty result list".into()));
    };
    for r in &results[1..] {
        if r.labels != first.labels || r.spec_name != first.spec_name {
            return Err(Error::Invalid(format!(
                "label mismatch: cannot aggregate '{}' {:?} with '{}' {:?}",
                first.spec_name, first.labels, r.spec_name, r.labels
            )));
        }
        let (m, m0) = (&r.embedding_meta, &first.embedding_meta);
        if m.language != m0.language || m.corpus_version != m0.corpus_version {
            return Err(Error::Invalid(format!(
                "cannot aggregate runs from {}/{} with {}/{}",
                m0.language, m0.corpus_version, m.language, m.corpus_version
            )));
        }
    }
    let n = results.len() as f64;
    // Shifted by the first run, so identical runs average to exactly that run.
    let mean = |f: fn(&WeatResult) -> f64| {
        let base = f(&results[0]);
        base + results.iter().map(|r| f(r) - base).sum::<f64>() / n
    };
    Ok(AggregateResult {
        spec_name: first.spec_name.clone(),
        language: first.embedding_meta.language.clone(),
        corpus_version: first.embedding_meta.corpus_version,
        labels: first.labels.clone(),
        mean_statistic: mean(|r| r.statistic),
        mean_effect_size: mean(|r| r.effect_size),
        mean_p_value: mean(|r| r.p_value),
        n_runs: results.len(),
        per_run: results,
    })
}
