//! CBOW word2vec with negative sampling.
//!
//! Single-threaded and deterministic: the same corpus, configuration and seed
//! always produce bit-identical vectors. The exported vectors are the input
//! (context) embeddings.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingMeta, EmbeddingSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub lr_initial: f64,
    pub lr_min: f64,
    pub min_count: u64,
    /// Frequent-word subsampling threshold; 0 disables subsampling.
    pub subsample_t: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            dim: 100,
            window: 5,
            negatives: 5,
            epochs: 5,
            lr_initial: 0.025,
            lr_min: 1e-4,
            min_count: 5,
            subsample_t: 1e-3,
            seed: 1,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dim", self.dim as u64),
            ("window", self.window as u64),
            ("negatives", self.negatives as u64),
            ("epochs", self.epochs as u64),
            ("min_count", self.min_count),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if !(self.lr_min > 0.0 && self.lr_initial > self.lr_min && self.lr_initial.is_finite()) {
            return Err(Error::Config(format!(
                "learning rates must satisfy lr_initial > lr_min > 0 (got {} and {})",
                self.lr_initial, self.lr_min
            )));
        }
        if !(self.subsample_t >= 0.0 && self.subsample_t.is_finite()) {
            return Err(Error::Config(format!(
                "subsample_t must be non-negative, got {}",
                self.subsample_t
            )));
        }
        Ok(())
    }

    /// Sets one field from its textual name and value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("cannot parse {key} = '{value}'")))
        }
        match key {
            "dim" => self.dim = num(key, value)?,
            "window" => self.window = num(key, value)?,
            "negatives" => self.negatives = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "lr_initial" => self.lr_initial = num(key, value)?,
            "lr_min" => self.lr_min = num(key, value)?,
            "min_count" => self.min_count = num(key, value)?,
            "subsample_t" => self.subsample_t = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown training option '{key}'"))),
        }
        Ok(())
    }

    /// Overlays a flat `key = value` file (with `#` comments) on this config.
    pub fn apply_key_values(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {}: expected key=value, got '{line}'", i + 1)));
            };
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    /// One-line summary, used as embedding provenance.
    pub fn describe(&self) -> String {
        let mut s = String::from("cbow-negative-sampling");
        let _ = write!(
            s,
            " dim={} window={} negatives={} epochs={} lr_initial={} lr_min={} min_count={} subsample_t={} seed={}",
            self.dim,
            self.window,
            self.negatives,
            self.epochs,
            self.lr_initial,
            self.lr_min,
            self.min_count,
            self.subsample_t,
            self.seed
        );
        s
    }
}

/// Retained words with counts and the negative-sampling distribution.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    words: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
    total: u64,
    cumulative: Vec<f64>,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn count(&self, word: &str) -> Option<u64> {
        self.index_of(word).map(|i| self.counts[i])
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// Number of corpus tokens that belong to retained words.
    pub fn total_tokens(&self) -> u64 {
        self.total
    }

    /// Cumulative negative-sampling distribution; the last entry is 1.
    pub fn cumulative_distribution(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn sample_negative<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.words.len() - 1)
    }
}

/// Counts whitespace-separated tokens and keeps words seen at least
/// `min_count` times, ordered by descending count then lexicographically.
pub fn build_vocab<I, S>(lines: I, min_count: u64) -> Result<Vocabulary>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut counts: HashMap<String, u64> = HashMap::new();
    for line in lines {
        for token in line.as_ref().split_whitespace() {
            if let Some(c) = counts.get_mut(token) {
                *c += 1;
            } else {
                counts.insert(token.to_owned(), 1);
            }
        }
    }
    let mut kept: Vec<(String, u64)> = counts.into_iter().filter(|(_, c)| *c >= min_count).collect();
    if kept.is_empty() {
        return Err(Error::Invalid(format!(
            "no word occurs at least {min_count} times; vocabulary is empty"
        )));
    }
    kept.sort_by(|(wa, ca), (wb, cb)| cb.cmp(ca).then_with(|| wa.cmp(wb)));
    let (words, counts): (Vec<String>, Vec<u64>) = kept.into_iter().unzip();
    let probabilities = negative_sampling_distribution(&counts)?;
    let mut acc = 0.0;
    let mut cumulative: Vec<f64> = probabilities
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect();
    *cumulative.last_mut().expect("non-empty") = 1.0;
    let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
    Ok(Vocabulary {
        total: counts.iter().sum(),
        words,
        counts,
        index,
        cumulative,
    })
}

/// Smoothed unigram distribution `P(w) ∝ count(w)^0.75`.
pub fn negative_sampling_distribution(counts: &[u64]) -> Result<Vec<f64>> {
    if counts.is_empty() {
        return Err(Error::Invalid("negative sampling over an empty vocabulary".into()));
    }
    let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Probability of keeping a token whose relative frequency is `z`.
pub fn subsample_keep_probability(z: f64, t: f64) -> f64 {
    ((z / t).sqrt() + 1.0) * (t / z)
}

fn keep_probability(z: f64, t: f64) -> f64 {
    if t <= 0.0 {
        1.0
    } else {
        subsample_keep_probability(z, t).min(1.0)
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `ln σ(x)` without overflow.
fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Input (context) and output vectors of a CBOW model, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CbowModel {
    dim: usize,
    input: Vec<f64>,
    output: Vec<f64>,
}

/// Dense gradients of the CBOW loss for one example.
#[derive(Debug, Clone)]
pub struct CbowGradients {
    pub loss: f64,
    pub input: Vec<f64>,
    pub output: Vec<f64>,
}

impl CbowModel {
    /// Input vectors uniform in `[-0.5/dim, 0.5/dim]`, output vectors zero.
    pub fn new<R: Rng>(vocab_size: usize, dim: usize, rng: &mut R) -> Self {
        let scale = 1.0 / dim as f64;
        let input = (0..vocab_size * dim)
            .map(|_| (rng.random::<f64>() - 0.5) * scale)
            .collect();
        CbowModel {
            dim,
            input,
            output: vec![0.0; vocab_size * dim],
        }
    }

    pub fn from_parts(dim: usize, input: Vec<f64>, output: Vec<f64>) -> Self {
        assert!(dim > 0 && input.len().is_multiple_of(dim) && input.len() == output.len());
        CbowModel { dim, input, output }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab_size(&self) -> usize {
        self.input.len() / self.dim
    }

    pub fn input(&self) -> &[f64] {
        &self.input
    }

    pub fn input_mut(&mut self) -> &mut [f64] {
        &mut self.input
    }

    pub fn output(&self) -> &[f64] {
        &self.output
    }

    pub fn output_mut(&mut self) -> &mut [f64] {
        &mut self.output
    }

    fn input_row(&self, i: usize) -> &[f64] {
        &self.input[i * self.dim..(i + 1) * self.dim]
    }

    fn output_row(&self, i: usize) -> &[f64] {
        &self.output[i * self.dim..(i + 1) * self.dim]
    }

    fn hidden(&self, context: &[usize]) -> Vec<f64> {
        let mut h = vec![0.0; self.dim];
        for &c in context {
            for (hk, v) in h.iter_mut().zip(self.input_row(c)) {
                *hk += v;
            }
        }
        let inv = 1.0 / context.len() as f64;
        h.iter_mut().for_each(|v| *v *= inv);
        h
    }

    fn targets<'a>(center: usize, negatives: &'a [usize]) -> impl Iterator<Item = (usize, f64)> + 'a {
        std::iter::once((center, 1.0)).chain(negatives.iter().map(|&k| (k, 0.0)))
    }

    /// Negative-sampling loss `-ln σ(u_o·h) - Σ_k ln σ(-u_k·h)` with `h` the
    /// mean of the context input vectors.
    pub fn loss(&self, context: &[usize], center: usize, negatives: &[usize]) -> f64 {
        let h = self.hidden(context);
        Self::targets(center, negatives)
            .map(|(t, label)| {
                let f = dot(self.output_row(t), &h);
                if label > 0.0 {
                    -log_sigmoid(f)
                } else {
                    -log_sigmoid(-f)
                }
            })
            .sum()
    }

    /// Gradient of [`CbowModel::loss`] with respect to every parameter.
    pub fn gradients(&self, context: &[usize], center: usize, negatives: &[usize]) -> CbowGradients {
        let dim = self.dim;
        let h = self.hidden(context);
        let mut input = vec![0.0; self.input.len()];
        let mut output = vec![0.0; self.output.len()];
        let mut grad_h = vec![0.0; dim];
        let mut loss = 0.0;
        for (t, label) in Self::targets(center, negatives) {
            let u = self.output_row(t);
            let f = dot(u, &h);
            loss -= if label > 0.0 { log_sigmoid(f) } else { log_sigmoid(-f) };
            let g = sigmoid(f) - label;
            axpy(g, &h, &mut output[t * dim..(t + 1) * dim]);
            axpy(g, u, &mut grad_h);
        }
        let inv = 1.0 / context.len() as f64;
        for &c in context {
            axpy(inv, &grad_h, &mut input[c * dim..(c + 1) * dim]);
        }
        CbowGradients { loss, input, output }
    }

    /// One SGD step on a single (context, center) example; returns the loss
    /// before the update. Every gradient is taken at the pre-update parameters.
    pub fn step(&mut self, context: &[usize], center: usize, negatives: &[usize], lr: f64) -> f64 {
        let dim = self.dim;
        let h = self.hidden(context);
        let mut neu1e = vec![0.0; dim];
        let mut scaled = Vec::with_capacity(negatives.len() + 1);
        let mut loss = 0.0;
        for (t, label) in Self::targets(center, negatives) {
            let u = self.output_row(t);
            let f = dot(u, &h);
            loss -= if label > 0.0 { log_sigmoid(f) } else { log_sigmoid(-f) };
            let g = (label - sigmoid(f)) * lr;
            axpy(g, u, &mut neu1e);
            scaled.push((t, g));
        }
        for (t, g) in scaled {
            axpy(g, &h, &mut self.output[t * dim..(t + 1) * dim]);
        }
        let inv = 1.0 / context.len() as f64;
        for &c in context {
            axpy(inv, &neu1e, &mut self.input[c * dim..(c + 1) * dim]);
        }
        loss
    }
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Learning rate after `progress` (0..=1) of the planned updates.
pub fn learning_rate(config: &TrainingConfig, progress: f64) -> f64 {
    let lr = config.lr_initial - (config.lr_initial - config.lr_min) * progress.clamp(0.0, 1.0);
    lr.max(config.lr_min)
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub embeddings: EmbeddingSet,
    /// Mean loss per update for each epoch.
    pub epoch_losses: Vec<f64>,
    pub updates: u64,
}

/// Trains on in-memory sentences (one per element, tokens space-separated).
pub fn train_lines<S: AsRef<str>>(lines: &[S], config: &TrainingConfig) -> Result<TrainOutput> {
    config.validate()?;
    let vocab = build_vocab(lines, config.min_count)?;
    let sentences: Vec<Vec<u32>> = lines
        .iter()
        .map(|line| {
            line.as_ref()
                .split_whitespace()
                .filter_map(|t| vocab.index_of(t).map(|i| i as u32))
                .collect()
        })
        .filter(|s: &Vec<u32>| !s.is_empty())
        .collect();
    train_indexed(&vocab, &sentences, config)
}

/// Trains on a corpus file with one sentence per line.
pub fn train(corpus: impl AsRef<Path>, config: &TrainingConfig) -> Result<TrainOutput> {
    let path = corpus.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let lines = BufReader::new(file)
        .lines()
        .collect::<std::io::Result<Vec<String>>>()
        .map_err(|e| Error::io(path, e))?;
    let mut out = train_lines(&lines, config)?;
    let meta = EmbeddingMeta {
        source: format!("{} corpus={}", config.describe(), path.display()),
        ..out.embeddings.meta().clone()
    };
    out.embeddings = out.embeddings.with_meta(meta);
    Ok(out)
}

fn train_indexed(vocab: &Vocabulary, sentences: &[Vec<u32>], config: &TrainingConfig) -> Result<TrainOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = CbowModel::new(vocab.len(), config.dim, &mut rng);

    let total = vocab.total_tokens() as f64;
    let keep: Vec<f64> = vocab
        .counts()
        .iter()
        .map(|&c| keep_probability(c as f64 / total, config.subsample_t))
        .collect();
    let planned = total * config.epochs as f64;

    let mut processed = 0u64;
    let mut updates = 0u64;
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut kept = Vec::new();
    let mut context = Vec::with_capacity(2 * config.window);
    let mut negatives = Vec::with_capacity(config.negatives);
    for _ in 0..config.epochs {
        let mut epoch_loss = 0.0;
        let mut epoch_updates = 0u64;
        for sentence in sentences {
            let lr = learning_rate(config, processed as f64 / planned);
            processed += sentence.len() as u64;

            kept.clear();
            for &w in sentence {
                let p = keep[w as usize];
                if p >= 1.0 || rng.random::<f64>() < p {
                    kept.push(w as usize);
                }
            }
            for (pos, &center) in kept.iter().enumerate() {
                let reach = rng.random_range(1..=config.window);
                context.clear();
                let lo = pos.saturating_sub(reach);
                let hi = (pos + reach).min(kept.len() - 1);
                context.extend((lo..=hi).filter(|&j| j != pos).map(|j| kept[j]));
                if context.is_empty() {
                    continue;
                }
                negatives.clear();
                if vocab.len() > 1 {
                    while negatives.len() < config.negatives {
                        let k = vocab.sample_negative(&mut rng);
                        if k != center {
                            negatives.push(k);
                        }
                    }
                }
                epoch_loss += model.step(&context, center, &negatives, lr);
                epoch_updates += 1;
            }
        }
        updates += epoch_updates;
        epoch_losses.push(if epoch_updates > 0 {
            epoch_loss / epoch_updates as f64
        } else {
            f64::NAN
        });
    }
    if updates == 0 {
        return Err(Error::Invalid(
            "corpus has no sentence with two or more in-vocabulary tokens".into(),
        ));
    }
    if model.input().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("training diverged: non-finite vectors".into()));
    }

    let matrix = model.input().iter().map(|&v| v as f32).collect();
    let meta = EmbeddingMeta {
        seed: config.seed,
        source: config.describe(),
        ..EmbeddingMeta::default()
    };
    let embeddings = EmbeddingSet::new(vocab.words().to_vec(), matrix, config.dim, meta)?;
    Ok(TrainOutput {
        embeddings,
        epoch_losses,
        updates,
    })
}
