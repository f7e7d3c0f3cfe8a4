//! One-sided permutation test for the WEAT statistic.
//!
//! The p-value is the fraction of equal-size repartitions (X', Y') of X ∪ Y
//! whose statistic is at least the observed one. The observed partition is
//! always counted, so `p >= 1 / partitions evaluated`.
//!
//! Since `S(X', Y') = 2 * sum_{X'} s - sum_{X ∪ Y} s`, only subset sums of the
//! precomputed differential associations are needed. Exact mode enumerates
//! every n-subset of the 2n words in lexicographic order; the rank space is cut
//! into fixed ranges that workers evaluate independently, so the count does
//! not depend on scheduling. Monte Carlo mode cuts its samples into fixed
//! blocks, each drawn from its own ChaCha stream keyed by `(seed, block)`,
//! which makes the result independent of the worker count.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weat::WeatInput;

pub const DEFAULT_EXACT_CAP: u64 = 200_000;
pub const MIN_MONTE_CARLO_SAMPLES: u64 = 100;

const EXACT_CHUNK: u64 = 4096;
const MONTE_CARLO_BLOCK: u64 = 8192;

/// Relative slack under which two statistics count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PermutationMode {
    #[default]
    Exact,
    MonteCarlo(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeatMethod {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PermutationConfig {
    pub mode: PermutationMode,
    pub seed: u64,
    /// Largest number of partitions exact mode will enumerate.
    pub exact_cap: u64,
}

impl Default for PermutationConfig {
    fn default() -> Self {
        PermutationConfig {
            mode: PermutationMode::Exact,
            seed: 0,
            exact_cap: DEFAULT_EXACT_CAP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PermutationOutcome {
    pub p_value: f64,
    pub n_partitions_evaluated: u64,
    pub method: WeatMethod,
}

/// Runs the permutation test on a validated input.
pub fn permutation_test(input: &WeatInput, config: &PermutationConfig) -> Result<PermutationOutcome> {
    test_associations(&input.associations(), input.target_size(), config)
}

/// Permutation test on differential associations laid out as X then Y.
pub(crate) fn test_associations(s: &[f64], n: usize, config: &PermutationConfig) -> Result<PermutationOutcome> {
    assert_eq!(s.len(), 2 * n, "associations must cover two sets of n words");
    let observed: f64 = s[..n].iter().sum();
    let scale: f64 = s.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
    // Comparing subset sums is equivalent to comparing statistics.
    let threshold = observed - TIE_TOLERANCE * scale;

    match config.mode {
        PermutationMode::Exact => {
            let total = binomial(2 * n as u64, n as u64);
            if total > u128::from(config.exact_cap) {
                return Err(Error::PartitionCapExceeded {
                    partitions: total,
                    cap: config.exact_cap,
                });
            }
            let total = total as u64;
            let count = count_exact(s, n, total, threshold);
            Ok(PermutationOutcome {
                p_value: count as f64 / total as f64,
                n_partitions_evaluated: total,
                method: WeatMethod::Exact,
            })
        }
        PermutationMode::MonteCarlo(samples) => {
            if samples < MIN_MONTE_CARLO_SAMPLES {
                return Err(Error::Config(format!(
                    "Monte Carlo permutation test needs at least {MIN_MONTE_CARLO_SAMPLES} samples, got {samples}"
                )));
            }
            let count = count_sampled(s, n, samples, config.seed, threshold) + 1;
            Ok(PermutationOutcome {
                p_value: count as f64 / (samples + 1) as f64,
                n_partitions_evaluated: samples + 1,
                method: WeatMethod::MonteCarlo,
            })
        }
    }
}

fn count_exact(s: &[f64], n: usize, total: u64, threshold: f64) -> u64 {
    let chunks = total.div_ceil(EXACT_CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let start = chunk * EXACT_CHUNK;
            let end = (start + EXACT_CHUNK).min(total);
            let mut combo = unrank_combination(start, s.len(), n);
            let mut count = 0;
            for rank in start..end {
                let sum: f64 = combo.iter().map(|&i| s[i]).sum();
                if sum >= threshold {
                    count += 1;
                }
                if rank + 1 < end {
                    next_combination(&mut combo, s.len());
                }
            }
            count
        })
        .sum()
}

fn count_sampled(s: &[f64], n: usize, samples: u64, seed: u64, threshold: f64) -> u64 {
    let blocks = samples.div_ceil(MONTE_CARLO_BLOCK);
    (0..blocks)
        .into_par_iter()
        .map(|block| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(block);
            let draws = MONTE_CARLO_BLOCK.min(samples - block * MONTE_CARLO_BLOCK);
            let mut indices: Vec<usize> = (0..s.len()).collect();
            let mut count = 0;
            for _ in 0..draws {
                let (chosen, _) = indices.partial_shuffle(&mut rng, n);
                let sum: f64 = chosen.iter().map(|&i| s[i]).sum();
                if sum >= threshold {
                    count += 1;
                }
            }
            count
        })
        .sum()
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step.
        match acc.checked_mul(u128::from(n - i)) {
            Some(v) => acc = v / u128::from(i + 1),
            None => return u128::MAX,
        }
    }
    acc
}

/// The k-subset of `0..n` with lexicographic rank `rank`.
fn unrank_combination(mut rank: u64, n: usize, k: usize) -> Vec<usize> {
    let mut combo = Vec::with_capacity(k);
    let mut next = 0;
    for i in 0..k {
        loop {
            let remaining = binomial((n - next - 1) as u64, (k - i - 1) as u64) as u64;
            if rank < remaining {
                break;
            }
            rank -= remaining;
            next += 1;
        }
        combo.push(next);
        next += 1;
    }
    combo
}

/// Advances to the lexicographic successor; returns false after the last subset.
fn next_combination(combo: &mut [usize], n: usize) -> bool {
    let k = combo.len();
    for i in (0..k).rev() {
        if combo[i] < n - k + i {
            combo[i] += 1;
            for j in i + 1..k {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}
