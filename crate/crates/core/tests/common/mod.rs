//! Fixtures and naive reference implementations shared by the integration tests.
#![allow(dead_code)]

use embias::weat::Labels;
use embias::WeatInput;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Vectors = Vec<Vec<f64>>;

#[derive(Debug, Clone)]
pub struct Instance {
    pub x: Vectors,
    pub y: Vectors,
    pub a: Vectors,
    pub b: Vectors,
}

impl Instance {
    pub fn input(&self) -> WeatInput {
        WeatInput::new(
            self.x.clone(),
            self.y.clone(),
            self.a.clone(),
            self.b.clone(),
            Labels::default(),
        )
        .unwrap()
    }

    pub fn map(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Instance {
        let m = |set: &Vectors| set.iter().map(|v| f(v)).collect();
        Instance {
            x: m(&self.x),
            y: m(&self.y),
            a: m(&self.a),
            b: m(&self.b),
        }
    }
}

pub fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn gaussian_set(rng: &mut ChaCha8Rng, count: usize, dim: usize) -> Vectors {
    (0..count).map(|_| gaussian(rng, dim)).collect()
}

/// |X| = |Y| in 2..=5, |A|, |B| in 1..=4, dimension in 2..=10.
pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let n = rng.random_range(2..=5);
    let na = rng.random_range(1..=4);
    let nb = rng.random_range(1..=4);
    let dim = rng.random_range(2..=10);
    Instance {
        x: gaussian_set(rng, n, dim),
        y: gaussian_set(rng, n, dim),
        a: gaussian_set(rng, na, dim),
        b: gaussian_set(rng, nb, dim),
    }
}

/// Targets and attributes all isotropic Gaussian.
pub fn isotropic_instance(rng: &mut ChaCha8Rng, n: usize, m: usize, dim: usize) -> Instance {
    Instance {
        x: gaussian_set(rng, n, dim),
        y: gaussian_set(rng, n, dim),
        a: gaussian_set(rng, m, dim),
        b: gaussian_set(rng, m, dim),
    }
}

/// X and A around one axis, Y and B around another, Gaussian noise of scale `eps`.
pub fn planted_instance(rng: &mut ChaCha8Rng, n: usize, m: usize, dim: usize, eps: f64) -> Instance {
    let mut around = |axis: usize, count: usize| -> Vectors {
        (0..count)
            .map(|_| {
                let mut v: Vec<f64> = gaussian(rng, dim).iter().map(|z| z * eps).collect();
                v[axis] += 1.0;
                v
            })
            .collect()
    };
    Instance {
        x: around(0, n),
        a: around(0, m),
        y: around(1, n),
        b: around(1, m),
    }
}

fn naive_cos(u: &[f64], v: &[f64]) -> f64 {
    let mut uv = 0.0;
    let mut uu = 0.0;
    let mut vv = 0.0;
    for i in 0..u.len() {
        uv += u[i] * v[i];
        uu += u[i] * u[i];
        vv += v[i] * v[i];
    }
    uv / (uu.sqrt() * vv.sqrt())
}

fn naive_s(w: &[f64], a: &Vectors, b: &Vectors) -> f64 {
    let mut sa = 0.0;
    for v in a {
        sa += naive_cos(w, v);
    }
    let mut sb = 0.0;
    for v in b {
        sb += naive_cos(w, v);
    }
    sa / a.len() as f64 - sb / b.len() as f64
}

#[derive(Debug, Clone, Copy)]
pub struct NaiveWeat {
    pub statistic: f64,
    pub effect_size: f64,
    pub p_value: f64,
    pub partitions: u64,
}

/// Brute force over every equal-size repartition, computing each statistic
/// from scratch. Ties: `S' - S >= -2e-12 * max(1, sum |s|)`.
pub fn naive_weat(inst: &Instance) -> NaiveWeat {
    let n = inst.x.len();
    let s: Vec<f64> = inst
        .x
        .iter()
        .chain(&inst.y)
        .map(|w| naive_s(w, &inst.a, &inst.b))
        .collect();
    let stat = |mask: u32| -> f64 {
        let mut total = 0.0;
        for (i, v) in s.iter().enumerate() {
            if mask & (1 << i) != 0 {
                total += v;
            } else {
                total -= v;
            }
        }
        total
    };
    let observed_mask = (1u32 << n) - 1;
    let observed = stat(observed_mask);
    let slack = 2e-12 * s.iter().map(|v| v.abs()).sum::<f64>().max(1.0);

    let (mut hits, mut partitions) = (0u64, 0u64);
    for mask in 0u32..(1 << (2 * n)) {
        if mask.count_ones() as usize != n {
            continue;
        }
        partitions += 1;
        if stat(mask) - observed >= -slack {
            hits += 1;
        }
    }

    let mean_x = s[..n].iter().sum::<f64>() / n as f64;
    let mean_y = s[n..].iter().sum::<f64>() / n as f64;
    let mean = s.iter().sum::<f64>() / (2 * n) as f64;
    let var = s.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (2 * n) as f64;
    NaiveWeat {
        statistic: observed,
        effect_size: (mean_x - mean_y) / var.sqrt(),
        p_value: hits as f64 / partitions as f64,
        partitions,
    }
}

/// A uniformly random rotation, from Gram-Schmidt on a Gaussian matrix.
pub fn random_rotation(rng: &mut ChaCha8Rng, dim: usize) -> Vectors {
    let mut q: Vectors = Vec::with_capacity(dim);
    while q.len() < dim {
        let mut v = gaussian(rng, dim);
        for u in &q {
            let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-6 {
            q.push(v.iter().map(|a| a / norm).collect());
        }
    }
    q
}

pub fn apply(rotation: &Vectors, v: &[f64]) -> Vec<f64> {
    rotation
        .iter()
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

/// Sentences drawn from one of two disjoint vocabularies of `words` each.
pub fn two_cluster_corpus(rng: &mut ChaCha8Rng, tokens: usize, words: usize) -> Vec<String> {
    let mut lines = Vec::new();
    let mut total = 0;
    while total < tokens {
        let cluster = if rng.random::<bool>() { "a" } else { "b" };
        let len = rng.random_range(8..=12);
        let line: Vec<String> = (0..len)
            .map(|_| format!("{cluster}{}", rng.random_range(0..words)))
            .collect();
        total += len;
        lines.push(line.join(" "));
    }
    lines
}

pub fn cosine_f32(u: &[f32], v: &[f32]) -> f64 {
    let u: Vec<f64> = u.iter().map(|&c| c.into()).collect();
    let v: Vec<f64> = v.iter().map(|&c| c.into()).collect();
    naive_cos(&u, &v)
}

/// The instance as an embedding (words `x0.., y0.., a0.., b0..`) plus a matching spec.
pub fn as_embedding(inst: &Instance) -> (embias::EmbeddingSet, embias::StimulusSpec) {
    use embias::{EmbeddingMeta, EmbeddingSet, StimulusSpec, WordSet};
    let dim = inst.x[0].len();
    let mut words = Vec::new();
    let mut matrix = Vec::new();
    let mut names = Vec::new();
    for (prefix, set) in [("x", &inst.x), ("y", &inst.y), ("a", &inst.a), ("b", &inst.b)] {
        let mut set_names = Vec::new();
        for (i, v) in set.iter().enumerate() {
            let word = format!("{prefix}{i}");
            words.push(word.clone());
            set_names.push(word);
            matrix.extend(v.iter().map(|&c| c as f32));
        }
        names.push(set_names);
    }
    let set = |label: &str, words: &[String]| WordSet {
        label: label.to_owned(),
        words: words.to_vec(),
    };
    let spec = StimulusSpec {
        language: "en".to_owned(),
        name: "fixture".to_owned(),
        x: set("X", &names[0]),
        y: set("Y", &names[1]),
        a: set("A", &names[2]),
        b: set("B", &names[3]),
        provenance: Default::default(),
    };
    let meta = EmbeddingMeta {
        language: "en".to_owned(),
        ..EmbeddingMeta::default()
    };
    (EmbeddingSet::new(words, matrix, dim, meta).unwrap(), spec)
}

/// Random small CBOW model with a random example; returns the largest
/// relative error between analytic and central-difference gradients.
pub fn gradient_check(rng: &mut ChaCha8Rng) -> f64 {
    use embias::trainer::CbowModel;
    let vocab = rng.random_range(3..=10);
    let dim = rng.random_range(2..=8);
    let params = |rng: &mut ChaCha8Rng| (0..vocab * dim).map(|_| rng.random_range(-0.8..0.8)).collect();
    let mut model = CbowModel::from_parts(dim, params(rng), params(rng));
    let context: Vec<usize> = (0..rng.random_range(1..=4)).map(|_| rng.random_range(0..vocab)).collect();
    let center = rng.random_range(0..vocab);
    let negatives: Vec<usize> = (0..rng.random_range(1..=5))
        .map(|_| loop {
            let k = rng.random_range(0..vocab);
            if k != center {
                break k;
            }
        })
        .collect();

    let analytic = model.gradients(&context, center, &negatives);
    let h = 1e-6;
    let mut numeric_in = vec![0.0; analytic.input.len()];
    let mut numeric_out = vec![0.0; analytic.output.len()];
    #[allow(clippy::needless_range_loop)]
    for i in 0..numeric_in.len() {
        let orig = model.input()[i];
        model.input_mut()[i] = orig + h;
        let up = model.loss(&context, center, &negatives);
        model.input_mut()[i] = orig - h;
        let down = model.loss(&context, center, &negatives);
        model.input_mut()[i] = orig;
        numeric_in[i] = (up - down) / (2.0 * h);
    }
    #[allow(clippy::needless_range_loop)]
    for i in 0..numeric_out.len() {
        let orig = model.output()[i];
        model.output_mut()[i] = orig + h;
        let up = model.loss(&context, center, &negatives);
        model.output_mut()[i] = orig - h;
        let down = model.loss(&context, center, &negatives);
        model.output_mut()[i] = orig;
        numeric_out[i] = (up - down) / (2.0 * h);
    }
    relative_error(&analytic.input, &numeric_in).max(relative_error(&analytic.output, &numeric_out))
}

/// `|a - n| / max(|a|, |n|)` in the Euclidean norm; 0 when both vanish.
pub fn relative_error(a: &[f64], n: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|c| c * c).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(n).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(n));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Mean cosine within and across the two clusters of [`two_cluster_corpus`].
pub fn cluster_cosines(set: &embias::EmbeddingSet) -> (f64, f64) {
    let words: Vec<&str> = set.words().collect();
    let (mut intra, mut n_intra, mut inter, mut n_inter) = (0.0, 0, 0.0, 0);
    for (i, u) in words.iter().enumerate() {
        for v in &words[i + 1..] {
            let c = cosine_f32(set.vector(u).unwrap(), set.vector(v).unwrap());
            if u[..1] == v[..1] {
                intra += c;
                n_intra += 1;
            } else {
                inter += c;
                n_inter += 1;
            }
        }
    }
    (intra / n_intra as f64, inter / n_inter as f64)
}
