//! Embedding sets and the word2vec-style text interchange format.
//!
//! The text format has a header line `<vocab_size> <dim>` followed by one
//! line per word: the word and `dim` space-separated components. Provenance
//! (language, corpus version, seed) does not fit into that format, so it is
//! kept in a JSON sidecar next to the vector file (`<file>.meta.json`).
//! When the sidecar is missing, provenance is inferred from file names of the
//! form `<lang>.<raw|lemmatized>.seed<k>.vec`.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use indexmap::IndexSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which corpus variant an embedding was trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusVersion {
    Raw,
    Lemmatized,
}

impl CorpusVersion {
    pub fn as_str(self) -> &'static str {
        match self {
            CorpusVersion::Raw => "raw",
            CorpusVersion::Lemmatized => "lemmatized",
        }
    }
}

impl fmt::Display for CorpusVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CorpusVersion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(CorpusVersion::Raw),
            "lemmatized" => Ok(CorpusVersion::Lemmatized),
            other => Err(Error::Config(format!(
                "unknown corpus version '{other}' (expected raw or lemmatized)"
            ))),
        }
    }
}

/// Language code used when provenance is unknown.
pub const UNKNOWN_LANGUAGE: &str = "und";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMeta {
    pub language: String,
    pub corpus_version: CorpusVersion,
    pub seed: u64,
    pub source: String,
}

impl Default for EmbeddingMeta {
    fn default() -> Self {
        EmbeddingMeta {
            language: UNKNOWN_LANGUAGE.to_owned(),
            corpus_version: CorpusVersion::Raw,
            seed: 0,
            source: String::new(),
        }
    }
}

impl EmbeddingMeta {
    /// Best-effort provenance from a `<lang>.<version>.seed<k>.vec` file name.
    pub fn from_file_name(path: &Path) -> Self {
        let mut meta = EmbeddingMeta {
            source: path.display().to_string(),
            ..EmbeddingMeta::default()
        };
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            return meta;
        };
        let parts: Vec<&str> = name.split('.').collect();
        if parts.len() >= 3 {
            if let Ok(version) = parts[1].parse() {
                meta.language = parts[0].to_owned();
                meta.corpus_version = version;
            }
            if let Some(seed) = parts[2].strip_prefix("seed").and_then(|s| s.parse().ok()) {
                meta.seed = seed;
            }
        }
        meta
    }
}

/// Path of the JSON provenance sidecar belonging to a vector file.
pub fn meta_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

/// Vocabulary-indexed dense vectors. Immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    vocab: IndexSet<String>,
    matrix: Vec<f32>,
    dim: usize,
    meta: EmbeddingMeta,
}

impl EmbeddingSet {
    /// Builds a set from words and a row-major `words.len() × dim` matrix.
    pub fn new(words: Vec<String>, matrix: Vec<f32>, dim: usize, meta: EmbeddingMeta) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Invalid("embedding dimension must be at least 1".into()));
        }
        if matrix.len() != words.len() * dim {
            return Err(Error::Invalid(format!(
                "matrix has {} values, expected {} words × {dim}",
                matrix.len(),
                words.len()
            )));
        }
        let mut vocab = IndexSet::with_capacity(words.len());
        for (row, word) in words.into_iter().enumerate() {
            check_word(&word)?;
            if let Some(i) = matrix[row * dim..(row + 1) * dim].iter().position(|v| !v.is_finite()) {
                return Err(Error::Invalid(format!(
                    "non-finite component {i} in vector for '{word}'"
                )));
            }
            let (index, inserted) = vocab.insert_full(word);
            if !inserted {
                return Err(Error::Invalid(format!("duplicate word '{}'", vocab[index])));
            }
        }
        Ok(EmbeddingSet {
            vocab,
            matrix,
            dim,
            meta,
        })
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn meta(&self) -> &EmbeddingMeta {
        &self.meta
    }

    pub fn with_meta(mut self, meta: EmbeddingMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.vocab.iter().map(String::as_str)
    }

    pub fn index(&self, word: &str) -> Option<usize> {
        self.vocab.get_index_of(word)
    }

    pub fn row(&self, index: usize) -> &[f32] {
        &self.matrix[index * self.dim..(index + 1) * self.dim]
    }

    pub fn vector(&self, word: &str) -> Option<&[f32]> {
        self.index(word).map(|i| self.row(i))
    }

    /// Resolves every word in `words`.
    ///
    /// Under [`OovPolicy::Strict`] any missing word is an error listing all of
    /// them; under [`OovPolicy::Skip`] the missing words are returned next to
    /// the vectors that were found.
    pub fn lookup_all<'w, S: AsRef<str>>(&self, words: &'w [S], policy: OovPolicy) -> Result<Lookup<'w, '_>> {
        if words.is_empty() {
            return Err(Error::Invalid("lookup of an empty word list".into()));
        }
        let mut found = Vec::with_capacity(words.len());
        let mut missing = Vec::new();
        for word in words {
            let word = word.as_ref();
            match self.vector(word) {
                Some(v) => found.push((word, v)),
                None => missing.push(word.to_owned()),
            }
        }
        if policy == OovPolicy::Strict && !missing.is_empty() {
            return Err(Error::OutOfVocabulary { words: missing });
        }
        Ok(Lookup { found, missing })
    }

    /// Reads the text format from `path`, plus its provenance sidecar if present.
    pub fn load_text_format(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let set = read_text(BufReader::new(file)).map_err(|e| match e {
            Error::Parse { line, message } => Error::Parse {
                line,
                message: format!("{}: {message}", path.display()),
            },
            other => other,
        })?;
        let sidecar = meta_path(path);
        let meta = if sidecar.exists() {
            let text = std::fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
            serde_json::from_str(&text)?
        } else {
            EmbeddingMeta::from_file_name(path)
        };
        Ok(set.with_meta(meta))
    }

    /// Writes the text format to `path` and the provenance sidecar next to it.
    pub fn save_text_format(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if self.is_empty() {
            return Err(Error::Invalid("refusing to write an empty embedding set".into()));
        }
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write_text(&mut out).map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))?;

        let sidecar = meta_path(path);
        let json = serde_json::to_string_pretty(&self.meta)?;
        std::fs::write(&sidecar, json + "\n").map_err(|e| Error::io(&sidecar, e))
    }

    /// Writes the text format. Components use the shortest representation
    /// that parses back to the same `f32`.
    pub fn write_text<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "{} {}", self.len(), self.dim)?;
        for (i, word) in self.vocab.iter().enumerate() {
            out.write_all(word.as_bytes())?;
            for v in self.row(i) {
                write!(out, " {v}")?;
            }
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Reads the text format from any buffered reader. Provenance is left at its default.
pub fn read_text<R: BufRead>(reader: R) -> Result<EmbeddingSet> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(line) => line.map_err(|e| Error::parse(1, e.to_string()))?,
        None => return Err(Error::parse(1, "missing header")),
    };
    let header_fields: Vec<&str> = fields(&header).collect();
    let (vocab_size, dim) = match header_fields.as_slice() {
        [n, d] => match (n.parse::<usize>(), d.parse::<usize>()) {
            (Ok(n), Ok(d)) if d > 0 => (n, d),
            _ => return Err(Error::parse(1, format!("malformed header '{header}'"))),
        },
        _ => {
            return Err(Error::parse(
                1,
                format!("malformed header '{header}', expected '<vocab_size> <dim>'"),
            ))
        }
    };

    let mut words = Vec::with_capacity(vocab_size);
    let mut seen = IndexSet::with_capacity(vocab_size);
    let mut matrix = Vec::with_capacity(vocab_size * dim);
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line.map_err(|e| Error::parse(line_no, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        if words.len() == vocab_size {
            return Err(Error::parse(
                line_no,
                format!("more rows than the {vocab_size} declared in the header"),
            ));
        }
        let mut parts = fields(&line);
        let word = parts.next().unwrap_or_default();
        let start = matrix.len();
        for part in parts {
            let value: f32 = part
                .parse()
                .map_err(|_| Error::parse(line_no, format!("cannot parse '{part}' as a number")))?;
            if !value.is_finite() {
                return Err(Error::parse(line_no, format!("non-finite value '{part}'")));
            }
            matrix.push(value);
        }
        let arity = matrix.len() - start;
        if arity != dim {
            return Err(Error::parse(
                line_no,
                format!("row arity mismatch: expected {dim} values, found {arity}"),
            ));
        }
        if !seen.insert(word.to_owned()) {
            return Err(Error::parse(line_no, format!("duplicate word '{word}'")));
        }
        words.push(word.to_owned());
    }
    if words.len() != vocab_size {
        return Err(Error::parse(
            words.len() + 2,
            format!("header declares {vocab_size} rows, found {}", words.len()),
        ));
    }
    EmbeddingSet::new(words, matrix, dim, EmbeddingMeta::default())
}

fn fields(line: &str) -> impl Iterator<Item = &str> {
    line.trim_end_matches('\r').split(' ').filter(|s| !s.is_empty())
}

fn check_word(word: &str) -> Result<()> {
    if word.is_empty() || word.contains([' ', '\n', '\r']) {
        return Err(Error::Invalid(format!(
            "word {word:?} cannot be stored in the text format"
        )));
    }
    Ok(())
}

/// What to do with stimulus words that are not in the vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OovPolicy {
    #[default]
    Strict,
    Skip,
}

/// Result of [`EmbeddingSet::lookup_all`].
#[derive(Debug, Clone)]
pub struct Lookup<'w, 'e> {
    pub found: Vec<(&'w str, &'e [f32])>,
    pub missing: Vec<String>,
}

impl<'w, 'e> Lookup<'w, 'e> {
    pub fn vectors(&self) -> impl Iterator<Item = &'e [f32]> + '_ {
        self.found.iter().map(|(_, v)| *v)
    }
}
