//! Parallel corpus preparation and lemmatized, gender-scrubbed variants.
//!
//! Raw corpora are built from per-language directories of plain-text
//! documents (`<input>/<lang>/<doc-id>.txt`); only documents present in every
//! language are kept. Lemmatized corpora are built from the tab-separated
//! output of an external tagger (`surface TAB pos TAB lemma`), replacing each
//! token by its lemma and then applying per-language scrub rules that map
//! gendered forms onto a common form.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lemma the tagger emits for words it does not know.
pub const UNKNOWN_LEMMA: &str = "<unknown>";

/// Tags the common tagger parameter files use for sentence-final punctuation.
pub const SENTENCE_TAGS: &[&str] = &["SENT", "$.", "FS"];

/// Marker line written between sentences in tagger input files.
pub const SENTENCE_MARKER: &str = "<s>";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub languages: Vec<String>,
    pub documents: Vec<String>,
    /// Tokens per language in the emitted raw corpus.
    pub counts: BTreeMap<String, u64>,
}

/// Keeps the documents present in every language. The result does not depend
/// on the order of `collections`; languages and documents come out sorted.
pub fn intersect_documents<L, D>(collections: &[(L, Vec<D>)]) -> Result<CorpusManifest>
where
    L: AsRef<str>,
    D: AsRef<str>,
{
    if collections.len() < 2 {
        return Err(Error::Invalid(format!(
            "a parallel corpus needs at least two languages, got {}",
            collections.len()
        )));
    }
    let mut languages = BTreeSet::new();
    let mut shared: Option<BTreeSet<&str>> = None;
    for (lang, docs) in collections {
        let lang = lang.as_ref();
        if !languages.insert(lang.to_owned()) {
            return Err(Error::Invalid(format!("language '{lang}' listed twice")));
        }
        if docs.is_empty() {
            return Err(Error::Invalid(format!("language '{lang}' has no documents")));
        }
        let ids: BTreeSet<&str> = docs.iter().map(AsRef::as_ref).collect();
        shared = Some(match shared {
            None => ids,
            Some(acc) => acc.intersection(&ids).copied().collect(),
        });
    }
    let documents: Vec<String> = shared.unwrap_or_default().into_iter().map(str::to_owned).collect();
    if documents.is_empty() {
        return Err(Error::Invalid(
            "empty intersection: no document is present in every language".into(),
        ));
    }
    Ok(CorpusManifest {
        languages: languages.into_iter().collect(),
        documents,
        counts: BTreeMap::new(),
    })
}

/// Splits raw text into lowercased sentences of space-separated tokens.
///
/// Sentences end at `.`, `!`, `?`, `…` and at blank lines. Other punctuation
/// separates tokens and is dropped; apostrophes and hyphens between two
/// letters or digits stay inside the token, as does a period between digits.
pub fn tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut sentences = Vec::new();
    let mut sentence: Vec<String> = Vec::new();
    let mut token = String::new();
    let mut newlines = 0;

    let flush_token = |token: &mut String, sentence: &mut Vec<String>| {
        if !token.is_empty() {
            sentence.push(token.to_lowercase());
            token.clear();
        }
    };
    let flush_sentence = |sentence: &mut Vec<String>, sentences: &mut Vec<String>| {
        if !sentence.is_empty() {
            sentences.push(sentence.join(" "));
            sentence.clear();
        }
    };

    for (i, &c) in chars.iter().enumerate() {
        let prev = i.checked_sub(1).map(|j| chars[j]);
        let next = chars.get(i + 1).copied();
        let between = |f: fn(&char) -> bool| prev.as_ref().is_some_and(f) && next.as_ref().is_some_and(f);

        if c == '\n' {
            newlines += 1;
        } else if !c.is_whitespace() {
            newlines = 0;
        }

        let joiner = (c == '\'' || c == '’' || c == '-') && between(|c| c.is_alphanumeric());
        let decimal = c == '.' && between(char::is_ascii_digit);
        if c.is_alphanumeric() || joiner || decimal {
            token.push(c);
        } else {
            flush_token(&mut token, &mut sentence);
            if matches!(c, '.' | '!' | '?' | '…') || newlines >= 2 {
                flush_sentence(&mut sentence, &mut sentences);
            }
        }
    }
    flush_token(&mut token, &mut sentence);
    flush_sentence(&mut sentence, &mut sentences);
    sentences
}

/// One row of tagger output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenRecord {
    pub surface: String,
    pub pos: String,
    pub lemma: String,
}

impl TokenRecord {
    pub fn is_unknown(&self) -> bool {
        self.lemma == UNKNOWN_LEMMA
    }

    pub fn is_sentence_end(&self) -> bool {
        SENTENCE_TAGS.contains(&self.pos.as_str())
    }

    /// Lowercased lemma, falling back to the surface form for unknown words.
    /// Ambiguous lemmas (`a|b`) resolve to the first alternative.
    pub fn base_form(&self) -> String {
        let form = if self.is_unknown() || self.lemma.is_empty() {
            self.surface.as_str()
        } else {
            self.lemma.split('|').next().unwrap_or(&self.surface)
        };
        form.to_lowercase()
    }
}

/// Tagger output items: token rows and sentence boundaries (blank lines and
/// pass-through markup lines such as `<s>`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TaggerItem {
    Token(TokenRecord),
    Boundary,
}

pub fn read_tagger_output<R: BufRead>(reader: R) -> Result<Vec<TaggerItem>> {
    let mut items = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::parse(line_no, e.to_string()))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || (!line.contains('\t') && line.starts_with('<') && line.ends_with('>')) {
            items.push(TaggerItem::Boundary);
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [surface, pos, lemma] = fields.as_slice() else {
            return Err(Error::parse(
                line_no,
                format!("expected 3 tab-separated columns, found {}", fields.len()),
            ));
        };
        if surface.is_empty() {
            return Err(Error::parse(line_no, "empty surface form"));
        }
        items.push(TaggerItem::Token(TokenRecord {
            surface: (*surface).to_owned(),
            pos: (*pos).to_owned(),
            lemma: (*lemma).to_owned(),
        }));
    }
    Ok(items)
}

pub fn parse_tagger_output(path: impl AsRef<Path>) -> Result<Vec<TaggerItem>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_tagger_output(BufReader::new(file)).map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

/// Which form a scrub rule key is matched against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchLevel {
    #[default]
    Lemma,
    Surface,
}

impl FromStr for MatchLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lemma" => Ok(MatchLevel::Lemma),
            "surface" => Ok(MatchLevel::Surface),
            other => Err(Error::Config(format!(
                "unknown match level '{other}' (expected lemma or surface)"
            ))),
        }
    }
}

/// Replacement rules that remove gender marking after lemmatization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScrubRules {
    pub language: String,
    pub level: MatchLevel,
    rules: BTreeMap<String, String>,
}

impl ScrubRules {
    pub fn new(language: impl Into<String>, level: MatchLevel, rules: BTreeMap<String, String>) -> Result<Self> {
        let rules: BTreeMap<String, String> = rules
            .into_iter()
            .map(|(k, v)| (k.to_lowercase(), v.to_lowercase()))
            .collect();
        for (key, replacement) in &rules {
            if key.is_empty() || replacement.is_empty() || replacement.contains(char::is_whitespace) {
                return Err(Error::Invalid(format!(
                    "scrub rule '{key}' -> '{replacement}' needs a non-empty key and a single-token replacement"
                )));
            }
            if rules.contains_key(replacement) {
                return Err(Error::Invalid(format!(
                    "rule-chain violation: '{key}' -> '{replacement}', but '{replacement}' is itself a rule key"
                )));
            }
        }
        Ok(ScrubRules {
            language: language.into(),
            level,
            rules,
        })
    }

    /// Parses a rule file: one `key<TAB>replacement` per line, `#` comments.
    pub fn parse(text: &str, language: impl Into<String>, level: MatchLevel) -> Result<Self> {
        let mut rules = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [key, replacement] = fields.as_slice() else {
                return Err(Error::parse(
                    i + 1,
                    format!("expected key<TAB>replacement, found {} columns", fields.len()),
                ));
            };
            let (key, replacement) = (key.trim().to_lowercase(), replacement.trim().to_lowercase());
            if let Some(previous) = rules.insert(key.clone(), replacement.clone()) {
                if previous != replacement {
                    return Err(Error::parse(
                        i + 1,
                        format!("conflicting rules for '{key}': '{previous}' and '{replacement}'"),
                    ));
                }
            }
        }
        ScrubRules::new(language, level, rules)
    }

    pub fn load(path: impl AsRef<Path>, language: impl Into<String>, level: MatchLevel) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ScrubRules::parse(&text, language, level)
    }

    /// The shipped default rules for `language` (empty for unknown languages).
    pub fn builtin(language: &str) -> Result<Self> {
        let text = match language {
            "en" => include_str!("../data/rules/en.tsv"),
            "nl" => include_str!("../data/rules/nl.tsv"),
            "de" => include_str!("../data/rules/de.tsv"),
            "es" => include_str!("../data/rules/es.tsv"),
            _ => "",
        };
        ScrubRules::parse(text, language, MatchLevel::Lemma)
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.rules.keys().map(String::as_str)
    }

    pub fn contains_key(&self, token: &str) -> bool {
        self.rules.contains_key(token)
    }

    /// Output token for a record. The final token is never a rule key: with
    /// surface matching, a base form that is itself a key is still replaced.
    pub fn apply(&self, record: &TokenRecord) -> String {
        let base = record.base_form();
        if self.level == MatchLevel::Surface {
            if let Some(r) = self.rules.get(&record.surface.to_lowercase()) {
                return r.clone();
            }
        }
        match self.rules.get(&base) {
            Some(r) => r.clone(),
            None => base,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LemmatizedCorpus {
    pub lines: Vec<String>,
    /// Word tokens read (punctuation and sentence-final rows excluded).
    pub tokens_in: u64,
    pub tokens_out: u64,
}

fn is_punctuation(surface: &str) -> bool {
    !surface.chars().any(char::is_alphanumeric)
}

/// Replaces every word token by its scrubbed base form, one output token per
/// input word token. Sentence-final rows and markup lines end a line;
/// punctuation-only tokens are dropped, matching [`tokenize`].
pub fn lemmatize_corpus<'a, I>(items: I, rules: &ScrubRules) -> LemmatizedCorpus
where
    I: IntoIterator<Item = &'a TaggerItem>,
{
    let mut lines = Vec::new();
    let mut line: Vec<String> = Vec::new();
    let (mut tokens_in, mut tokens_out) = (0, 0);
    let mut end_line = |line: &mut Vec<String>| {
        if !line.is_empty() {
            lines.push(line.join(" "));
            line.clear();
        }
    };
    for item in items {
        match item {
            TaggerItem::Boundary => end_line(&mut line),
            TaggerItem::Token(record) if record.is_sentence_end() => end_line(&mut line),
            TaggerItem::Token(record) if is_punctuation(&record.surface) => {}
            TaggerItem::Token(record) => {
                tokens_in += 1;
                let token: String = rules
                    .apply(record)
                    .split_whitespace()
                    .collect::<Vec<_>>()
                    .join("_");
                line.push(token);
                tokens_out += 1;
            }
        }
    }
    end_line(&mut line);
    LemmatizedCorpus {
        lines,
        tokens_in,
        tokens_out,
    }
}

/// Document identifiers (file stems of `*.txt`) in `dir`, sorted.
pub fn list_documents(dir: &Path) -> Result<Vec<String>> {
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "txt") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_owned());
            }
        }
    }
    ids.sort();
    Ok(ids)
}

/// Language subdirectories of `input`, sorted.
pub fn list_languages(input: &Path) -> Result<Vec<String>> {
    let mut langs = Vec::new();
    for entry in fs::read_dir(input).map_err(|e| Error::io(input, e))? {
        let path = entry.map_err(|e| Error::io(input, e))?.path();
        if path.is_dir() {
            if let Some(name) = path.file_name().and_then(|s| s.to_str()) {
                langs.push(name.to_owned());
            }
        }
    }
    langs.sort();
    Ok(langs)
}

pub fn corpus_file_name(language: &str, version: crate::embedding::CorpusVersion) -> String {
    format!("{language}.{version}.txt")
}

#[derive(Debug, Clone, Default)]
pub struct PrepareOptions {
    /// Languages to include; all subdirectories of the input when empty.
    pub languages: Vec<String>,
    /// Also write `<lang>.tagger-input.txt`, one token per line with
    /// [`SENTENCE_MARKER`] lines between sentences.
    pub tagger_input: bool,
}

/// Builds `<out>/<lang>.raw.txt` for every language from the shared documents
/// and writes `<out>/manifest.json`.
pub fn prepare_corpus(input: &Path, out: &Path, options: &PrepareOptions) -> Result<CorpusManifest> {
    let languages = if options.languages.is_empty() {
        list_languages(input)?
    } else {
        options.languages.clone()
    };
    let collections = languages
        .iter()
        .map(|lang| Ok((lang.clone(), list_documents(&input.join(lang))?)))
        .collect::<Result<Vec<_>>>()?;
    let mut manifest = intersect_documents(&collections)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    for lang in &manifest.languages {
        let docs: Vec<Vec<String>> = manifest
            .documents
            .par_iter()
            .map(|id| {
                let path: PathBuf = input.join(lang).join(format!("{id}.txt"));
                let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                Ok(tokenize(&text))
            })
            .collect::<Result<_>>()?;
        let sentences: Vec<&String> = docs.iter().flatten().collect();
        let tokens = sentences.iter().map(|s| s.split(' ').count() as u64).sum();
        manifest.counts.insert(lang.clone(), tokens);

        let path = out.join(corpus_file_name(lang, crate::embedding::CorpusVersion::Raw));
        write_lines(&path, sentences.iter().map(|s| s.as_str()))?;
        if options.tagger_input {
            let path = out.join(format!("{lang}.tagger-input.txt"));
            let tokens = sentences
                .iter()
                .flat_map(|s| s.split(' ').chain(std::iter::once(SENTENCE_MARKER)));
            write_lines(&path, tokens)?;
        }
    }
    let path = out.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn write_lines<'a>(path: &Path, lines: impl IntoIterator<Item = &'a str>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for line in lines {
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Tokens of `lines` that are rule keys; empty for a fully scrubbed corpus.
pub fn residual_rule_keys<'a>(lines: &'a [String], rules: &ScrubRules) -> Vec<&'a str> {
    let keys: HashSet<&str> = rules.keys().collect();
    lines
        .iter()
        .flat_map(|l| l.split(' '))
        .filter(|t| keys.contains(t))
        .collect()
}
