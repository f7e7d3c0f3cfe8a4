use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use embias::corpus::{self, MatchLevel, PrepareOptions, ScrubRules};
use embias::embedding::{self, EmbeddingMeta};
use embias::report::{self, RunReport};
use embias::stimuli::{self, StimulusSpec};
use embias::trainer;
use embias::weat::permutation::DEFAULT_EXACT_CAP;
use embias::weat::{self, PermutationConfig, PermutationMode, WeatResult};
use embias::{CorpusVersion, EmbeddingSet, Error, OovPolicy, TrainingConfig, WeatConfig};

const THREADS_VAR: &str = "EMBIAS_THREADS";

/// Measure gender associations in word embeddings.
///
/// Exit codes: 0 success, 1 usage error, 2 data or validation error,
/// 3 numeric error. EMBIAS_THREADS caps the number of workers (default 1).
#[derive(Debug, Parser)]
#[command(name = "embias", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build one plain-text corpus per language from the documents all languages share.
    PrepareCorpus(PrepareArgs),
    /// Turn tagger output into a lemmatized, gender-scrubbed corpus.
    Lemmatize(LemmatizeArgs),
    /// Train CBOW embeddings, one file per seed.
    Train(TrainArgs),
    /// Run association tests and average them over embeddings.
    Weat(WeatArgs),
    /// Render aggregate results as TSV, Markdown and SVG.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct PrepareArgs {
    /// Directory with one subdirectory of `<doc>.txt` files per language.
    #[arg(long)]
    input: PathBuf,
    /// Languages to include (comma-separated); all subdirectories by default.
    #[arg(long, value_delimiter = ',')]
    langs: Vec<String>,
    #[arg(long)]
    out: PathBuf,
    /// Also write `<lang>.tagger-input.txt`, one token per line.
    #[arg(long)]
    emit_tagger_input: bool,
}

#[derive(Debug, Args)]
struct LemmatizeArgs {
    /// Tagger output: surface, tag and lemma separated by tabs.
    #[arg(long)]
    tagged: PathBuf,
    #[arg(long)]
    lang: String,
    /// Scrub rules (`key<TAB>replacement`); the shipped rules for the language by default.
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Match rule keys against the lemma or the surface form.
    #[arg(long = "match", value_parser = parse_match_level)]
    match_level: Option<MatchLevel>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Corpus with one sentence per line, named `<lang>.<version>.txt`.
    #[arg(long)]
    corpus: PathBuf,
    /// Language code; taken from the corpus file name by default.
    #[arg(long)]
    lang: Option<String>,
    /// Corpus version (raw or lemmatized); taken from the corpus file name by default.
    #[arg(long, value_parser = parse_version)]
    version: Option<CorpusVersion>,
    #[arg(long)]
    out: PathBuf,
    /// Number of embeddings to train.
    #[arg(long, default_value_t = 1)]
    runs: u64,
    /// Seed of the first run; run k uses seed-base + k.
    #[arg(long)]
    seed_base: Option<u64>,
    /// Flat `key = value` file with training options.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    negatives: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr_initial: Option<f64>,
    #[arg(long)]
    lr_min: Option<f64>,
    #[arg(long)]
    min_count: Option<u64>,
    #[arg(long)]
    subsample_t: Option<f64>,
}

#[derive(Debug, Args)]
struct WeatArgs {
    /// Embedding files in text format.
    #[arg(long, num_args = 1.., required = true)]
    embeddings: Vec<PathBuf>,
    /// Stimulus files (JSON).
    #[arg(long, num_args = 1.., required = true)]
    stimuli: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// `exact` for full enumeration, or a number of Monte Carlo samples.
    #[arg(long, default_value = "exact", value_parser = parse_permutations)]
    permutations: PermutationMode,
    /// Seed for Monte Carlo sampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Drop stimulus words missing from an embedding instead of failing.
    #[arg(long)]
    skip_oov: bool,
    /// Largest number of partitions the exact test may enumerate.
    #[arg(long, default_value_t = DEFAULT_EXACT_CAP)]
    exact_cap: u64,
    /// Also write the report for the new aggregates into this directory.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Aggregate result files, or directories holding `aggregate.*.json` files.
    #[arg(long, num_args = 1.., required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_match_level(s: &str) -> Result<MatchLevel, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_version(s: &str) -> Result<CorpusVersion, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_permutations(s: &str) -> Result<PermutationMode, String> {
    if s == "exact" {
        return Ok(PermutationMode::Exact);
    }
    s.parse()
        .map(PermutationMode::MonteCarlo)
        .map_err(|_| format!("expected 'exact' or a sample count, got '{s}'"))
}

/// An error with the file or item it concerns.
struct Failure {
    context: Option<String>,
    error: Error,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        Failure { context: None, error }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.context {
            Some(c) => write!(f, "{c}: {}", self.error),
            None => write!(f, "{}", self.error),
        }
    }
}

trait Context<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T, Failure>;
}

impl<T> Context<T> for embias::Result<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T, Failure> {
        self.map_err(|error| Failure {
            context: Some(what()),
            error,
        })
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = thread_count().and_then(|threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")).into())
    });
    let result = result.and_then(|()| match cli.command {
        Command::PrepareCorpus(args) => prepare_corpus(args),
        Command::Lemmatize(args) => lemmatize(args),
        Command::Train(args) => train(args),
        Command::Weat(args) => run_weat(args),
        Command::Report(args) => report(args),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("embias: {f}");
            ExitCode::from(f.error.kind().exit_code() as u8)
        }
    }
}

fn thread_count() -> Result<usize, Failure> {
    match std::env::var(THREADS_VAR) {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::Config(format!("{THREADS_VAR} must be a positive integer, got '{v}'")).into()),
        },
    }
}

fn prepare_corpus(args: PrepareArgs) -> CmdResult {
    let options = PrepareOptions {
        languages: args.langs,
        tagger_input: args.emit_tagger_input,
    };
    let manifest = corpus::prepare_corpus(&args.input, &args.out, &options)?;
    println!(
        "{} documents shared by {}",
        manifest.documents.len(),
        manifest.languages.join(", ")
    );
    for (lang, tokens) in &manifest.counts {
        println!("{lang}: {tokens} tokens");
    }
    Ok(())
}

fn lemmatize(args: LemmatizeArgs) -> CmdResult {
    let mut rules = match &args.rules {
        Some(path) => ScrubRules::load(path, &args.lang, args.match_level.unwrap_or_default())
            .context(|| path.display().to_string())?,
        None => ScrubRules::builtin(&args.lang)?,
    };
    if let Some(level) = args.match_level {
        rules.level = level;
    }
    let items = corpus::parse_tagger_output(&args.tagged)?;
    let lemmatized = corpus::lemmatize_corpus(&items, &rules);
    let residual = corpus::residual_rule_keys(&lemmatized.lines, &rules);
    if !residual.is_empty() || lemmatized.tokens_in != lemmatized.tokens_out {
        return Err(Error::Invalid(format!(
            "scrubbing left {} rule keys and mapped {} tokens to {}",
            residual.len(),
            lemmatized.tokens_in,
            lemmatized.tokens_out
        ))
        .into());
    }
    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let path = args
        .out
        .join(corpus::corpus_file_name(&args.lang, CorpusVersion::Lemmatized));
    corpus::write_lines(&path, lemmatized.lines.iter().map(String::as_str))?;
    println!(
        "{}: {} sentences, {} tokens, {} scrub rules",
        path.display(),
        lemmatized.lines.len(),
        lemmatized.tokens_out,
        rules.len()
    );
    Ok(())
}

fn training_config(args: &TrainArgs) -> embias::Result<TrainingConfig> {
    let mut config = TrainingConfig::default();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        config
            .apply_key_values(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    }
    let flags = [
        ("dim", args.dim.map(|v| v.to_string())),
        ("window", args.window.map(|v| v.to_string())),
        ("negatives", args.negatives.map(|v| v.to_string())),
        ("epochs", args.epochs.map(|v| v.to_string())),
        ("lr_initial", args.lr_initial.map(|v| v.to_string())),
        ("lr_min", args.lr_min.map(|v| v.to_string())),
        ("min_count", args.min_count.map(|v| v.to_string())),
        ("subsample_t", args.subsample_t.map(|v| v.to_string())),
    ];
    for (key, value) in flags {
        if let Some(value) = value {
            config.set(key, &value)?;
        }
    }
    config.validate()?;
    Ok(config)
}

fn train(args: TrainArgs) -> CmdResult {
    let mut config = training_config(&args)?;
    if args.runs == 0 {
        return Err(Error::Config("--runs must be at least 1".into()).into());
    }
    let seed_base = args.seed_base.unwrap_or(config.seed);
    if seed_base.checked_add(args.runs - 1).is_none() {
        return Err(Error::Config("seed range overflows".into()).into());
    }

    // `<lang>.<version>.txt`
    let stem = args.corpus.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    let parts: Vec<&str> = stem.split('.').collect();
    let language = args
        .lang
        .clone()
        .or_else(|| (parts.len() >= 3).then(|| parts[0].to_owned()))
        .unwrap_or_else(|| embedding::UNKNOWN_LANGUAGE.to_owned());
    let version = match args.version {
        Some(v) => v,
        None => parts
            .get(1)
            .and_then(|v| v.parse().ok())
            .unwrap_or(CorpusVersion::Raw),
    };

    let text = fs::read_to_string(&args.corpus).map_err(|e| Error::io(&args.corpus, e))?;
    let lines: Vec<&str> = text.lines().collect();
    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;

    config.seed = seed_base;
    let configs: Vec<TrainingConfig> = (0..args.runs)
        .map(|k| TrainingConfig {
            seed: seed_base + k,
            ..config.clone()
        })
        .collect();
    // Each run is single-threaded and deterministic; runs share the pool.
    let written = configs
        .par_iter()
        .map(|config| {
            let out = trainer::train_lines(&lines, config)
                .context(|| format!("{} (seed {})", args.corpus.display(), config.seed))?;
            let meta = EmbeddingMeta {
                language: language.clone(),
                corpus_version: version,
                seed: config.seed,
                source: format!("{} corpus={}", config.describe(), args.corpus.display()),
            };
            let embeddings = out.embeddings.with_meta(meta);
            let path = args
                .out
                .join(format!("{language}.{version}.seed{}.vec", config.seed));
            embeddings.save_text_format(&path)?;
            Ok((path, embeddings.len(), out.epoch_losses.last().copied().unwrap_or(f64::NAN)))
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    for (path, words, loss) in written {
        println!("{}: {words} words, final epoch loss {loss:.4}", path.display());
    }
    Ok(())
}

/// Turns a spec name such as `career-family/all` into a file name component.
fn slug(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn languages_match(a: &str, b: &str) -> bool {
    a == b || a == embedding::UNKNOWN_LANGUAGE || b == embedding::UNKNOWN_LANGUAGE
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> embias::Result<()> {
    let json = serde_json::to_string_pretty(value)?;
    fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

fn run_weat(args: WeatArgs) -> CmdResult {
    let config = WeatConfig {
        permutation: PermutationConfig {
            mode: args.permutations,
            seed: args.seed,
            exact_cap: args.exact_cap,
        },
        oov: if args.skip_oov { OovPolicy::Skip } else { OovPolicy::Strict },
    };

    let mut specs: Vec<StimulusSpec> = Vec::new();
    for path in &args.stimuli {
        let expansion = stimuli::load_stimuli(path)?
            .into_specs()
            .context(|| path.display().to_string())?;
        for notice in expansion.notices {
            eprintln!("{}: {notice}", path.display());
        }
        specs.extend(expansion.specs);
    }
    let mut names = std::collections::BTreeSet::new();
    for spec in &specs {
        if !names.insert((spec.language.as_str(), spec.name.as_str())) {
            return Err(Error::Invalid(format!(
                "two stimulus specs named '{}' for language '{}'",
                spec.name, spec.language
            ))
            .into());
        }
    }

    let embeddings = args
        .embeddings
        .par_iter()
        .map(|path| EmbeddingSet::load_text_format(path).context(|| path.display().to_string()))
        .collect::<Result<Vec<_>, Failure>>()?;

    let mut pairs = Vec::new();
    for spec in &specs {
        let matching: Vec<usize> = (0..embeddings.len())
            .filter(|&i| languages_match(&embeddings[i].meta().language, &spec.language))
            .collect();
        if matching.is_empty() {
            eprintln!("no embeddings in language '{}' for '{}'; skipped", spec.language, spec.name);
        }
        pairs.extend(matching.into_iter().map(|i| (spec, i)));
    }
    if pairs.is_empty() {
        return Err(Error::Invalid("no embedding matches the language of any stimulus file".into()).into());
    }

    let results = pairs
        .par_iter()
        .map(|&(spec, i)| {
            let path = &args.embeddings[i];
            weat::run_weat(&embeddings[i], spec, &config)
                .context(|| format!("{} with '{}'", path.display(), spec.name))
        })
        .collect::<Result<Vec<_>, Failure>>()?;

    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let mut groups: BTreeMap<(String, CorpusVersion, String), Vec<WeatResult>> = BTreeMap::new();
    for (&(spec, i), result) in pairs.iter().zip(results) {
        let stem = args.embeddings[i]
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("embedding");
        let path = args.out.join(format!("{stem}.{}.json", slug(&spec.name)));
        write_json(&path, &result)?;
        if !result.oov_dropped.is_empty() {
            eprintln!("{}: skipped {}", path.display(), result.oov_dropped.join(", "));
        }
        let meta = &result.embedding_meta;
        groups
            .entry((meta.language.clone(), meta.corpus_version, spec.name.clone()))
            .or_default()
            .push(result);
    }

    let mut aggregates = Vec::with_capacity(groups.len());
    for ((language, version, name), runs) in groups {
        let aggregate = weat::aggregate(runs).context(|| format!("{language}/{version}/{name}"))?;
        let path = args
            .out
            .join(format!("aggregate.{language}.{version}.{}.json", slug(&name)));
        write_json(&path, &aggregate)?;
        println!(
            "{language}\t{version}\t{name}\tm.t.s. {:.3}\tm.e.s. {:.3}\tm.p.v. {:.3}\tn = {}",
            aggregate.mean_statistic, aggregate.mean_effect_size, aggregate.mean_p_value, aggregate.n_runs
        );
        aggregates.push(aggregate);
    }

    if let Some(dir) = &args.report {
        write_report(&aggregates, dir)?;
    }
    Ok(())
}

/// Settings echoed into a report; derived from the results alone so that a
/// report rebuilt from saved files matches the one written in-pipeline.
fn config_echo(aggregates: &[weat::AggregateResult]) -> BTreeMap<String, String> {
    let mut methods = std::collections::BTreeSet::new();
    let mut runs = 0;
    for run in aggregates.iter().flat_map(|a| &a.per_run) {
        let method = match run.method {
            weat::WeatMethod::Exact => "exact".to_owned(),
            weat::WeatMethod::MonteCarlo => format!("monte_carlo ({} samples)", run.n_partitions_evaluated - 1),
        };
        methods.insert(method);
        runs += 1;
    }
    BTreeMap::from([
        ("permutation_test".to_owned(), methods.into_iter().collect::<Vec<_>>().join(", ")),
        ("results".to_owned(), runs.to_string()),
    ])
}

fn write_report(aggregates: &[weat::AggregateResult], dir: &Path) -> CmdResult {
    let report = RunReport::from_aggregates(aggregates, config_echo(aggregates))?;
    report.write_all(dir)?;
    println!("report with {} rows written to {}", report.rows.len(), dir.display());
    Ok(())
}

fn report(args: ReportArgs) -> CmdResult {
    let mut files = Vec::new();
    for input in &args.inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(input)
                .map_err(|e| Error::io(input, e))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| {
                    p.file_name()
                        .and_then(|n| n.to_str())
                        .is_some_and(|n| n.starts_with("aggregate.") && n.ends_with(".json"))
                })
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(input.clone());
        }
    }
    if files.is_empty() {
        return Err(Error::Invalid("no aggregate result files found".into()).into());
    }
    let aggregates = files
        .iter()
        .map(report::load_aggregate)
        .collect::<embias::Result<Vec<_>>>()?;
    write_report(&aggregates, &args.out)
}
