//! The `miaeval` command line.
//!
//! Every subcommand accepts `--config FILE` (TOML); flags given on the
//! command line override keys from the file. The resolved settings are
//! echoed to stderr before any work starts.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::{self, Attack, AttackConfig};
use crate::error::{Error, Result};
use crate::eval::{self, ExperimentConfig, SyntheticSource, TraceScorer, HUMAN_ROW};
use crate::ingest::{self, Document, ReadMode, ReportFormat, SplitConfig};
use crate::toylm::{NGramModel, DEFAULT_LAMBDA, DEFAULT_ORDER};
use crate::trace::{PoolKind, PoolLabel, SamplePool};

#[derive(Debug, Parser)]
#[command(name = "miaeval", version, about = "Membership-inference scoring and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a byte n-gram model on a corpus.
    TrainLm(TrainArgs),
    /// Shuffle and split a corpus into member / non-member / calibration files.
    Split(SplitArgs),
    /// Turn plain texts into a trace_v1 pool under a model.
    Trace(TraceArgs),
    /// Score traces or texts with the selected attacks.
    Score(ScoreArgs),
    /// Generate a synthetic non-member pool from prompts.
    Generate(GenerateArgs),
    /// Run the conventional and synthetic setups and write the AUC report.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Re-cut documents into chunks of about this many bytes before training.
    #[arg(long)]
    pub chunk_bytes: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub member_fraction: Option<f64>,
    #[arg(long)]
    pub calibration_fraction: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub min_doc_bytes: Option<usize>,
    #[arg(long)]
    pub chunk_bytes: Option<usize>,
    /// Directory receiving members.txt, nonmembers.txt and calibration.txt.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum TextKind {
    Member,
    NonmemberHuman,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub texts: PathBuf,
    /// Pool label written to the file.
    #[arg(long, value_enum, default_value_t = TextKind::Member)]
    pub kind: TextKind,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AttackFlags {
    /// Comma-separated attack names (loss, min_k, min_k_pp, reference, zlib).
    #[arg(long, value_delimiter = ',')]
    pub attacks: Option<Vec<Attack>>,
    /// Min-K% fraction.
    #[arg(long)]
    pub k: Option<f64>,
    #[arg(long)]
    pub sigma_floor: Option<f64>,
    #[arg(long)]
    pub zlib_level: Option<u32>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Target model; required with --texts.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Reference model for the reference attack (with --texts).
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long, conflicts_with = "texts", required_unless_present = "texts")]
    pub traces: Option<PathBuf>,
    #[arg(long)]
    pub texts: Option<PathBuf>,
    #[command(flatten)]
    pub attack: AttackFlags,
    /// Leave unavailable attacks out of a record instead of failing.
    #[arg(long)]
    pub skip_unavailable: bool,
    /// Skip invalid trace records instead of rejecting the file.
    #[arg(long)]
    pub lenient: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Generator model.
    #[arg(long)]
    pub model: PathBuf,
    /// Model that scores the generations; defaults to the generator.
    #[arg(long)]
    pub target: Option<PathBuf>,
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Human non-member texts or trace_v1 pool.
    #[arg(long)]
    pub prompts: PathBuf,
    #[arg(long)]
    pub prompt_len: Option<usize>,
    #[arg(long)]
    pub max_new: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Generator id recorded in the pool label.
    #[arg(long, default_value = "self")]
    pub generator_id: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Member texts or trace_v1 pool.
    #[arg(long)]
    pub members: PathBuf,
    /// Non-member pools: exactly one human pool (texts or trace_v1) and any
    /// number of synthetic trace_v1 pools.
    #[arg(long, num_args = 1.., required = true)]
    pub nonmembers: Vec<PathBuf>,
    /// Target model; required when any input is plain text.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[command(flatten)]
    pub attack: AttackFlags,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
    pub format: ReportFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write ROC points (source,attack,fpr,tpr) to this file.
    #[arg(long)]
    pub roc: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub order: usize,
    pub lambda: f64,
    pub chunk_bytes: Option<usize>,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            order: DEFAULT_ORDER,
            lambda: DEFAULT_LAMBDA,
            chunk_bytes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSettings {
    pub member_fraction: Option<f64>,
    pub calibration_fraction: Option<f64>,
    pub seed: Option<u64>,
    pub min_doc_bytes: Option<usize>,
    pub chunk_bytes: Option<usize>,
}

/// Parses a TOML settings file; unknown keys are errors.
pub fn parse_settings<T: for<'de> Deserialize<'de>>(text: &str) -> std::result::Result<T, String> {
    toml::from_str(text).map_err(|e| e.to_string())
}

fn load_settings<T: for<'de> Deserialize<'de> + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_settings(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
}

fn echo<T: Serialize>(command: &str, settings: &T) {
    let body = toml::to_string(settings).unwrap_or_else(|e| format!("<unprintable: {e}>"));
    eprintln!("# {command} resolved config");
    eprint!("{body}");
}

fn apply_attack_flags(config: &mut ExperimentConfig, flags: &AttackFlags) {
    if let Some(a) = &flags.attacks {
        config.attacks = a.clone();
    }
    if let Some(k) = flags.k {
        config.attack_config.k_fraction = k;
    }
    if let Some(s) = flags.sigma_floor {
        config.attack_config.sigma_floor = s;
    }
    if let Some(z) = flags.zlib_level {
        config.attack_config.zlib_level = z;
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainLm(a) => train_lm(a),
        Command::Split(a) => split(a),
        Command::Trace(a) => trace(a),
        Command::Score(a) => score(a),
        Command::Generate(a) => generate(a),
        Command::Evaluate(a) => evaluate(a),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Error::io(path, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn load_docs(path: &Path, chunk_bytes: Option<usize>) -> Result<Vec<Document>> {
    let docs = ingest::read_documents(path)?;
    Ok(match chunk_bytes {
        Some(n) => ingest::chunk_documents(&docs, n),
        None => docs,
    })
}

fn train_lm(a: TrainArgs) -> Result<()> {
    let mut s: TrainSettings = load_settings(a.config.as_deref())?;
    s.order = a.order.unwrap_or(s.order);
    s.lambda = a.lambda.unwrap_or(s.lambda);
    s.chunk_bytes = a.chunk_bytes.or(s.chunk_bytes);
    echo("train-lm", &s);
    let docs = load_docs(&a.corpus, s.chunk_bytes)?;
    let texts: Vec<&str> = docs.iter().map(|d| d.text.as_str()).collect();
    let model = NGramModel::train(&texts, s.order, s.lambda)?;
    model.save(&a.out)?;
    eprintln!(
        "trained order-{} model on {} documents ({} contexts) -> {}",
        s.order,
        docs.len(),
        model.num_contexts(),
        a.out.display()
    );
    Ok(())
}

fn split(a: SplitArgs) -> Result<()> {
    let file: SplitSettings = load_settings(a.config.as_deref())?;
    let d = SplitConfig::default();
    let config = SplitConfig {
        member_fraction: a.member_fraction.or(file.member_fraction).unwrap_or(d.member_fraction),
        calibration_fraction: a
            .calibration_fraction
            .or(file.calibration_fraction)
            .unwrap_or(d.calibration_fraction),
        seed: a.seed.or(file.seed).unwrap_or(d.seed),
        min_doc_bytes: a.min_doc_bytes.or(file.min_doc_bytes).unwrap_or(d.min_doc_bytes),
    };
    let chunk_bytes = a.chunk_bytes.or(file.chunk_bytes);
    echo(
        "split",
        &SplitSettings {
            member_fraction: Some(config.member_fraction),
            calibration_fraction: Some(config.calibration_fraction),
            seed: Some(config.seed),
            min_doc_bytes: Some(config.min_doc_bytes),
            chunk_bytes,
        },
    );
    config.validate()?;
    let split = ingest::split_documents(load_docs(&a.corpus, chunk_bytes)?, &config)?;
    fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    for (name, docs) in [
        ("members.txt", &split.members),
        ("nonmembers.txt", &split.nonmembers),
        ("calibration.txt", &split.calibration),
    ] {
        let path = a.out_dir.join(name);
        let mut w = create(&path)?;
        for d in docs {
            // Newlines would split a document in two on re-read.
            writeln!(w, "{}", d.text.replace(['\n', '\r'], " ")).map_err(|e| Error::io(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    eprintln!(
        "{} members, {} non-members, {} calibration, {} dropped as short",
        split.members.len(),
        split.nonmembers.len(),
        split.calibration.len(),
        split.dropped_short
    );
    Ok(())
}

fn is_trace_file(path: &Path) -> Result<bool> {
    if path.is_dir() {
        return Ok(false);
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut first = String::new();
    BufReader::new(file)
        .read_line(&mut first)
        .map_err(|e| Error::io(path, e))?;
    Ok(ingest::is_trace_header(first.trim_end()))
}

fn load_model(path: Option<&Path>) -> Result<Option<NGramModel>> {
    path.map(NGramModel::load).transpose()
}

fn scorer<'a>(target: Option<&'a NGramModel>, reference: Option<&'a NGramModel>) -> Option<TraceScorer<'a>> {
    let mut s = TraceScorer::new(target?);
    if let Some(r) = reference {
        s = s.with_reference(r);
    }
    Some(s)
}

/// Reads a pool from a trace_v1 file, or scores a text file under the target
/// model and gives it `text_label`.
fn load_pool(
    path: &Path,
    text_label: PoolLabel,
    scorer: Option<&TraceScorer<'_>>,
    mode: ReadMode,
) -> Result<SamplePool> {
    if is_trace_file(path)? {
        let read = ingest::read_traces(path, mode)?;
        if !read.skipped.is_empty() {
            eprintln!("{}: skipped {} invalid records", path.display(), read.skipped.len());
        }
        return Ok(read.pool);
    }
    let docs = ingest::read_documents(path)?;
    let pairs: Vec<(String, String)> = docs.into_iter().map(|d| (d.id, d.text)).collect();
    let scorer = scorer.ok_or_else(|| {
        Error::InvalidConfig(format!(
            "--model is required to score plain-text input {}",
            path.display()
        ))
    })?;
    scorer.score_pool(text_label, &pairs)
}

fn trace(a: TraceArgs) -> Result<()> {
    let target = NGramModel::load(&a.model)?;
    let reference = load_model(a.reference.as_deref())?;
    let scorer = scorer(Some(&target), reference.as_ref()).expect("target present");
    let label = match a.kind {
        TextKind::Member => PoolLabel::member(),
        TextKind::NonmemberHuman => PoolLabel::human(),
    };
    let docs = ingest::read_documents(&a.texts)?;
    let pairs: Vec<(String, String)> = docs.into_iter().map(|d| (d.id, d.text)).collect();
    let pool = scorer.score_pool(label, &pairs)?;
    ingest::write_traces(&pool, &a.out)?;
    eprintln!("{} traces -> {}", pool.len(), a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct ScoreHeader<'a> {
    version: &'static str,
    attacks: &'a [Attack],
    attack: &'a AttackConfig,
    records: usize,
}

#[derive(Serialize)]
struct ScoreRecord<'a> {
    id: &'a str,
    scores: BTreeMap<Attack, f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    skipped: BTreeMap<Attack, String>,
}

fn score(a: ScoreArgs) -> Result<()> {
    let mut config: ExperimentConfig = load_settings(a.config.as_deref())?;
    apply_attack_flags(&mut config, &a.attack);
    echo("score", &config);
    config.validate()?;
    let attacks = config.selected_attacks();

    let target = load_model(a.model.as_deref())?;
    let reference = load_model(a.reference.as_deref())?;
    let scorer = scorer(target.as_ref(), reference.as_ref());
    let mode = if a.lenient { ReadMode::Lenient } else { ReadMode::Strict };
    let pool = match (&a.traces, &a.texts) {
        (Some(p), _) => {
            let read = ingest::read_traces(p, mode)?;
            if !read.skipped.is_empty() {
                eprintln!("{}: skipped {} invalid records", p.display(), read.skipped.len());
            }
            read.pool
        }
        (None, Some(p)) => load_pool(p, PoolLabel::member(), scorer.as_ref(), mode)?,
        (None, None) => unreachable!("clap requires one input"),
    };

    let sets: Vec<attacks::ScoreSet> = pool
        .traces()
        .par_iter()
        .map(|t| attacks::score_selected(t, &config.attack_config, &attacks))
        .collect();
    if !a.skip_unavailable {
        for (t, set) in pool.traces().iter().zip(&sets) {
            if let Some(&attack) = set.skipped.keys().next() {
                // Re-run to surface the typed error rather than its text.
                attacks::score(attack, t, &config.attack_config)?;
            }
        }
    }

    let mut out = String::new();
    let header = ScoreHeader {
        version: "scores_v1",
        attacks: &attacks,
        attack: &config.attack_config,
        records: pool.len(),
    };
    out.push_str(&serde_json::to_string(&header).expect("header serializes"));
    out.push('\n');
    for (t, set) in pool.traces().iter().zip(sets) {
        let rec = ScoreRecord {
            id: &t.id,
            scores: set.scores,
            skipped: set.skipped,
        };
        out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
        out.push('\n');
    }
    write_output(a.out.as_deref(), &out)
}

fn generate(a: GenerateArgs) -> Result<()> {
    let mut config: ExperimentConfig = load_settings(a.config.as_deref())?;
    config.prompt_len = a.prompt_len.unwrap_or(config.prompt_len);
    config.max_new = a.max_new.unwrap_or(config.max_new);
    config.temperature = a.temperature.unwrap_or(config.temperature);
    config.seed = a.seed.unwrap_or(config.seed);
    echo("generate", &config);
    config.validate()?;

    let generator = NGramModel::load(&a.model)?;
    let target = load_model(a.target.as_deref())?;
    let reference = load_model(a.reference.as_deref())?;
    let scorer = scorer(Some(target.as_ref().unwrap_or(&generator)), reference.as_ref()).expect("target present");
    let human = load_pool(&a.prompts, PoolLabel::human(), Some(&scorer), ReadMode::Strict)?;
    let source = SyntheticSource::Model {
        id: a.generator_id.clone(),
        generator: &generator,
        scorer,
    };
    let synth = eval::build_synthetic_pool(&source, &human, &config)?;
    ingest::write_traces(&synth.pool, &a.out)?;
    eprintln!(
        "{} synthetic samples, {} prompts skipped as shorter than {} bytes -> {}",
        synth.pool.len(),
        synth.skipped_short,
        config.prompt_len,
        a.out.display()
    );
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let mut config: ExperimentConfig = load_settings(a.config.as_deref())?;
    apply_attack_flags(&mut config, &a.attack);
    config.seed = a.seed.unwrap_or(config.seed);
    echo("evaluate", &config);
    config.validate()?;

    let target = load_model(a.model.as_deref())?;
    let reference = load_model(a.reference.as_deref())?;
    let scorer = scorer(target.as_ref(), reference.as_ref());
    let members = load_pool(&a.members, PoolLabel::member(), scorer.as_ref(), ReadMode::Strict)?;
    let mut human = None;
    let mut generators = Vec::new();
    for path in &a.nonmembers {
        let pool = load_pool(path, PoolLabel::human(), scorer.as_ref(), ReadMode::Strict)?;
        match pool.label().kind() {
            PoolKind::NonmemberHuman if human.is_none() => human = Some(pool),
            PoolKind::NonmemberHuman => {
                return Err(Error::InvalidConfig(format!(
                    "{}: only one human non-member pool is allowed",
                    path.display()
                )))
            }
            PoolKind::NonmemberSynthetic => generators.push(SyntheticSource::Pool(pool)),
            PoolKind::Member => {
                return Err(Error::WrongPoolKind {
                    expected: "nonmember_human or nonmember_synthetic".into(),
                    found: format!("member ({})", path.display()),
                })
            }
        }
    }
    let human = human.ok_or_else(|| Error::InvalidConfig("no human non-member pool given".into()))?;

    let report = eval::experiment(&members, &human, &generators, &config)?;
    write_output(a.out.as_deref(), &ingest::render_report(&report, a.format))?;

    if let Some(path) = &a.roc {
        let attacks: Vec<Attack> = report.columns();
        let mut curves = Vec::new();
        let mut add = |source: &str, nonmembers: &SamplePool| -> Result<()> {
            for &attack in &attacks {
                let m: Result<Vec<f64>> = members
                    .traces()
                    .iter()
                    .map(|t| attacks::score(attack, t, &config.attack_config))
                    .collect();
                let n: Result<Vec<f64>> = nonmembers
                    .traces()
                    .iter()
                    .map(|t| attacks::score(attack, t, &config.attack_config))
                    .collect();
                if let (Ok(m), Ok(n)) = (m, n) {
                    curves.push((source.to_owned(), attack, eval::roc_curve(&m, &n)?));
                }
            }
            Ok(())
        };
        add(HUMAN_ROW, &human)?;
        let mut synthetic: Vec<&SamplePool> = generators
            .iter()
            .filter_map(|g| match g {
                SyntheticSource::Pool(p) => Some(p),
                SyntheticSource::Model { .. } => None,
            })
            .collect();
        synthetic.sort_by(|a, b| a.label().generator().cmp(&b.label().generator()));
        for pool in synthetic {
            add(pool.label().generator().unwrap_or_default(), pool)?;
        }
        fs::write(path, ingest::render_roc(&curves)).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
