//! Conventional and synthetic membership evaluation.
//!
//! Members are always the positive class and every attack score is oriented
//! "higher = member", so an AUC below 0.5 means the non-member pool was
//! scored as *more* member-like than the members. Scores are never
//! re-oriented per experiment.

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::{self, Attack, AttackConfig};
use crate::error::{Error, Result};
use crate::toylm::NGramModel;
use crate::trace::{PoolKind, PoolLabel, SamplePool, TokenTrace};

/// Row label of the conventional setup.
pub const HUMAN_ROW: &str = "Human-written";

pub const ORIENTATION_NOTE: &str =
    "positive class = members; every score oriented higher = more member-like; AUC < 0.5 means non-members outscored members";
pub const ZLIB_NOTE: &str = "zlib score = mean token log-likelihood / zlib-compressed byte length of the text";
pub const SELECTION_NOTE: &str = "min-k selection size = max(1, floor(k_fraction * T))";

/// Area under the ROC curve with members as the positive class: the
/// fraction of (member, non-member) pairs in which the member scores higher,
/// ties counting one half.
///
/// Computed from midranks in O(N log N) with integer arithmetic, so the
/// result is bit-identical to the pairwise count.
pub fn auc(members: &[f64], nonmembers: &[f64]) -> Result<f64> {
    if members.is_empty() {
        return Err(Error::EmptyPool("member"));
    }
    if nonmembers.is_empty() {
        return Err(Error::EmptyPool("non-member"));
    }
    if members.iter().chain(nonmembers).any(|v| v.is_nan()) {
        return Err(Error::InvalidConfig("NaN score".into()));
    }
    let mut all: Vec<(f64, bool)> = members
        .iter()
        .map(|&v| (v, true))
        .chain(nonmembers.iter().map(|&v| (v, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Twice the member rank sum; a tie group spanning 1-based ranks
    // lo..=hi gives each element the doubled midrank lo + hi.
    let mut doubled_rank_sum: u128 = 0;
    let mut start = 0;
    while start < all.len() {
        let mut end = start + 1;
        while end < all.len() && all[end].0 == all[start].0 {
            end += 1;
        }
        let doubled_midrank = (start + 1 + end) as u128;
        let in_group = all[start..end].iter().filter(|(_, m)| *m).count() as u128;
        doubled_rank_sum += doubled_midrank * in_group;
        start = end;
    }
    let nm = members.len() as u128;
    let nn = nonmembers.len() as u128;
    let doubled_u = doubled_rank_sum - nm * (nm + 1);
    Ok(doubled_u as f64 / (2 * nm * nn) as f64)
}

/// ROC curve points `(false positive rate, true positive rate)` from the
/// highest threshold down, starting at (0, 0) and ending at (1, 1).
pub fn roc_curve(members: &[f64], nonmembers: &[f64]) -> Result<Vec<(f64, f64)>> {
    if members.is_empty() {
        return Err(Error::EmptyPool("member"));
    }
    if nonmembers.is_empty() {
        return Err(Error::EmptyPool("non-member"));
    }
    let mut all: Vec<(f64, bool)> = members
        .iter()
        .map(|&v| (v, true))
        .chain(nonmembers.iter().map(|&v| (v, false)))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (nm, nn) = (members.len() as f64, nonmembers.len() as f64);
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < all.len() {
        let v = all[i].0;
        while i < all.len() && all[i].0 == v {
            if all[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / nn, tp as f64 / nm));
    }
    Ok(points)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Prompt length in model tokens (bytes for the n-gram model).
    pub prompt_len: usize,
    /// Maximum continuation length in model tokens.
    pub max_new: usize,
    pub temperature: f64,
    pub seed: u64,
    #[serde(rename = "attack")]
    pub attack_config: AttackConfig,
    pub attacks: Vec<Attack>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            prompt_len: 30,
            max_new: 200,
            temperature: 1.0,
            seed: 0,
            attack_config: AttackConfig::default(),
            attacks: Attack::ALL.to_vec(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.prompt_len == 0 {
            return Err(Error::InvalidConfig("prompt_len must be >= 1".into()));
        }
        if self.max_new == 0 {
            return Err(Error::InvalidConfig("max_new must be >= 1".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "temperature must be a non-negative number, got {}",
                self.temperature
            )));
        }
        if self.attacks.is_empty() {
            return Err(Error::InvalidConfig("no attacks selected".into()));
        }
        self.attack_config.validate()
    }

    /// Selected attacks, deduplicated, in report column order.
    pub fn selected_attacks(&self) -> Vec<Attack> {
        let mut a = self.attacks.clone();
        a.sort();
        a.dedup();
        a
    }
}

/// Scores texts under a target model, optionally attaching reference
/// log-probs from a second model.
#[derive(Debug, Clone, Copy)]
pub struct TraceScorer<'a> {
    pub target: &'a NGramModel,
    pub reference: Option<&'a NGramModel>,
}

impl<'a> TraceScorer<'a> {
    pub fn new(target: &'a NGramModel) -> Self {
        Self {
            target,
            reference: None,
        }
    }

    pub fn with_reference(mut self, reference: &'a NGramModel) -> Self {
        self.reference = Some(reference);
        self
    }

    pub fn score_text(&self, id: &str, text: &str) -> Result<TokenTrace> {
        let mut trace = self.target.logprob_trace(text, id)?;
        if let Some(r) = self.reference {
            trace.ref_logprob = Some(r.reference_logprobs(&trace)?);
        }
        Ok(trace)
    }

    /// Scores `(id, text)` documents into a pool, preserving input order.
    pub fn score_pool<I, T>(&self, label: PoolLabel, docs: &[(I, T)]) -> Result<SamplePool>
    where
        I: AsRef<str> + Sync,
        T: AsRef<str> + Sync,
    {
        let traces = docs
            .par_iter()
            .map(|(id, text)| self.score_text(id.as_ref(), text.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        SamplePool::new(label, traces)
    }
}

/// Where a synthetic non-member pool comes from.
#[derive(Debug, Clone)]
pub enum SyntheticSource<'a> {
    /// Continuations sampled from an n-gram generator and scored under the
    /// scorer's target model.
    Model {
        id: String,
        generator: &'a NGramModel,
        scorer: TraceScorer<'a>,
    },
    /// A pool produced elsewhere and already scored under the target.
    Pool(SamplePool),
}

impl SyntheticSource<'_> {
    pub fn id(&self) -> &str {
        match self {
            SyntheticSource::Model { id, .. } => id,
            SyntheticSource::Pool(p) => p.label().generator().unwrap_or(""),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticPool {
    pub pool: SamplePool,
    /// Human non-members shorter than the prompt length.
    pub skipped_short: usize,
}

/// Builds the synthetic counterpart of a human non-member pool: each text
/// long enough is cut to its first `prompt_len` bytes and continued by up to
/// `max_new` generated bytes, with the seed of sample `i` equal to
/// `config.seed ^ i`.
pub fn build_synthetic_pool(
    source: &SyntheticSource<'_>,
    human_nonmembers: &SamplePool,
    config: &ExperimentConfig,
) -> Result<SyntheticPool> {
    config.validate()?;
    let (id, generator, scorer) = match source {
        SyntheticSource::Pool(pool) => {
            pool.expect_kind(&[PoolKind::NonmemberSynthetic])?;
            return Ok(SyntheticPool {
                pool: pool.clone(),
                skipped_short: 0,
            });
        }
        SyntheticSource::Model { id, generator, scorer } => (id, *generator, scorer),
    };
    human_nonmembers.expect_kind(&[PoolKind::NonmemberHuman])?;

    let eligible: Vec<(usize, &TokenTrace)> = human_nonmembers
        .traces()
        .iter()
        .enumerate()
        .filter(|(_, t)| t.text.len() >= config.prompt_len)
        .collect();
    let skipped_short = human_nonmembers.len() - eligible.len();
    if eligible.is_empty() {
        return Err(Error::NoEligibleSamples {
            prompt_len: config.prompt_len,
            skipped: skipped_short,
        });
    }

    let traces = eligible
        .par_iter()
        .map(|&(index, human)| {
            let prompt = &human.text.as_bytes()[..config.prompt_len];
            let seed = config.seed ^ index as u64;
            let bytes = generator.generate(prompt, config.max_new, config.temperature, seed);
            let text = String::from_utf8_lossy(&bytes);
            scorer.score_text(&human.id, &text)
        })
        .collect::<Result<Vec<_>>>()?;

    let pool = SamplePool::new(PoolLabel::synthetic(id.clone()), traces)?
        .with_meta("generator", id.as_str())
        .with_meta("prompt_len", config.prompt_len)
        .with_meta("max_new", config.max_new)
        .with_meta("temperature", config.temperature)
        .with_meta("seed", config.seed)
        .with_meta("skipped_short", skipped_short);
    Ok(SyntheticPool { pool, skipped_short })
}

/// AUCs of one member/non-member comparison.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SetupResult {
    pub auc: BTreeMap<Attack, f64>,
    /// Attacks that could not run, with the reason.
    pub skipped: BTreeMap<Attack, String>,
}

type PoolScores = BTreeMap<Attack, std::result::Result<Vec<f64>, String>>;

fn score_pool(pool: &SamplePool, attacks: &[Attack], config: &AttackConfig) -> PoolScores {
    attacks
        .iter()
        .map(|&attack| {
            let results: Vec<Result<f64>> = pool
                .traces()
                .par_iter()
                .map(|t| attacks::score(attack, t, config))
                .collect();
            let failures = results.iter().filter(|r| r.is_err()).count();
            let scores = match results.iter().find_map(|r| r.as_ref().err()) {
                Some(first) => Err(format!(
                    "{failures} of {} {} traces unsupported ({first})",
                    pool.len(),
                    pool.label().kind()
                )),
                None => Ok(results.into_iter().map(|r| r.expect("checked")).collect()),
            };
            (attack, scores)
        })
        .collect()
}

fn compare(members: &PoolScores, nonmembers: &PoolScores, attacks: &[Attack]) -> Result<SetupResult> {
    let mut out = SetupResult::default();
    for &attack in attacks {
        match (&members[&attack], &nonmembers[&attack]) {
            (Ok(m), Ok(n)) => {
                out.auc.insert(attack, auc(m, n)?);
            }
            (Err(reason), _) | (_, Err(reason)) => {
                out.skipped.insert(attack, reason.clone());
            }
        }
    }
    if out.auc.is_empty() {
        return Err(Error::IncompatibleTraces {
            skipped: out.skipped.into_iter().collect(),
        });
    }
    Ok(out)
}

/// AUC of every selected attack for members vs. one non-member pool.
///
/// An attack is skipped when any trace in either pool lacks its inputs;
/// the setup fails only when every selected attack is skipped.
pub fn run_setup(members: &SamplePool, nonmembers: &SamplePool, config: &ExperimentConfig) -> Result<SetupResult> {
    config.validate()?;
    members.expect_kind(&[PoolKind::Member])?;
    nonmembers.expect_kind(&[PoolKind::NonmemberHuman, PoolKind::NonmemberSynthetic])?;
    let attacks = config.selected_attacks();
    let m = score_pool(members, &attacks, &config.attack_config);
    let n = score_pool(nonmembers, &attacks, &config.attack_config);
    compare(&m, &n, &attacks)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    /// Non-member source: [`HUMAN_ROW`] or a generator id.
    pub source: String,
    pub kind: PoolKind,
    pub nonmembers: usize,
    pub auc: BTreeMap<Attack, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub skipped: BTreeMap<Attack, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub config: ExperimentConfig,
    pub members: usize,
    pub human_nonmembers: usize,
    /// Per generator: human texts too short to prompt.
    pub skipped_short: BTreeMap<String, usize>,
    pub orientation: String,
    pub zlib_score: String,
    pub selection: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, serde_json::Value>,
}

/// One row per non-member source, one column per attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
    pub meta: ReportMeta,
}

impl EvalReport {
    /// Attacks that appear in at least one row, in column order.
    pub fn columns(&self) -> Vec<Attack> {
        let mut cols: Vec<Attack> = self.rows.iter().flat_map(|r| r.auc.keys().copied()).collect();
        cols.sort();
        cols.dedup();
        cols
    }

    pub fn row(&self, source: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.source == source)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for row in &self.rows {
            if !seen.insert(row.source.as_str()) {
                return Err(Error::DuplicateRow(row.source.clone()));
            }
            if let Some((a, v)) = row.auc.iter().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
                return Err(Error::InvalidConfig(format!(
                    "{} {a} AUC {v} outside [0, 1]",
                    row.source
                )));
            }
        }
        Ok(())
    }
}

/// Runs the conventional setup (members vs. human non-members) and one
/// synthetic setup per generator, reusing the same member scores for every
/// row. Rows: [`HUMAN_ROW`] first, then generators sorted by id.
pub fn experiment(
    members: &SamplePool,
    human_nonmembers: &SamplePool,
    generators: &[SyntheticSource<'_>],
    config: &ExperimentConfig,
) -> Result<EvalReport> {
    config.validate()?;
    members.expect_kind(&[PoolKind::Member])?;
    human_nonmembers.expect_kind(&[PoolKind::NonmemberHuman])?;

    let mut ids: Vec<&str> = generators.iter().map(|g| g.id()).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::DuplicateRow(w[0].to_owned()));
    }
    if let Some(id) = ids.iter().find(|id| **id == HUMAN_ROW) {
        return Err(Error::DuplicateRow((*id).to_owned()));
    }

    let attacks = config.selected_attacks();
    let member_scores = score_pool(members, &attacks, &config.attack_config);

    let human = compare(
        &member_scores,
        &score_pool(human_nonmembers, &attacks, &config.attack_config),
        &attacks,
    )?;
    let mut rows = vec![ReportRow {
        source: HUMAN_ROW.to_owned(),
        kind: PoolKind::NonmemberHuman,
        nonmembers: human_nonmembers.len(),
        auc: human.auc,
        skipped: human.skipped,
    }];

    let mut skipped_short = BTreeMap::new();
    let mut synthetic_rows = Vec::with_capacity(generators.len());
    for source in generators {
        let synth = build_synthetic_pool(source, human_nonmembers, config)?;
        let result = compare(
            &member_scores,
            &score_pool(&synth.pool, &attacks, &config.attack_config),
            &attacks,
        )?;
        skipped_short.insert(source.id().to_owned(), synth.skipped_short);
        synthetic_rows.push(ReportRow {
            source: source.id().to_owned(),
            kind: PoolKind::NonmemberSynthetic,
            nonmembers: synth.pool.len(),
            auc: result.auc,
            skipped: result.skipped,
        });
    }
    synthetic_rows.sort_by(|a, b| a.source.cmp(&b.source));
    rows.extend(synthetic_rows);

    let report = EvalReport {
        rows,
        meta: ReportMeta {
            config: config.clone(),
            members: members.len(),
            human_nonmembers: human_nonmembers.len(),
            skipped_short,
            orientation: ORIENTATION_NOTE.to_owned(),
            zlib_score: ZLIB_NOTE.to_owned(),
            selection: SELECTION_NOTE.to_owned(),
            extra: BTreeMap::new(),
        },
    };
    report.validate()?;
    Ok(report)
}
