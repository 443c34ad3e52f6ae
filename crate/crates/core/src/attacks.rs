//! Membership scores over a [`TokenTrace`].
//!
//! Every score is oriented so that a higher value means "more member-like".
//! Likelihood-based scores are means of natural-log probabilities, i.e. the
//! negated mean loss.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use flate2::write::ZlibEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::TokenTrace;

/// The five attacks, in report column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attack {
    Loss,
    MinK,
    MinKPp,
    Reference,
    Zlib,
}

impl Attack {
    pub const ALL: [Attack; 5] = [
        Attack::Loss,
        Attack::MinK,
        Attack::MinKPp,
        Attack::Reference,
        Attack::Zlib,
    ];

    /// Identifier used in files and on the command line.
    pub fn key(self) -> &'static str {
        match self {
            Attack::Loss => "loss",
            Attack::MinK => "min_k",
            Attack::MinKPp => "min_k_pp",
            Attack::Reference => "reference",
            Attack::Zlib => "zlib",
        }
    }

    /// Column header used in rendered tables.
    pub fn column(self) -> &'static str {
        match self {
            Attack::Loss => "LOSS",
            Attack::MinK => "min-k",
            Attack::MinKPp => "min-k++",
            Attack::Reference => "Ref",
            Attack::Zlib => "zlib",
        }
    }
}

impl fmt::Display for Attack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Attack {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', '%'], "_");
        match norm.as_str() {
            "loss" => Ok(Attack::Loss),
            "reference" | "ref" => Ok(Attack::Reference),
            "zlib" => Ok(Attack::Zlib),
            "min_k" | "mink" => Ok(Attack::MinK),
            "min_k_pp" | "min_k++" | "min_kpp" | "mink++" => Ok(Attack::MinKPp),
            _ => Err(format!(
                "unknown attack {s:?} (expected one of loss, reference, zlib, min_k, min_k_pp)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    /// Fraction of tokens averaged by Min-K% and Min-K%++.
    pub k_fraction: f64,
    /// Lower bound applied to the per-position std in Min-K%++.
    pub sigma_floor: f64,
    pub zlib_level: u32,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            k_fraction: 0.2,
            sigma_floor: 1e-6,
            zlib_level: 6,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_fraction > 0.0 && self.k_fraction <= 1.0) {
            return Err(Error::InvalidAttackConfig(format!(
                "k_fraction must be in (0, 1], got {}",
                self.k_fraction
            )));
        }
        if !(self.sigma_floor > 0.0 && self.sigma_floor.is_finite()) {
            return Err(Error::InvalidAttackConfig(format!(
                "sigma_floor must be positive, got {}",
                self.sigma_floor
            )));
        }
        if self.zlib_level > 9 {
            return Err(Error::InvalidAttackConfig(format!(
                "zlib_level must be 0-9, got {}",
                self.zlib_level
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackScore {
    pub attack: Attack,
    pub value: f64,
}

fn mean(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let sum = values.iter().sum::<f64>();
    if sum.is_finite() {
        sum / n
    } else {
        // Finite inputs whose sum overflows; each term is now at most max / n.
        values.iter().map(|v| v / n).sum()
    }
}

/// Size of the bottom-k selection: `max(1, floor(k * len))`.
pub fn selection_size(k_fraction: f64, len: usize) -> usize {
    ((k_fraction * len as f64).floor() as usize).clamp(1, len.max(1))
}

/// Mean of the `m` smallest values.
fn mean_of_smallest(values: &[f64], k_fraction: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = selection_size(k_fraction, sorted.len());
    mean(&sorted[..m])
}

/// Mean token log-likelihood.
pub fn score_loss(trace: &TokenTrace) -> f64 {
    mean(&trace.logprob)
}

/// Target mean log-likelihood minus reference mean log-likelihood.
pub fn score_reference(trace: &TokenTrace) -> Result<f64> {
    let reference = trace
        .ref_logprob
        .as_deref()
        .ok_or_else(|| Error::MissingReference { id: trace.id.clone() })?;
    Ok(mean(&trace.logprob) - mean(reference))
}

/// zlib-container (RFC 1950) compression of `bytes` at `level`.
pub fn zlib_compress(bytes: &[u8], level: u32) -> Vec<u8> {
    let mut enc = ZlibEncoder::new(Vec::with_capacity(bytes.len() / 2 + 16), Compression::new(level.min(9)));
    enc.write_all(bytes).expect("writing to a Vec cannot fail");
    enc.finish().expect("writing to a Vec cannot fail")
}

/// Byte length of [`zlib_compress`].
pub fn compressed_len(bytes: &[u8], level: u32) -> usize {
    zlib_compress(bytes, level).len()
}

/// Mean log-likelihood divided by the compressed length of the text.
pub fn score_zlib(trace: &TokenTrace, config: &AttackConfig) -> Result<f64> {
    if trace.text.is_empty() {
        return Err(Error::EmptyText { id: trace.id.clone() });
    }
    let z = compressed_len(trace.text.as_bytes(), config.zlib_level);
    Ok(score_loss(trace) / z as f64)
}

/// Mean of the lowest k-fraction of token log-probs.
pub fn score_min_k(trace: &TokenTrace, config: &AttackConfig) -> f64 {
    mean_of_smallest(&trace.logprob, config.k_fraction)
}

/// Min-K% over per-position z-scores `(logprob - mu) / max(sigma, floor)`.
pub fn score_min_k_pp(trace: &TokenTrace, config: &AttackConfig) -> Result<f64> {
    let (Some(mu), Some(sigma)) = (trace.mu.as_deref(), trace.sigma.as_deref()) else {
        return Err(Error::MissingVocabStats { id: trace.id.clone() });
    };
    let z: Vec<f64> = trace
        .logprob
        .iter()
        .zip(mu)
        .zip(sigma)
        .map(|((&lp, &m), &s)| (lp - m) / s.max(config.sigma_floor))
        .collect();
    if let Some(i) = z.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidTrace {
            id: trace.id.clone(),
            violations: vec![format!("z-score at position {i} overflows")],
        });
    }
    Ok(mean_of_smallest(&z, config.k_fraction))
}

pub fn score(attack: Attack, trace: &TokenTrace, config: &AttackConfig) -> Result<f64> {
    match attack {
        Attack::Loss => Ok(score_loss(trace)),
        Attack::Reference => score_reference(trace),
        Attack::Zlib => score_zlib(trace, config),
        Attack::MinK => Ok(score_min_k(trace, config)),
        Attack::MinKPp => score_min_k_pp(trace, config),
    }
}

/// Scores from [`score_all`], plus the attacks that could not run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    pub scores: BTreeMap<Attack, f64>,
    pub skipped: BTreeMap<Attack, String>,
}

/// Runs every attack whose inputs the trace carries.
pub fn score_all(trace: &TokenTrace, config: &AttackConfig) -> ScoreSet {
    score_selected(trace, config, &Attack::ALL)
}

pub fn score_selected(trace: &TokenTrace, config: &AttackConfig, attacks: &[Attack]) -> ScoreSet {
    let mut set = ScoreSet::default();
    for &attack in attacks {
        match score(attack, trace, config) {
            Ok(v) => {
                set.scores.insert(attack, v);
            }
            Err(e) => {
                set.skipped.insert(attack, e.to_string());
            }
        }
    }
    set
}
