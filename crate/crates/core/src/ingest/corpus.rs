//! Corpus loading and the seeded member / non-member / calibration split.
//!
//! Documents are shuffled with `rand::seq::SliceRandom::shuffle` driven by
//! `ChaCha8Rng::seed_from_u64(seed)`; both are portable, so a given seed
//! produces the same split on every platform.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub member_fraction: f64,
    pub calibration_fraction: f64,
    pub seed: u64,
    pub min_doc_bytes: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            member_fraction: 0.5,
            calibration_fraction: 0.0,
            seed: 0,
            min_doc_bytes: 1,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        let m = self.member_fraction;
        let c = self.calibration_fraction;
        if !(m > 0.0 && m < 1.0) {
            return Err(Error::InvalidSplit(format!(
                "member_fraction must be in (0, 1), got {m}"
            )));
        }
        if !(0.0..1.0).contains(&c) {
            return Err(Error::InvalidSplit(format!(
                "calibration_fraction must be in [0, 1), got {c}"
            )));
        }
        if m + c >= 1.0 {
            return Err(Error::InvalidSplit(format!(
                "member_fraction + calibration_fraction must be < 1, got {}",
                m + c
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSplit {
    pub members: Vec<Document>,
    pub nonmembers: Vec<Document>,
    pub calibration: Vec<Document>,
    /// Documents dropped for being shorter than `min_doc_bytes`.
    pub dropped_short: usize,
}

/// One document per non-blank line; ids are `{prefix}:{line}` (1-based).
pub fn parse_documents(text: &str, prefix: &str) -> Vec<Document> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| Document::new(format!("{prefix}:{}", i + 1), l))
        .collect()
}

/// Reads documents from a newline-delimited file, or from every regular
/// file directly under a directory (one document each, ids = file names,
/// in name order).
pub fn read_documents(path: &Path) -> Result<Vec<Document>> {
    let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if meta.is_dir() {
        let mut entries = Vec::new();
        for entry in fs::read_dir(path).map_err(|e| Error::io(path, e))? {
            let entry = entry.map_err(|e| Error::io(path, e))?;
            let p = entry.path();
            if p.is_file() {
                entries.push(p);
            }
        }
        entries.sort();
        entries
            .into_iter()
            .map(|p| {
                let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
                let id = p
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default();
                Ok(Document::new(id, String::from_utf8_lossy(&bytes).into_owned()))
            })
            .collect()
    } else {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let prefix = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "doc".into());
        Ok(parse_documents(&String::from_utf8_lossy(&bytes), &prefix))
    }
}

/// Re-cuts long documents into single-line chunks of roughly
/// `target_bytes`. Paragraphs (separated by blank lines) are packed
/// greedily until a chunk reaches the target; a paragraph longer than twice
/// the target is cut at word boundaries. Whitespace runs become one space.
/// Chunk ids are `{id}#{n}`, counting from 0 within each source document.
pub fn chunk_documents(docs: &[Document], target_bytes: usize) -> Vec<Document> {
    let target = target_bytes.max(1);
    let mut out = Vec::new();
    for doc in docs {
        let mut pieces: Vec<String> = Vec::new();
        let mut current = String::new();
        let flush = |current: &mut String, pieces: &mut Vec<String>| {
            if !current.is_empty() {
                pieces.push(std::mem::take(current));
            }
        };
        for para in paragraphs(&doc.text) {
            let words: Vec<&str> = para.split_whitespace().collect();
            let para_len = words.iter().map(|w| w.len() + 1).sum::<usize>();
            if para_len > 2 * target {
                flush(&mut current, &mut pieces);
                for w in words {
                    push_word(&mut current, w);
                    if current.len() >= target {
                        flush(&mut current, &mut pieces);
                    }
                }
            } else {
                for w in words {
                    push_word(&mut current, w);
                }
            }
            if current.len() >= target {
                flush(&mut current, &mut pieces);
            }
        }
        flush(&mut current, &mut pieces);
        out.extend(
            pieces
                .into_iter()
                .enumerate()
                .map(|(i, text)| Document::new(format!("{}#{i}", doc.id), text)),
        );
    }
    out
}

fn push_word(current: &mut String, w: &str) {
    if !current.is_empty() {
        current.push(' ');
    }
    current.push_str(w);
}

fn paragraphs(text: &str) -> impl Iterator<Item = String> + '_ {
    let mut lines = text.lines().peekable();
    std::iter::from_fn(move || {
        while lines.peek().is_some_and(|l| l.trim().is_empty()) {
            lines.next();
        }
        let mut para = String::new();
        while let Some(l) = lines.next_if(|l| !l.trim().is_empty()) {
            para.push_str(l);
            para.push('\n');
        }
        (!para.is_empty()).then_some(para)
    })
}

/// Drops short documents, shuffles the rest with the configured seed and
/// cuts them into `floor(member_fraction * N)` members,
/// `floor(calibration_fraction * N)` calibration documents and the
/// remaining non-members.
pub fn split_documents(docs: Vec<Document>, config: &SplitConfig) -> Result<CorpusSplit> {
    config.validate()?;
    let before = docs.len();
    let mut docs: Vec<Document> = docs
        .into_iter()
        .filter(|d| d.text.len() >= config.min_doc_bytes)
        .collect();
    let dropped_short = before - docs.len();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    docs.shuffle(&mut rng);

    let n = docs.len();
    let n_members = floor_count(config.member_fraction, n);
    let n_calibration = floor_count(config.calibration_fraction, n);
    let nonmembers = docs.split_off(n_members + n_calibration);
    let calibration = docs.split_off(n_members);
    let members = docs;

    if members.is_empty() {
        return Err(Error::EmptySplit("member"));
    }
    if nonmembers.is_empty() {
        return Err(Error::EmptySplit("non-member"));
    }
    if config.calibration_fraction > 0.0 && calibration.is_empty() {
        return Err(Error::EmptySplit("calibration"));
    }
    Ok(CorpusSplit {
        members,
        nonmembers,
        calibration,
        dropped_short,
    })
}

// The small epsilon keeps products such as 0.57 * 100 = 56.999999999999993
// from flooring one short.
fn floor_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64 + 1e-9).floor() as usize).min(n)
}

pub fn load_corpus(path: impl AsRef<Path>, config: &SplitConfig) -> Result<CorpusSplit> {
    config.validate()?;
    split_documents(read_documents(path.as_ref())?, config)
}
