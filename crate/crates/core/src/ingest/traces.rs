//! `trace_v1` pool files.
//!
//! JSON Lines, UTF-8. Line 1 is a header naming the format and the pool
//! label; every following line is one trace:
//!
//! ```text
//! {"version":"trace_v1","kind":"nonmember_synthetic","generator":"self","meta":{"prompt_len":30}}
//! {"id":"doc:12","kind":"nonmember_synthetic","generator":"self","text":"...","tokens":[84,104],"logprob":[-3.1,-0.4],"mu":[-2.9,-1.2],"sigma":[1.7,1.1]}
//! ```
//!
//! `mu`, `sigma` and `ref_logprob` are optional. Floats are written in the
//! shortest form that parses back to the same bits.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{validate_trace, PoolKind, PoolLabel, SamplePool, TokenTrace};

pub const TRACE_VERSION: &str = "trace_v1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    version: String,
    kind: PoolKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    generator: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    meta: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    kind: PoolKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    generator: Option<String>,
    text: String,
    tokens: Vec<u32>,
    logprob: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mu: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sigma: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ref_logprob: Option<Vec<f64>>,
}

/// How [`parse_pool`] treats records that fail to parse or validate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReadMode {
    /// Any bad record fails the whole file.
    #[default]
    Strict,
    /// Bad records are skipped and counted.
    Lenient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReadPool {
    pub pool: SamplePool,
    /// Records skipped in lenient mode, with their line numbers and reasons.
    pub skipped: Vec<(usize, String)>,
}

pub fn write_pool<W: Write>(pool: &SamplePool, mut w: W) -> std::io::Result<()> {
    let label = pool.label();
    let header = Header {
        version: TRACE_VERSION.to_owned(),
        kind: label.kind(),
        generator: label.generator().map(str::to_owned),
        meta: pool.meta.clone(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for t in pool.traces() {
        let rec = Record {
            id: t.id.clone(),
            kind: label.kind(),
            generator: label.generator().map(str::to_owned),
            text: t.text.clone(),
            tokens: t.tokens.clone(),
            logprob: t.logprob.clone(),
            mu: t.mu.clone(),
            sigma: t.sigma.clone(),
            ref_logprob: t.ref_logprob.clone(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn write_traces(pool: &SamplePool, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_pool(pool, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

/// True if `first_line` is a `trace_v1` header.
pub fn is_trace_header(first_line: &str) -> bool {
    serde_json::from_str::<Header>(first_line)
        .map(|h| h.version == TRACE_VERSION)
        .unwrap_or(false)
}

fn parse_header(line_no: usize, line: &str) -> Result<PoolLabelWithMeta> {
    let header: Header =
        serde_json::from_str(line).map_err(|e| Error::schema(line_no, format!("invalid header: {e}")))?;
    if header.version != TRACE_VERSION {
        return Err(Error::schema(
            line_no,
            format!("unsupported version {:?}, expected {TRACE_VERSION:?}", header.version),
        ));
    }
    let label = PoolLabel::new(header.kind, header.generator).map_err(|e| Error::schema(line_no, e))?;
    Ok((label, header.meta))
}

type PoolLabelWithMeta = (PoolLabel, BTreeMap<String, serde_json::Value>);

fn parse_record(line: &str, label: &PoolLabel) -> std::result::Result<TokenTrace, String> {
    let rec: Record = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let rec_label = PoolLabel::new(rec.kind, rec.generator)?;
    if &rec_label != label {
        return Err(format!(
            "record label {}{} does not match header {}{}",
            rec_label.kind(),
            rec_label.generator().map(|g| format!("/{g}")).unwrap_or_default(),
            label.kind(),
            label.generator().map(|g| format!("/{g}")).unwrap_or_default(),
        ));
    }
    let trace = TokenTrace {
        id: rec.id,
        text: rec.text,
        tokens: rec.tokens,
        logprob: rec.logprob,
        mu: rec.mu,
        sigma: rec.sigma,
        ref_logprob: rec.ref_logprob,
    };
    let violations = validate_trace(&trace);
    if !violations.is_empty() {
        let v: Vec<String> = violations.iter().map(ToString::to_string).collect();
        return Err(format!("invalid trace {:?}: {}", trace.id, v.join("; ")));
    }
    Ok(trace)
}

/// Reads a `trace_v1` pool. The header is always required; record problems
/// are fatal in [`ReadMode::Strict`] and skipped in [`ReadMode::Lenient`].
pub fn parse_pool<R: BufRead>(reader: R, mode: ReadMode) -> Result<ReadPool> {
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (label, meta) = match lines.next() {
        None => return Err(Error::schema(1, "missing trace_v1 header")),
        Some((n, Err(e))) => return Err(Error::schema(n, e.to_string())),
        Some((n, Ok(l))) => parse_header(n, &l)?,
    };

    let mut traces = Vec::new();
    let mut ids = HashSet::new();
    let mut skipped = Vec::new();
    for (n, line) in lines {
        let line = line.map_err(|e| Error::schema(n, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = parse_record(&line, &label).and_then(|t| {
            if ids.contains(&t.id) {
                Err(format!("duplicate id {:?}", t.id))
            } else {
                Ok(t)
            }
        });
        match (parsed, mode) {
            (Ok(t), _) => {
                ids.insert(t.id.clone());
                traces.push(t);
            }
            (Err(msg), ReadMode::Strict) => return Err(Error::schema(n, msg)),
            (Err(msg), ReadMode::Lenient) => skipped.push((n, msg)),
        }
    }
    let mut pool = SamplePool::new(label, traces)?;
    pool.meta = meta;
    Ok(ReadPool { pool, skipped })
}

pub fn read_traces(path: impl AsRef<Path>, mode: ReadMode) -> Result<ReadPool> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_pool(BufReader::new(file), mode)
}
