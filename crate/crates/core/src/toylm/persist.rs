//! Line-oriented count dump for [`NGramModel`].
//!
//! ```text
//! ngram_v1
//! order 5
//! lambda 0.5
//! contexts 3
//! -	97:2 98:1
//! 97	98:1
//! 256 97	98:1
//! ```
//!
//! After the header, one line per context: the context tokens separated by
//! spaces (`-` for the empty context), a tab, then `token:count` pairs in
//! ascending token order. Context lines are sorted so that equal models
//! produce identical files.

// The format example above must show real tabs.
#![allow(clippy::tabs_in_doc_comments)]

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{check_params, ContextCounts, NGramModel, Token, VOCAB_SIZE};
use crate::error::{Error, Result};

const MAGIC: &str = "ngram_v1";

fn format_err(line: usize, message: impl Into<String>) -> Error {
    Error::ModelFormat {
        line,
        message: message.into(),
    }
}

impl NGramModel {
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{MAGIC}")?;
        writeln!(w, "order {}", self.order)?;
        writeln!(w, "lambda {}", self.lambda)?;
        writeln!(w, "contexts {}", self.contexts.len())?;
        let mut keys: Vec<&Box<[Token]>> = self.contexts.keys().collect();
        keys.sort_unstable_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        let mut line = String::new();
        for key in keys {
            line.clear();
            if key.is_empty() {
                line.push('-');
            } else {
                for (i, t) in key.iter().enumerate() {
                    if i > 0 {
                        line.push(' ');
                    }
                    let _ = write!(line, "{t}");
                }
            }
            line.push('\t');
            for (i, (t, c)) in self.contexts[key].next.iter().enumerate() {
                if i > 0 {
                    line.push(' ');
                }
                let _ = write!(line, "{t}:{c}");
            }
            writeln!(w, "{line}")?;
        }
        w.flush()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }

    /// Parses a dump written by [`write_to`](Self::write_to). Rejects
    /// malformed lines, out-of-range tokens, contexts too long for the
    /// declared order, duplicate contexts and zero counts.
    pub fn read_from<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next_line = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((n, Ok(l))) => Ok((n, l)),
                Some((n, Err(e))) => Err(format_err(n, e.to_string())),
                None => Err(format_err(0, format!("unexpected end of file, expected {what}"))),
            }
        };

        let (n, magic) = next_line("header")?;
        if magic.trim_end() != MAGIC {
            return Err(format_err(n, format!("expected {MAGIC:?} header")));
        }
        let order: usize = header_field(next_line("order")?, "order")?;
        let (n, lambda_line) = next_line("lambda")?;
        let lambda: f64 = header_field((n, lambda_line), "lambda")?;
        check_params(order, lambda).map_err(|e| format_err(n, e.to_string()))?;
        let (n, count_line) = next_line("contexts")?;
        let declared: usize = header_field((n, count_line), "contexts")?;

        let mut contexts: HashMap<Box<[Token]>, ContextCounts> = HashMap::new();
        for (n, line) in lines {
            let line = line.map_err(|e| format_err(n, e.to_string()))?;
            if line.is_empty() {
                continue;
            }
            let (ctx_part, next_part) = line
                .split_once('\t')
                .ok_or_else(|| format_err(n, "missing tab between context and counts"))?;
            let ctx: Vec<Token> = if ctx_part == "-" {
                Vec::new()
            } else {
                ctx_part.split(' ').map(|s| parse_token(s, n)).collect::<Result<_>>()?
            };
            if ctx.len() >= order {
                return Err(format_err(
                    n,
                    format!("context of length {} exceeds order {order}", ctx.len()),
                ));
            }
            let mut next = Vec::new();
            let mut seen = HashSet::new();
            let mut total: u64 = 0;
            for pair in next_part.split(' ').filter(|s| !s.is_empty()) {
                let (t, c) = pair
                    .split_once(':')
                    .ok_or_else(|| format_err(n, format!("malformed pair {pair:?}")))?;
                let t = parse_token(t, n)?;
                let c: u64 = c.parse().map_err(|_| format_err(n, format!("malformed count {c:?}")))?;
                if c == 0 {
                    return Err(format_err(n, "zero count"));
                }
                if !seen.insert(t) {
                    return Err(format_err(n, format!("duplicate token {t}")));
                }
                total = total.checked_add(c).ok_or_else(|| format_err(n, "count overflow"))?;
                next.push((t, c));
            }
            next.sort_unstable();
            if contexts
                .insert(ctx.into_boxed_slice(), ContextCounts { total, next })
                .is_some()
            {
                return Err(format_err(n, "duplicate context"));
            }
        }
        if contexts.len() != declared {
            return Err(format_err(
                0,
                format!("header declares {declared} contexts, found {}", contexts.len()),
            ));
        }
        Ok(Self {
            order,
            lambda,
            contexts,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(file))
    }
}

fn header_field<T: std::str::FromStr>((n, line): (usize, String), name: &str) -> Result<T> {
    let value = line
        .strip_prefix(name)
        .and_then(|rest| rest.strip_prefix(' '))
        .ok_or_else(|| format_err(n, format!("expected `{name} <value>`")))?;
    value
        .trim()
        .parse()
        .map_err(|_| format_err(n, format!("invalid {name} value {value:?}")))
}

fn parse_token(s: &str, line: usize) -> Result<Token> {
    match s.parse::<Token>() {
        Ok(t) if (t as usize) < VOCAB_SIZE => Ok(t),
        _ => Err(format_err(line, format!("invalid token {s:?}"))),
    }
}
