//! Per-sample likelihood traces and labeled pools of them.
//!
//! A [`TokenTrace`] is everything the attacks need to know about one text
//! under the target model: the per-token natural-log probabilities and,
//! optionally, the per-position vocabulary mean/std of log-prob and the
//! per-token log-probs under a reference model.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenTrace {
    pub id: String,
    pub text: String,
    pub tokens: Vec<u32>,
    pub logprob: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_logprob: Option<Vec<f64>>,
}

impl TokenTrace {
    /// A trace carrying only the required fields.
    pub fn new(id: impl Into<String>, text: impl Into<String>, tokens: Vec<u32>, logprob: Vec<f64>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            tokens,
            logprob,
            mu: None,
            sigma: None,
            ref_logprob: None,
        }
    }

    pub fn len(&self) -> usize {
        self.logprob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logprob.is_empty()
    }

    pub fn has_vocab_stats(&self) -> bool {
        self.mu.is_some() && self.sigma.is_some()
    }

    pub fn has_reference(&self) -> bool {
        self.ref_logprob.is_some()
    }

    /// Returns `self` if [`validate_trace`] finds nothing wrong.
    pub fn validated(self) -> Result<Self> {
        let violations = validate_trace(&self);
        if violations.is_empty() {
            Ok(self)
        } else {
            Err(Error::InvalidTrace {
                id: self.id,
                violations: violations.iter().map(ToString::to_string).collect(),
            })
        }
    }
}

/// One broken invariant of a [`TokenTrace`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptySequence,
    /// `field` has `len` entries where `expected` were required.
    LengthMismatch {
        field: &'static str,
        len: usize,
        expected: usize,
    },
    Positive {
        field: &'static str,
        index: usize,
    },
    Negative {
        field: &'static str,
        index: usize,
    },
    NotFinite {
        field: &'static str,
        index: usize,
    },
    /// mu present without sigma or the other way round.
    UnpairedStats {
        present: &'static str,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptySequence => write!(f, "logprob is empty"),
            Violation::LengthMismatch { field, len, expected } => {
                write!(f, "length mismatch: {field} has {len} entries, expected {expected}")
            }
            Violation::Positive { field, index } => write!(f, "{field}[{index}] > 0"),
            Violation::Negative { field, index } => write!(f, "{field}[{index}] < 0"),
            Violation::NotFinite { field, index } => write!(f, "{field}[{index}] is not finite"),
            Violation::UnpairedStats { present } => {
                let missing = if *present == "mu" { "sigma" } else { "mu" };
                write!(f, "{present} present without {missing}")
            }
        }
    }
}

/// Checks every [`TokenTrace`] invariant. An empty result means the trace is
/// valid; the function never panics.
pub fn validate_trace(trace: &TokenTrace) -> Vec<Violation> {
    let mut out = Vec::new();
    let expected = trace.logprob.len();
    if expected == 0 {
        out.push(Violation::EmptySequence);
    }
    if trace.tokens.len() != expected {
        out.push(Violation::LengthMismatch {
            field: "tokens",
            len: trace.tokens.len(),
            expected,
        });
    }

    check_values(&mut out, "logprob", &trace.logprob, Sign::NonPositive);
    let optional = [
        ("mu", trace.mu.as_deref(), Sign::NonPositive),
        ("sigma", trace.sigma.as_deref(), Sign::NonNegative),
        ("ref_logprob", trace.ref_logprob.as_deref(), Sign::NonPositive),
    ];
    for (field, values, sign) in optional {
        if let Some(values) = values {
            if values.len() != expected {
                out.push(Violation::LengthMismatch {
                    field,
                    len: values.len(),
                    expected,
                });
            }
            check_values(&mut out, field, values, sign);
        }
    }

    match (&trace.mu, &trace.sigma) {
        (Some(_), None) => out.push(Violation::UnpairedStats { present: "mu" }),
        (None, Some(_)) => out.push(Violation::UnpairedStats { present: "sigma" }),
        _ => {}
    }
    out
}

#[derive(Clone, Copy)]
enum Sign {
    NonPositive,
    NonNegative,
}

fn check_values(out: &mut Vec<Violation>, field: &'static str, values: &[f64], sign: Sign) {
    for (index, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            out.push(Violation::NotFinite { field, index });
            continue;
        }
        match sign {
            Sign::NonPositive if v > 0.0 => out.push(Violation::Positive { field, index }),
            Sign::NonNegative if v < 0.0 => out.push(Violation::Negative { field, index }),
            _ => {}
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolKind {
    Member,
    NonmemberHuman,
    NonmemberSynthetic,
}

impl PoolKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PoolKind::Member => "member",
            PoolKind::NonmemberHuman => "nonmember_human",
            PoolKind::NonmemberSynthetic => "nonmember_synthetic",
        }
    }
}

impl fmt::Display for PoolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which of the three pools a sample belongs to. Synthetic pools carry the
/// id of the model that generated them; the others never do.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PoolLabel {
    kind: PoolKind,
    generator: Option<String>,
}

impl PoolLabel {
    pub fn member() -> Self {
        Self {
            kind: PoolKind::Member,
            generator: None,
        }
    }

    pub fn human() -> Self {
        Self {
            kind: PoolKind::NonmemberHuman,
            generator: None,
        }
    }

    pub fn synthetic(generator: impl Into<String>) -> Self {
        Self {
            kind: PoolKind::NonmemberSynthetic,
            generator: Some(generator.into()),
        }
    }

    /// Builds a label from its parts, rejecting a generator on a
    /// non-synthetic pool or a synthetic pool without one.
    pub fn new(kind: PoolKind, generator: Option<String>) -> std::result::Result<Self, String> {
        match (kind, generator) {
            (PoolKind::NonmemberSynthetic, Some(g)) => Ok(Self::synthetic(g)),
            (PoolKind::NonmemberSynthetic, None) => Err("synthetic pool requires a generator".into()),
            (kind, None) => Ok(Self { kind, generator: None }),
            (kind, Some(_)) => Err(format!("{kind} pool must not name a generator")),
        }
    }

    pub fn kind(&self) -> PoolKind {
        self.kind
    }

    pub fn generator(&self) -> Option<&str> {
        self.generator.as_deref()
    }

    pub fn is_nonmember(&self) -> bool {
        self.kind != PoolKind::Member
    }
}

/// A labeled, non-empty collection of traces with unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePool {
    label: PoolLabel,
    traces: Vec<TokenTrace>,
    /// Free-form provenance (generation parameters, skip counts, ...).
    pub meta: BTreeMap<String, serde_json::Value>,
}

impl SamplePool {
    pub fn new(label: PoolLabel, traces: Vec<TokenTrace>) -> Result<Self> {
        if traces.is_empty() {
            return Err(Error::EmptyPool(label.kind.as_str()));
        }
        let mut seen = HashSet::with_capacity(traces.len());
        for t in &traces {
            if !seen.insert(t.id.as_str()) {
                return Err(Error::InvalidTrace {
                    id: t.id.clone(),
                    violations: vec!["duplicate id within pool".into()],
                });
            }
        }
        Ok(Self {
            label,
            traces,
            meta: BTreeMap::new(),
        })
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<serde_json::Value>) -> Self {
        self.meta.insert(key.into(), value.into());
        self
    }

    pub fn label(&self) -> &PoolLabel {
        &self.label
    }

    pub fn traces(&self) -> &[TokenTrace] {
        &self.traces
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn into_traces(self) -> Vec<TokenTrace> {
        self.traces
    }

    pub(crate) fn expect_kind(&self, allowed: &[PoolKind]) -> Result<()> {
        if allowed.contains(&self.label.kind) {
            Ok(())
        } else {
            Err(Error::WrongPoolKind {
                expected: allowed.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(" or "),
                found: self.label.kind.to_string(),
            })
        }
    }
}
