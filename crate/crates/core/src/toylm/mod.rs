//! Byte-level n-gram language model with additive smoothing and backoff.
//!
//! Tokens are the 256 byte values plus a beginning-of-sequence id ([`BOS`]).
//! For a context of length `order - 1` the model uses the longest suffix of
//! the context that was observed during training:
//!
//! ```text
//! p(v | ctx) = (count(ctx, v) + lambda) / (count(ctx) + lambda * 257)
//! ```
//!
//! and backs off to the next shorter suffix when `count(ctx) == 0`. If not
//! even the empty context was observed the distribution is uniform.

mod persist;

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::trace::TokenTrace;

pub type Token = u16;

pub const BOS: Token = 256;
pub const VOCAB_SIZE: usize = 257;
pub const MAX_ORDER: usize = 16;
pub const DEFAULT_ORDER: usize = 5;
pub const DEFAULT_LAMBDA: f64 = 0.5;

/// Observed continuations of one context.
#[derive(Debug, Clone, Default, PartialEq)]
struct ContextCounts {
    total: u64,
    /// Sorted by token.
    next: Vec<(Token, u64)>,
}

impl ContextCounts {
    fn count(&self, token: Token) -> u64 {
        self.next
            .binary_search_by_key(&token, |&(t, _)| t)
            .map(|i| self.next[i].1)
            .unwrap_or(0)
    }
}

/// A trained, frozen n-gram model. Construct with [`NGramModel::train`] or
/// load a persisted one with [`NGramModel::read_from`].
#[derive(Debug, Clone, PartialEq)]
pub struct NGramModel {
    order: usize,
    lambda: f64,
    /// Keyed by context; contexts of every length `0..order` are present.
    contexts: HashMap<Box<[Token]>, ContextCounts>,
}

fn check_params(order: usize, lambda: f64) -> Result<()> {
    if order == 0 || order > MAX_ORDER {
        return Err(Error::InvalidOrder(order));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidLambda(lambda));
    }
    Ok(())
}

impl NGramModel {
    /// Counts every n-gram (and every lower-order suffix) of each document,
    /// with documents prefixed by `order - 1` BOS tokens.
    pub fn train<S: AsRef<str>>(corpus: &[S], order: usize, lambda: f64) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        check_params(order, lambda)?;

        let mut raw: HashMap<Box<[Token]>, HashMap<Token, u64>> = HashMap::new();
        let pad = order - 1;
        let mut buf: Vec<Token> = Vec::new();
        for doc in corpus {
            buf.clear();
            buf.extend(std::iter::repeat_n(BOS, pad));
            buf.extend(doc.as_ref().bytes().map(Token::from));
            for t in pad..buf.len() {
                let next = buf[t];
                for k in 0..order {
                    let ctx = &buf[t - k..t];
                    match raw.get_mut(ctx) {
                        Some(m) => *m.entry(next).or_insert(0) += 1,
                        None => {
                            raw.insert(ctx.into(), HashMap::from([(next, 1)]));
                        }
                    }
                }
            }
        }
        Ok(Self::from_raw(order, lambda, raw))
    }

    fn from_raw(order: usize, lambda: f64, raw: HashMap<Box<[Token]>, HashMap<Token, u64>>) -> Self {
        let contexts = raw
            .into_iter()
            .map(|(ctx, m)| {
                let mut next: Vec<(Token, u64)> = m.into_iter().collect();
                next.sort_unstable();
                let total = next.iter().map(|&(_, c)| c).sum();
                (ctx, ContextCounts { total, next })
            })
            .collect();
        Self {
            order,
            lambda,
            contexts,
        }
    }

    /// A model with no observations: every distribution is uniform.
    pub fn untrained(order: usize, lambda: f64) -> Result<Self> {
        check_params(order, lambda)?;
        Ok(Self {
            order,
            lambda,
            contexts: HashMap::new(),
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Number of distinct contexts stored (all orders).
    pub fn num_contexts(&self) -> usize {
        self.contexts.len()
    }

    /// The context actually used for prediction: the longest observed suffix
    /// of the BOS-padded history, or `None` when nothing was observed.
    fn active_context(&self, history: &[Token]) -> Option<&ContextCounts> {
        let want = self.order - 1;
        let mut padded: Vec<Token>;
        let ctx: &[Token] = if history.len() >= want {
            &history[history.len() - want..]
        } else {
            padded = vec![BOS; want - history.len()];
            padded.extend_from_slice(history);
            &padded
        };
        (0..=want)
            .rev()
            .find_map(|k| self.contexts.get(&ctx[want - k..]).filter(|c| c.total > 0))
    }

    /// Full next-token distribution (length [`VOCAB_SIZE`]) after `history`.
    /// Histories shorter than `order - 1` are left-padded with BOS.
    pub fn next_distribution(&self, history: &[Token]) -> Vec<f64> {
        let mut out = vec![0.0; VOCAB_SIZE];
        self.fill_distribution(history, &mut out);
        out
    }

    fn fill_distribution(&self, history: &[Token], out: &mut [f64]) {
        match self.active_context(history) {
            None => out.fill(1.0 / VOCAB_SIZE as f64),
            Some(c) => {
                let denom = c.total as f64 + self.lambda * VOCAB_SIZE as f64;
                out.fill(self.lambda / denom);
                for &(t, n) in &c.next {
                    out[t as usize] = (n as f64 + self.lambda) / denom;
                }
            }
        }
    }

    /// Probability of a single token; same value as the corresponding entry
    /// of [`next_distribution`](Self::next_distribution).
    pub fn prob(&self, history: &[Token], token: Token) -> f64 {
        match self.active_context(history) {
            None => 1.0 / VOCAB_SIZE as f64,
            Some(c) => {
                let denom = c.total as f64 + self.lambda * VOCAB_SIZE as f64;
                (c.count(token) as f64 + self.lambda) / denom
            }
        }
    }

    /// Expected log-prob and its standard deviation under the next-token
    /// distribution after `history`.
    pub fn vocab_stats(&self, history: &[Token]) -> (f64, f64) {
        distribution_stats(&self.next_distribution(history))
    }

    /// Per-token natural-log probabilities of a byte sequence, each byte
    /// conditioned on the BOS-padded bytes before it.
    pub fn byte_logprobs(&self, bytes: &[u8]) -> Vec<f64> {
        let history = self.padded(bytes);
        let pad = self.order - 1;
        (0..bytes.len())
            .map(|i| self.prob(&history[..pad + i], Token::from(bytes[i])).ln())
            .collect()
    }

    fn padded(&self, bytes: &[u8]) -> Vec<Token> {
        let mut h = Vec::with_capacity(bytes.len() + self.order);
        h.extend(std::iter::repeat_n(BOS, self.order - 1));
        h.extend(bytes.iter().map(|&b| Token::from(b)));
        h
    }

    /// Scores `text` under this model: per-byte log-probs plus the exact
    /// per-position vocabulary mean/std of log-prob.
    pub fn logprob_trace(&self, text: &str, id: &str) -> Result<TokenTrace> {
        if text.is_empty() {
            return Err(Error::EmptyText { id: id.to_owned() });
        }
        let bytes = text.as_bytes();
        let history = self.padded(bytes);
        let pad = self.order - 1;
        let mut logprob = Vec::with_capacity(bytes.len());
        let mut mu = Vec::with_capacity(bytes.len());
        let mut sigma = Vec::with_capacity(bytes.len());
        let mut dist = vec![0.0; VOCAB_SIZE];
        for (i, &b) in bytes.iter().enumerate() {
            self.fill_distribution(&history[..pad + i], &mut dist);
            logprob.push(dist[b as usize].ln());
            let (m, s) = distribution_stats(&dist);
            mu.push(m);
            sigma.push(s);
        }
        Ok(TokenTrace {
            id: id.to_owned(),
            text: text.to_owned(),
            tokens: bytes.iter().map(|&b| u32::from(b)).collect(),
            logprob,
            mu: Some(mu),
            sigma: Some(sigma),
            ref_logprob: None,
        })
    }

    /// Log-probs of an existing trace's tokens under this model, for use as
    /// the trace's reference log-probs. Tokens must be bytes.
    pub fn reference_logprobs(&self, trace: &TokenTrace) -> Result<Vec<f64>> {
        let bytes = trace
            .tokens
            .iter()
            .enumerate()
            .map(|(position, &token)| u8::try_from(token).map_err(|_| Error::TokenOutOfRange { position, token }))
            .collect::<Result<Vec<u8>>>()?;
        Ok(self.byte_logprobs(&bytes))
    }

    /// Continues `prompt` by up to `max_new` sampled bytes.
    ///
    /// Temperature 0 takes the most likely byte (lowest id on ties); otherwise
    /// bytes are drawn from `p^(1/temperature)`, renormalized over the 256
    /// byte values (BOS is never emitted). The draw sequence depends only on
    /// `seed`.
    pub fn generate(&self, prompt: &[u8], max_new: usize, temperature: f64, seed: u64) -> Vec<u8> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut history = self.padded(prompt);
        let mut dist = vec![0.0; VOCAB_SIZE];
        let mut weights = [0.0f64; 256];
        for _ in 0..max_new {
            self.fill_distribution(&history, &mut dist);
            let next = if temperature <= 0.0 {
                argmax_byte(&dist)
            } else {
                sample_byte(&dist, temperature, &mut weights, &mut rng)
            };
            history.push(Token::from(next));
        }
        history[self.order - 1..].iter().map(|&t| t as u8).collect()
    }
}

fn argmax_byte(dist: &[f64]) -> u8 {
    let mut best = 0usize;
    for (i, &p) in dist.iter().enumerate().take(256) {
        if p > dist[best] {
            best = i;
        }
    }
    best as u8
}

fn sample_byte(dist: &[f64], temperature: f64, weights: &mut [f64; 256], rng: &mut impl Rng) -> u8 {
    let inv = 1.0 / temperature;
    let max_log = dist[..256].iter().map(|p| p.ln()).fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (w, p) in weights.iter_mut().zip(&dist[..256]) {
        *w = ((p.ln() - max_log) * inv).exp();
        total += *w;
    }
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if target < acc {
            return i as u8;
        }
    }
    // Rounding can leave `target` a hair above the final cumulative sum.
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(255) as u8
}

/// Mean and standard deviation of `ln p` under `p` itself.
///
/// Computed on log-probs shifted by the first entry so that a distribution
/// with equal probabilities yields a standard deviation of exactly zero.
pub fn distribution_stats(dist: &[f64]) -> (f64, f64) {
    let Some(&first) = dist.first() else {
        return (0.0, 0.0);
    };
    let anchor = first.ln();
    let shifted_mean: f64 = dist.iter().filter(|&&p| p > 0.0).map(|&p| p * (p.ln() - anchor)).sum();
    let var: f64 = dist
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| {
            let d = p.ln() - anchor - shifted_mean;
            p * d * d
        })
        .sum();
    (anchor + shifted_mean, var.max(0.0).sqrt())
}
