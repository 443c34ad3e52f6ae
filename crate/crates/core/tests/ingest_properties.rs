use std::collections::HashSet;
use std::path::{Path, PathBuf};

use miaeval::eval::TraceScorer;
use miaeval::ingest::{self, Document, ReadMode, SplitConfig};
use miaeval::toylm::NGramModel;
use miaeval::trace::{PoolLabel, SamplePool, TokenTrace};
use proptest::prelude::*;

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data/golden")
        .join(name)
}

fn floats(n: usize) -> impl Strategy<Value = Vec<f64>> {
    // Non-positive finite values, including subnormals and -0.0.
    prop::collection::vec(
        prop_oneof![
            any::<f64>().prop_filter_map("finite", |x| x.is_finite().then(|| -x.abs())),
            Just(-0.0),
            Just(-f64::MIN_POSITIVE / 8.0),
        ],
        n,
    )
}

fn trace() -> impl Strategy<Value = TokenTrace> {
    (1usize..20).prop_flat_map(|n| {
        (
            floats(n),
            prop::option::of(floats(n)),
            prop::option::of(floats(n)),
            "\\PC{0,30}",
        )
            .prop_map(move |(lp, mu, r, text)| {
                let mut t = TokenTrace::new("", text, vec![7; n], lp);
                t.mu = mu.clone();
                t.sigma = mu.map(|v| v.iter().map(|x| x.abs()).collect());
                t.ref_logprob = r;
                t
            })
    })
}

fn label() -> impl Strategy<Value = PoolLabel> {
    prop_oneof![
        Just(PoolLabel::member()),
        Just(PoolLabel::human()),
        "[a-z0-9_-]{1,12}".prop_map(PoolLabel::synthetic),
    ]
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn docs() -> impl Strategy<Value = Vec<Document>> {
    prop::collection::vec("[a-z]{0,40}", 2..200).prop_map(|texts| {
        texts
            .into_iter()
            .enumerate()
            .map(|(i, t)| Document::new(format!("d:{i}"), t))
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn trace_files_round_trip_bit_for_bit(label in label(), traces in prop::collection::vec(trace(), 1..10)) {
        let traces: Vec<TokenTrace> = traces
            .into_iter()
            .enumerate()
            .map(|(i, mut t)| {
                t.id = format!("t{i}");
                t
            })
            .collect();
        let pool = SamplePool::new(label, traces).unwrap().with_meta("seed", 3);
        let mut buf = Vec::new();
        ingest::write_pool(&pool, &mut buf).unwrap();
        let back = ingest::parse_pool(buf.as_slice(), ReadMode::Strict).unwrap();
        prop_assert!(back.skipped.is_empty());
        prop_assert_eq!(back.pool.label(), pool.label());
        prop_assert_eq!(&back.pool.meta, &pool.meta);
        for (a, b) in pool.traces().iter().zip(back.pool.traces()) {
            prop_assert_eq!(&a.id, &b.id);
            prop_assert_eq!(&a.text, &b.text);
            prop_assert_eq!(&a.tokens, &b.tokens);
            prop_assert_eq!(bits(&a.logprob), bits(&b.logprob));
            prop_assert_eq!(a.mu.as_deref().map(bits), b.mu.as_deref().map(bits));
            prop_assert_eq!(a.sigma.as_deref().map(bits), b.sigma.as_deref().map(bits));
            prop_assert_eq!(a.ref_logprob.as_deref().map(bits), b.ref_logprob.as_deref().map(bits));
        }
        let mut again = Vec::new();
        ingest::write_pool(&back.pool, &mut again).unwrap();
        prop_assert_eq!(again, buf);
    }

    #[test]
    fn split_is_a_deterministic_partition(
        docs in docs(),
        member in 0.05..0.9f64,
        calibration in 0.0..0.09f64,
        seed in any::<u64>(),
        min_doc_bytes in 0usize..10,
    ) {
        let config = SplitConfig { member_fraction: member, calibration_fraction: calibration, seed, min_doc_bytes };
        let kept: Vec<&Document> = docs.iter().filter(|d| d.text.len() >= min_doc_bytes).collect();
        let n = kept.len();
        let n_members = (member * n as f64 + 1e-9).floor() as usize;
        let n_calibration = (calibration * n as f64 + 1e-9).floor() as usize;
        let degenerate = n_members == 0 || n_members + n_calibration >= n || (calibration > 0.0 && n_calibration == 0);
        let result = ingest::split_documents(docs.clone(), &config);
        prop_assert_eq!(result.is_err(), degenerate);
        let Ok(split) = result else { return Ok(()) };
        prop_assert_eq!(split.dropped_short, docs.len() - n);
        prop_assert_eq!(split.members.len(), n_members);
        prop_assert_eq!(split.calibration.len(), n_calibration);
        prop_assert_eq!(split.members.len() + split.calibration.len() + split.nonmembers.len(), n);

        let ids = |v: &[Document]| v.iter().map(|d| d.id.clone()).collect::<HashSet<_>>();
        let (m, c, h) = (ids(&split.members), ids(&split.calibration), ids(&split.nonmembers));
        prop_assert!(m.is_disjoint(&c) && m.is_disjoint(&h) && c.is_disjoint(&h));
        let all: HashSet<String> = kept.iter().map(|d| d.id.clone()).collect();
        prop_assert_eq!(&m | &(&c | &h), all);

        prop_assert_eq!(ingest::split_documents(docs, &config).unwrap(), split);
    }

    #[test]
    fn chunks_keep_every_word(paras in prop::collection::vec("[a-z]{1,12}( [a-z]{1,12}){0,30}", 1..20), target in 10usize..200) {
        let text = paras.join("\n\n");
        let doc = Document::new("src", text.clone());
        let chunks = ingest::chunk_documents(&[doc], target);
        let words: Vec<&str> = text.split_whitespace().collect();
        let rejoined: Vec<&str> = chunks.iter().flat_map(|c| c.text.split_whitespace()).collect();
        prop_assert_eq!(rejoined, words);
        prop_assert!(chunks.iter().all(|c| !c.text.contains('\n')));
    }
}

#[test]
fn parse_documents_skips_blank_lines() {
    let docs = ingest::parse_documents("a b\n\n  \nc\n", "f");
    assert_eq!(docs, vec![Document::new("f:1", "a b"), Document::new("f:4", "c")]);
}

#[test]
fn golden_trace_file() {
    let corpus = ingest::read_documents(&golden("tiny-corpus.txt")).unwrap();
    let texts: Vec<&str> = corpus.iter().map(|d| d.text.as_str()).collect();
    let model = NGramModel::train(&texts, 3, 0.5).unwrap();
    assert_eq!(NGramModel::load(golden("tiny.ngram")).unwrap(), model);

    let scorer = TraceScorer::new(&model);
    let pairs: Vec<(String, String)> = ingest::read_documents(&golden("tiny-texts.txt"))
        .unwrap()
        .into_iter()
        .map(|d| (d.id, d.text))
        .collect();
    let pool = scorer.score_pool(PoolLabel::member(), &pairs).unwrap();

    let read = ingest::read_traces(golden("tiny.trace_v1.jsonl"), ReadMode::Strict).unwrap();
    assert_eq!(read.pool, pool);

    let mut buf = Vec::new();
    ingest::write_pool(&pool, &mut buf).unwrap();
    assert_eq!(buf, std::fs::read(golden("tiny.trace_v1.jsonl")).unwrap());

    // First byte of each text: both training lines start with 't', so
    // p('t' | BOS BOS) = (2 + 0.5) / (2 + 0.5 * 257) and p('a' | BOS BOS) = 0.5 / 130.5.
    let t = &read.pool.traces()[0];
    assert!((t.logprob[0] - (2.5f64 / 130.5).ln()).abs() < 1e-12);
    let a = &read.pool.traces()[1];
    assert!((a.logprob[0] - (0.5f64 / 130.5).ln()).abs() < 1e-12);
}

#[test]
fn golden_synthetic_pool_parses() {
    let read = ingest::read_traces(golden("tiny-synthetic.trace_v1.jsonl"), ReadMode::Strict).unwrap();
    assert_eq!(read.pool.label(), &PoolLabel::synthetic("self"));
    assert_eq!(read.pool.meta["prompt_len"], 8);
}
