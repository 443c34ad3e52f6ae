use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data/golden")
        .join(name)
}

fn miaeval(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_miaeval")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = miaeval(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A trained model plus prompt and member files in a fresh directory.
struct Fixture {
    dir: TempDir,
    model: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("corpus.txt");
        let mut text = String::new();
        for i in 0..40 {
            text.push_str(&format!(
                "line {i}: the quick brown fox jumps over the lazy dog number {}\n",
                i * 7
            ));
        }
        fs::write(&corpus, text).unwrap();
        let model = dir.path().join("m.ngram");
        ok(&["train-lm", "--corpus", s(&corpus), "--order", "3", "--out", s(&model)]);
        Self { dir, model }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        fs::write(&p, text).unwrap();
        p
    }
}

#[test]
fn train_lm_writes_a_loadable_model() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("tiny.ngram");
    ok(&[
        "train-lm",
        "--corpus",
        s(&golden("tiny-corpus.txt")),
        "--order",
        "3",
        "--out",
        s(&out),
    ]);
    assert_eq!(fs::read(&out).unwrap(), fs::read(golden("tiny.ngram")).unwrap());
}

#[test]
fn missing_corpus_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.txt");
    let out = miaeval(&["train-lm", "--corpus", s(&missing), "--out", s(&dir.path().join("m"))]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("nope.txt"), "{}", stderr(&out));
}

#[test]
fn order_zero_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = miaeval(&[
        "train-lm",
        "--corpus",
        s(&golden("tiny-corpus.txt")),
        "--order",
        "0",
        "--out",
        s(&dir.path().join("m")),
    ]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("invalid n-gram order 0"), "{}", stderr(&out));
}

#[test]
fn unknown_flag_is_rejected() {
    let out = miaeval(&["score", "--traces", "x", "--bogus"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("--bogus"));
}

#[test]
fn score_all_attacks_and_echo_k() {
    let f = Fixture::new();
    let texts = f.write("t.txt", "the quick brown fox\nthe lazy dog number 3\n");
    let scores = f.path("s.jsonl");
    let out = ok(&[
        "score",
        "--model",
        s(&f.model),
        "--reference",
        s(&f.model),
        "--texts",
        s(&texts),
        "--k",
        "0.2",
        "--out",
        s(&scores),
    ]);
    assert!(stderr(&out).contains("# score resolved config"));

    let text = fs::read_to_string(&scores).unwrap();
    let mut lines = text
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap());
    let header = lines.next().unwrap();
    assert_eq!(header["version"], "scores_v1");
    assert_eq!(header["attack"]["k_fraction"], 0.2);
    let records: Vec<_> = lines.collect();
    assert_eq!(records.len(), 2);
    for r in records {
        assert_eq!(r["scores"].as_object().unwrap().len(), 5, "{r}");
    }
}

#[test]
fn min_k_pp_needs_vocab_stats_unless_skipped() {
    let f = Fixture::new();
    let traces = f.write(
        "bare.jsonl",
        "{\"version\":\"trace_v1\",\"kind\":\"member\"}\n\
         {\"id\":\"a\",\"kind\":\"member\",\"text\":\"ab\",\"tokens\":[97,98],\"logprob\":[-1.0,-2.0]}\n",
    );
    let out = miaeval(&["score", "--traces", s(&traces), "--attacks", "loss,min_k_pp"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("mu/sigma"), "{}", stderr(&out));

    let out = ok(&[
        "score",
        "--traces",
        s(&traces),
        "--attacks",
        "loss,min_k_pp",
        "--skip-unavailable",
    ]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    let rec: serde_json::Value = serde_json::from_str(stdout.lines().nth(1).unwrap()).unwrap();
    assert_eq!(rec["scores"]["loss"], -1.5);
    assert!(rec["skipped"]["min_k_pp"].is_string());
}

#[test]
fn generate_records_metadata_and_is_seeded() {
    let f = Fixture::new();
    let prompts = f.write(
        "p.txt",
        "the quick brown fox jumps over the lazy dog again\nshort\nline 99: the quick brown fox jumps over it all\n",
    );
    let run = |seed: &str, out: &str| {
        ok(&[
            "generate",
            "--model",
            s(&f.model),
            "--prompts",
            s(&prompts),
            "--prompt-len",
            "30",
            "--max-new",
            "200",
            "--seed",
            seed,
            "--out",
            s(&f.path(out)),
        ]);
        fs::read(f.path(out)).unwrap()
    };
    let a = run("7", "a.jsonl");
    assert_eq!(a, run("7", "b.jsonl"));
    assert_ne!(a, run("8", "c.jsonl"));

    let text = String::from_utf8(a).unwrap();
    let header: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(header["kind"], "nonmember_synthetic");
    assert_eq!(header["generator"], "self");
    assert_eq!(header["meta"]["prompt_len"], 30);
    assert_eq!(header["meta"]["max_new"], 200);
    assert_eq!(header["meta"]["skipped_short"], 1);
    assert_eq!(text.lines().count(), 3);
    for line in text.lines().skip(1) {
        let rec: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(
            rec["tokens"].as_array().unwrap().len(),
            rec["text"].as_str().unwrap().len()
        );
    }
}

#[test]
fn generate_without_long_prompts_fails() {
    let f = Fixture::new();
    let prompts = f.write("p.txt", "tiny\nsmall\n");
    let out = miaeval(&[
        "generate",
        "--model",
        s(&f.model),
        "--prompts",
        s(&prompts),
        "--prompt-len",
        "30",
        "--out",
        s(&f.path("g.jsonl")),
    ]);
    assert!(!out.status.success());
    assert!(
        stderr(&out).contains("no sample is at least 30 tokens long"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn evaluate_reports_one_row_per_source() {
    let f = Fixture::new();
    let members = f.write("m.txt", "line 1: the quick brown fox jumps over the lazy dog number 7\nline 2: the quick brown fox jumps over the lazy dog number 14\n");
    let human = f.write(
        "h.txt",
        "a completely different sentence about cats and hats\nzebras quietly graze near the river bank today\n",
    );
    let synth = f.path("g.jsonl");
    ok(&[
        "generate",
        "--model",
        s(&f.model),
        "--prompts",
        s(&human),
        "--prompt-len",
        "10",
        "--max-new",
        "40",
        "--generator-id",
        "toy",
        "--out",
        s(&synth),
    ]);
    let report = f.path("r.txt");
    let roc = f.path("roc.csv");
    let out = ok(&[
        "evaluate",
        "--members",
        s(&members),
        "--nonmembers",
        s(&human),
        s(&synth),
        "--model",
        s(&f.model),
        "--attacks",
        "loss,min_k,zlib",
        "--out",
        s(&report),
        "--roc",
        s(&roc),
    ]);
    assert!(stderr(&out).contains("# evaluate resolved config"));
    let table = fs::read_to_string(&report).unwrap();
    let rows: Vec<&str> = table.lines().filter(|l| !l.trim().is_empty()).collect();
    assert!(rows[0].starts_with("Source"), "{table}");
    let body: Vec<&str> = rows.iter().skip(1).filter(|l| !l.starts_with('-')).copied().collect();
    assert_eq!(body.len(), 2, "{table}");
    assert!(body.iter().any(|l| l.starts_with("toy")), "{table}");

    let roc = fs::read_to_string(&roc).unwrap();
    assert_eq!(roc.lines().next(), Some("source,attack,fpr,tpr"));

    let csv = ok(&[
        "evaluate",
        "--members",
        s(&members),
        "--nonmembers",
        s(&human),
        s(&synth),
        "--model",
        s(&f.model),
        "--attacks",
        "loss",
        "--format",
        "csv",
    ]);
    assert_eq!(String::from_utf8(csv.stdout).unwrap().lines().count(), 3);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let f = Fixture::new();
    let texts = f.write("t.txt", "the quick brown fox\n");
    let config = f.write(
        "c.toml",
        "attacks = [\"loss\", \"min_k\"]\n[attack]\nk_fraction = 0.5\n",
    );
    let run = |extra: &[&str]| {
        let mut args = vec![
            "score",
            "--model",
            s(&f.model),
            "--texts",
            s(&texts),
            "--config",
            s(&config),
        ];
        args.extend_from_slice(extra);
        let out = ok(&args);
        let stdout = String::from_utf8_lossy(&out.stdout);
        let header: serde_json::Value = serde_json::from_str(stdout.lines().next().unwrap()).unwrap();
        (header, stderr(&out))
    };
    let (header, err) = run(&[]);
    assert_eq!(header["attacks"], serde_json::json!(["loss", "min_k"]));
    assert_eq!(header["attack"]["k_fraction"], 0.5);
    assert!(err.contains("k_fraction = 0.5"), "{err}");

    let (header, err) = run(&["--k", "0.1"]);
    assert_eq!(header["attack"]["k_fraction"], 0.1);
    assert!(err.contains("k_fraction = 0.1"), "{err}");

    let bad = f.write("bad.toml", "nonsense_key = 1\n");
    let out = miaeval(&[
        "score",
        "--model",
        s(&f.model),
        "--texts",
        s(&texts),
        "--config",
        s(&bad),
    ]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("nonsense_key"), "{}", stderr(&out));
}

#[test]
fn split_writes_three_files() {
    let f = Fixture::new();
    let out_dir = f.path("split");
    fs::create_dir(&out_dir).unwrap();
    let corpus = f.write(
        "c.txt",
        &(0..20).map(|i| format!("document number {i}\n")).collect::<String>(),
    );
    ok(&[
        "split",
        "--corpus",
        s(&corpus),
        "--member-fraction",
        "0.5",
        "--calibration-fraction",
        "0.2",
        "--out-dir",
        s(&out_dir),
    ]);
    let count = |name: &str| fs::read_to_string(out_dir.join(name)).unwrap().lines().count();
    assert_eq!(
        (count("members.txt"), count("calibration.txt"), count("nonmembers.txt")),
        (10, 4, 6)
    );
}
