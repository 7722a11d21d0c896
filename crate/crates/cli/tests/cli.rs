use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::sync::OnceLock;

use titlegen_service::{handle_query, load_artifacts, QueryRequest, ServiceConfig};

const COMMANDS: [&str; 8] = ["ingest", "preprocess", "vocab", "train", "eval", "index", "serve", "query"];

fn titlegen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_titlegen")).args(args).output().unwrap()
}

fn fixture_dump() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/posts_50.xml")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ok(out: Output) -> Output {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

struct Artifacts {
    dir: tempfile::TempDir,
}

impl Artifacts {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

/// Runs the whole pipeline once on the fixture dump.
fn artifacts() -> &'static Artifacts {
    static A: OnceLock<Artifacts> = OnceLock::new();
    A.get_or_init(|| {
        let a = Artifacts {
            dir: tempfile::tempdir().unwrap(),
        };
        let p = |n| a.path(n);
        ok(titlegen(&["ingest", "--dump", s(&fixture_dump()), "--tag", "python", "--out", s(&p("raw.jsonl"))]));
        ok(titlegen(&["preprocess", "--in", s(&p("raw.jsonl")), "--out", s(&p("corpus.jsonl"))]));
        std::fs::write(
            p("run.toml"),
            "[model]\nemb_dim = 8\nenc_hidden = 8\ndec_hidden = 12\nattn_dim = 8\ndropout_rate = 0.0\n\
             [train]\nepochs = 3\nbatch_size = 4\nlearning_rate = 0.01\n\
             [vocab]\ntitle_min_count = 1\n",
        )
        .unwrap();
        let train = ok(titlegen(&[
            "train", "--corpus", s(&p("corpus.jsonl")), "--valid", s(&p("corpus.jsonl")),
            "--config", s(&p("run.toml")), "--seed", "3", "--out", s(&p("model.q2q")),
        ]));
        std::fs::write(p("metrics.jsonl"), train.stdout).unwrap();
        ok(titlegen(&[
            "index", "--model", s(&p("model.q2q")), "--corpus", s(&p("corpus.jsonl")),
            "--seed", "1", "--out", s(&p("index.q2qi")),
        ]));
        a
    })
}

#[test]
fn help_lists_every_command() {
    let out = titlegen(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    for c in COMMANDS {
        assert!(text.contains(c), "--help misses {c}");
        let sub = titlegen(&[c, "--help"]);
        assert_eq!(sub.status.code(), Some(0), "{c} --help");
        assert!(String::from_utf8(sub.stdout).unwrap().contains("--"));
    }
}

#[test]
fn unknown_command_is_a_usage_error() {
    let out = titlegen(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown command"));
    assert!(out.stdout.is_empty());
}

#[test]
fn unknown_flags_and_missing_arguments_are_usage_errors() {
    assert_eq!(titlegen(&["ingest", "--dump", "x", "--out", "y", "--bogus"]).status.code(), Some(1));
    assert_eq!(titlegen(&["preprocess", "--in", "x"]).status.code(), Some(1));
    assert_eq!(titlegen(&[]).status.code(), Some(1));
}

#[test]
fn missing_inputs_are_data_errors() {
    let out = titlegen(&["preprocess", "--in", "/nonexistent/raw.jsonl", "--out", "/tmp/never.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/raw.jsonl"));
}

#[test]
fn pipeline_writes_expected_artifacts() {
    let a = artifacts();
    let corpus = std::fs::read_to_string(a.path("corpus.jsonl")).unwrap();
    assert_eq!(corpus.lines().count(), 13);
    let metrics = std::fs::read_to_string(a.path("metrics.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = metrics.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);
    for (i, m) in lines.iter().enumerate() {
        assert_eq!(m["epoch"], i + 1);
        for key in ["train_loss", "valid_ppl", "lr", "seconds"] {
            assert!(m[key].is_number(), "{key}");
        }
    }
}

#[test]
fn stages_are_idempotent() {
    let a = artifacts();
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    ok(titlegen(&["preprocess", "--in", s(&a.path("raw.jsonl")), "--out", s(&p("corpus.jsonl"))]));
    assert_eq!(std::fs::read(p("corpus.jsonl")).unwrap(), std::fs::read(a.path("corpus.jsonl")).unwrap());
    ok(titlegen(&[
        "train", "--corpus", s(&a.path("corpus.jsonl")), "--valid", s(&a.path("corpus.jsonl")),
        "--config", s(&a.path("run.toml")), "--seed", "3", "--out", s(&p("model.q2q")),
    ]));
    assert_eq!(std::fs::read(p("model.q2q")).unwrap(), std::fs::read(a.path("model.q2q")).unwrap());
    ok(titlegen(&[
        "index", "--model", s(&a.path("model.q2q")), "--corpus", s(&a.path("corpus.jsonl")),
        "--seed", "1", "--out", s(&p("index.q2qi")),
    ]));
    assert_eq!(std::fs::read(p("index.q2qi")).unwrap(), std::fs::read(a.path("index.q2qi")).unwrap());
    for side in ["code", "title"] {
        let out = p(&format!("{side}.vocab"));
        ok(titlegen(&["vocab", "--in", s(&a.path("corpus.jsonl")), "--side", side, "--out", s(&out)]));
        let first = std::fs::read(&out).unwrap();
        ok(titlegen(&["vocab", "--in", s(&a.path("corpus.jsonl")), "--side", side, "--out", s(&out)]));
        assert_eq!(std::fs::read(&out).unwrap(), first);
    }
}

#[test]
fn train_without_validation_split_explains_itself() {
    let a = artifacts();
    // fixture ids 1-13 all land in the training split
    let out = titlegen(&["train", "--corpus", s(&a.path("corpus.jsonl")), "--out", "/tmp/unused.q2q"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--valid"));
    let bad = a.dir.path().join("bad.toml");
    std::fs::write(&bad, "[train]\nepochz = 3\n").unwrap();
    let out = titlegen(&[
        "train", "--corpus", s(&a.path("corpus.jsonl")), "--config", s(&bad), "--out", "/tmp/unused.q2q",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn eval_reports_perplexity_and_exact_match() {
    let a = artifacts();
    let out = ok(titlegen(&["eval", "--model", s(&a.path("model.q2q")), "--corpus", s(&a.path("corpus.jsonl"))]));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["pairs"], 13);
    assert!(v["perplexity"].as_f64().unwrap() > 1.0);
    let em = v["exact_match"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&em));
}

#[test]
fn query_output_is_the_service_body() {
    let a = artifacts();
    let snippet = "import os\ndef get_client_ip(request):\n    return request.META.get('REMOTE_ADDR')\n";
    let code_file = a.dir.path().join("snippet.py");
    std::fs::write(&code_file, snippet).unwrap();
    let model = a.path("model.q2q");
    let index = a.path("index.q2qi");
    let out = ok(titlegen(&["query", "--model", s(&model), "--index", s(&index), "--code-file", s(&code_file)]));

    let state = load_artifacts(&model, &index, ServiceConfig::default()).unwrap();
    let reply = handle_query(
        &state,
        &QueryRequest {
            code: snippet.into(),
            language: None,
        },
    );
    assert_eq!(reply.status, 200);
    assert_eq!(out.stdout, reply.body.as_bytes());

    // stdin gives the same bytes
    let mut child = Command::new(env!("CARGO_BIN_EXE_titlegen"))
        .args(["query", "--model", s(&model), "--index", s(&index)])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    use std::io::Write;
    child.stdin.take().unwrap().write_all(snippet.as_bytes()).unwrap();
    let piped = child.wait_with_output().unwrap();
    assert_eq!(piped.stdout, out.stdout);
}

#[test]
fn query_errors_print_the_error_body() {
    let a = artifacts();
    let empty = a.dir.path().join("empty.py");
    std::fs::write(&empty, "   \n").unwrap();
    let out = titlegen(&[
        "query", "--model", s(&a.path("model.q2q")), "--index", s(&a.path("index.q2qi")),
        "--code-file", s(&empty),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["error"], "empty_input");
}

#[test]
fn serve_fails_fast_on_a_corrupt_checkpoint() {
    let a = artifacts();
    let bad = a.dir.path().join("corrupt.q2q");
    let bytes = std::fs::read(a.path("model.q2q")).unwrap();
    std::fs::write(&bad, &bytes[..bytes.len() / 2]).unwrap();
    // port 9 would be refused anyway; the point is that loading fails first
    let out = titlegen(&["serve", "--model", s(&bad), "--index", s(&a.path("index.q2qi")), "--addr", "127.0.0.1:9"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("corrupt.q2q"), "{err}");
}
