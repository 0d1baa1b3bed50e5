use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn kcomp(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_kcomp"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "kcomp {args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn ingest_compress_decompress_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let text: Vec<u8> = b"the quick brown fox jumps over the lazy dog\n".repeat(20);
    fs::write(d.join("a.txt"), &text).unwrap();
    let raw: Vec<u8> = (0..=255u8).chain(0..=255).collect();
    fs::write(d.join("b.bin"), &raw).unwrap();

    let chunks = d.join("chunks.jsonl");
    kcomp(&[
        "ingest",
        "--modality",
        "text",
        "--window",
        "100",
        "--out",
        p(&chunks),
        p(&d.join("a.txt")),
    ]);
    assert_eq!(
        fs::read_to_string(&chunks).unwrap().lines().count(),
        text.len().div_ceil(100)
    );

    let raw_chunks = d.join("raw.jsonl");
    kcomp(&[
        "ingest",
        "--modality",
        "raw",
        "--window",
        "64",
        "--budget",
        "300",
        "--out",
        p(&raw_chunks),
        p(&d.join("b.bin")),
    ]);
    assert_eq!(fs::read_to_string(&raw_chunks).unwrap().lines().count(), 5);

    let packed = d.join("packed.kc");
    kcomp(&["compress", "--chunks", p(&chunks), "--out", p(&packed)]);
    let unpacked = d.join("unpacked.bin");
    kcomp(&["decompress", p(&packed), "--out", p(&unpacked)]);
    assert_eq!(fs::read(&unpacked).unwrap(), text);
}

#[test]
fn dsl_candidates_shrink_the_container() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let seq: Vec<u8> = (1..=100).collect();
    fs::write(d.join("s.bin"), &seq).unwrap();
    let chunks = d.join("chunks.jsonl");
    kcomp(&[
        "ingest",
        "--modality",
        "raw",
        "--window",
        "128",
        "--out",
        p(&chunks),
        p(&d.join("s.bin")),
    ]);
    let origin = fs::read_to_string(&chunks).unwrap();
    let origin: serde_json::Value = serde_json::from_str(origin.lines().next().unwrap()).unwrap();
    let cand = serde_json::json!({
        "origin": origin["origin"], "offset": 0, "kind": "dsl",
        "code": "sequence_1 = range_up(1, 100)\noutput = sequence_1",
    });
    let cands = d.join("cands.jsonl");
    fs::write(&cands, format!("{cand}\n")).unwrap();

    let plain = d.join("plain.kc");
    let packed = d.join("packed.kc");
    kcomp(&["compress", "--chunks", p(&chunks), "--out", p(&plain)]);
    kcomp(&[
        "compress",
        "--chunks",
        p(&chunks),
        "--candidates",
        p(&cands),
        "--out",
        p(&packed),
    ]);
    assert!(fs::metadata(&packed).unwrap().len() + 50 < fs::metadata(&plain).unwrap().len());
    let unpacked = d.join("out.bin");
    kcomp(&["decompress", p(&packed), "--out", p(&unpacked)]);
    assert_eq!(fs::read(&unpacked).unwrap(), seq);

    let report = d.join("report.json");
    let out = kcomp(&[
        "eval",
        "--chunks",
        p(&chunks),
        "--candidates",
        p(&cands),
        "--report",
        p(&report),
    ]);
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.starts_with(
        "modality,chunks,bytes,acc,precision,corpus_cr,container_cr,pct_executable\n"
    ));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["overall"]["n_correct"], 1);
    assert_eq!(r["records"][0]["status"], "correct");
    assert!(r["overall"]["corpus_cr"].as_f64().unwrap() < 0.05);
}

#[test]
fn sample_writes_splits_and_training_text() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("cfg.toml"), "max_seq_len = 100\n").unwrap();
    let out = d.join("corpus");
    kcomp(&[
        "sample",
        "--n",
        "40",
        "--seed",
        "5",
        "--eval-bytes",
        "300",
        "--feedback",
        "inline",
        "--config",
        p(&d.join("cfg.toml")),
        "--out",
        p(&out),
    ]);
    let train = fs::read_to_string(out.join("train.jsonl")).unwrap();
    assert_eq!(train.lines().count(), 40);
    for line in train.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["seq_len"].as_u64().unwrap() <= 100);
        assert!(v["program"].as_str().unwrap().contains("output"));
    }
    let eval_bytes: u64 = fs::read_to_string(out.join("eval.jsonl"))
        .unwrap()
        .lines()
        .map(|l| {
            serde_json::from_str::<serde_json::Value>(l).unwrap()["seq_len"]
                .as_u64()
                .unwrap()
        })
        .sum();
    assert!(eval_bytes >= 300);
    let text = fs::read_to_string(out.join("train_text.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 40);
    assert!(text.contains(" # "));

    let again = d.join("again");
    kcomp(&[
        "sample",
        "--n",
        "40",
        "--seed",
        "5",
        "--eval-bytes",
        "300",
        "--feedback",
        "inline",
        "--config",
        p(&d.join("cfg.toml")),
        "--out",
        p(&again),
    ]);
    assert_eq!(
        fs::read_to_string(again.join("train.jsonl")).unwrap(),
        train
    );
}

#[test]
fn baseline_and_bad_input_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("s.bin"), [7u8; 300]).unwrap();
    let chunks = d.join("chunks.jsonl");
    kcomp(&[
        "ingest",
        "--modality",
        "raw",
        "--out",
        p(&chunks),
        p(&d.join("s.bin")),
    ]);
    let report = d.join("r.json");
    let out = kcomp(&[
        "eval",
        "--chunks",
        p(&chunks),
        "--baseline",
        "repeatseq",
        "--report",
        p(&report),
    ]);
    assert!(String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .any(|l| l.starts_with("all,3,300,")));
    let out = kcomp(&["baselines", "--chunks", p(&chunks)]);
    assert!(String::from_utf8(out.stdout)
        .unwrap()
        .contains("gzip per chunk"));

    let missing = Command::new(env!("CARGO_BIN_EXE_kcomp"))
        .args([
            "eval",
            "--chunks",
            p(&d.join("nope.jsonl")),
            "--report",
            p(&report),
        ])
        .output()
        .unwrap();
    assert!(!missing.status.success());
    assert!(!missing.stderr.is_empty());
}

#[test]
fn fetch_failures_do_not_leak_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("s.bin"), [1u8, 2, 3]).unwrap();
    let chunks = d.join("chunks.jsonl");
    kcomp(&[
        "ingest",
        "--modality",
        "raw",
        "--out",
        p(&chunks),
        p(&d.join("s.bin")),
    ]);
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let out_file = d.join("cands.jsonl");
    let out = Command::new(env!("CARGO_BIN_EXE_kcomp"))
        .args([
            "fetch",
            "--chunks",
            p(&chunks),
            "--endpoint",
            &format!("http://127.0.0.1:{port}/v1"),
            "--model",
            "m",
            "--max-retries",
            "0",
            "--timeout",
            "2",
            "--api-key-env",
            "KCOMP_CLI_TEST_KEY",
            "--out",
            p(&out_file),
        ])
        .env("KCOMP_CLI_TEST_KEY", "cli-secret-123")
        .output()
        .unwrap();
    assert!(out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("failed"));
    assert!(!stderr.contains("cli-secret-123"));
    assert!(!String::from_utf8_lossy(&out.stdout).contains("cli-secret-123"));
    assert!(fs::read_to_string(&out_file)
        .map(|s| s.is_empty())
        .unwrap_or(true));
}
