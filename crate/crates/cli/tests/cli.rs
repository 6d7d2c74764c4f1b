use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

const BIN: &str = env!("CARGO_BIN_EXE_amrkit");

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name).display().to_string()
}

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// ingest both databases and integrate them into `merged/`.
fn prepare(dir: &Path) {
    ok(dir, &["ingest", "--fasta", &fixture("card.fasta"), "--schema", "card", "--card-metadata", &fixture("card_metadata.tsv"), "--out", "card"]);
    ok(dir, &["ingest", "--fasta", &fixture("megares.fasta"), "--schema", "megares", "--out", "meg"]);
    ok(dir, &["integrate", "--input", "card", "--input", "meg", "--ontology", &fixture("aro.tsv"), "--out", "merged"]);
}

fn read(path: PathBuf) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

#[test]
fn help_for_every_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["--help"]);
    for sub in [
        "ingest",
        "integrate",
        "split",
        "train",
        "predict",
        "tune-ensemble",
        "evaluate",
        "simulate-reads",
        "augment",
        "serve-fixture",
        "bridge-check",
    ] {
        let text = ok(dir.path(), &[sub, "--help"]);
        assert!(text.contains("Usage"), "{sub}");
    }
}

#[test]
fn ingest_prints_fixture_counts() {
    let dir = tempfile::tempdir().unwrap();
    let card = ok(dir.path(), &["ingest", "--fasta", &fixture("card.fasta"), "--schema", "card", "--card-metadata", &fixture("card_metadata.tsv"), "--out", "card"]);
    assert!(card.starts_with("records: 49\nclasses: 6\n"), "{card}");
    let meg = ok(dir.path(), &["ingest", "--fasta", &fixture("megares.fasta"), "--schema", "megares", "--out", "meg"]);
    assert!(meg.starts_with("records: 43\n"), "{meg}");
    let flagged = ok(dir.path(), &["ingest", "--fasta", &fixture("megares.fasta"), "--schema", "megares", "--include-flagged", "--out", "meg2"]);
    assert!(flagged.starts_with("records: 45\n"), "{flagged}");
}

#[test]
fn input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = run(dir.path(), &["ingest", "--fasta", "nope.fasta", "--schema", "card", "--out", "x"]);
    assert_eq!(code(&missing), 2);
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.fasta"));

    std::fs::write(dir.path().join("short.fasta"), ">AB000001.1\nACGT\n").unwrap();
    let arity = run(dir.path(), &["ingest", "--fasta", "short.fasta", "--schema", "card", "--out", "x"]);
    assert_eq!(code(&arity), 2);
    let err = String::from_utf8_lossy(&arity.stderr);
    assert!(err.contains("header does not match schema 'card'") && err.contains("line 1"), "{err}");

    assert_eq!(code(&run(dir.path(), &["split", "--dataset", "x", "--bogus-flag", "--out", "s"])), 2);
}

#[test]
fn bad_ontology_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path());
    std::fs::write(dir.path().join("cyclic.tsv"), "A\ta\tB\t\nB\tb\tA\t\n").unwrap();
    std::fs::write(dir.path().join("dangling.tsv"), "A\ta\t\t\nB\tb\tZ\t\n").unwrap();
    for bad in ["cyclic.tsv", "dangling.tsv"] {
        let out = run(dir.path(), &["integrate", "--input", "card", "--ontology", bad, "--out", "o"]);
        assert_eq!(code(&out), 3, "{bad}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn integrate_audit_and_counts() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path());
    let audit = String::from_utf8(read(dir.path().join("merged/mapping_audit.tsv"))).unwrap();
    for row in [
        "drug-class\tbetalactams\tbeta-lactam\ttrue",
        "drug-class\tcarbapenem\tbeta-lactam\ttrue",
        "gene-family\tKPC\tbeta-lactamase family\ttrue",
        "gene-family\tvanA ligase variant\tglycopeptide resistance gene cluster family\ttrue",
    ] {
        assert!(audit.lines().any(|l| l == row), "missing {row:?}");
    }
    let out = ok(dir.path(), &["integrate", "--input", "merged", "--min-class-size", "0", "--out", "again"]);
    assert!(out.starts_with("records: 84\n"), "{out}");
}

#[test]
fn end_to_end_fixture_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let start = Instant::now();
    prepare(d);
    assert!(ok(d, &["split", "--dataset", "merged", "--seed", "7", "--out", "split.tsv"]).starts_with("seed: 7\n"));
    ok(d, &["train", "--dataset", "merged", "--split", "split.tsv", "--model", "naive-bayes", "--out", "nb.bin"]);
    ok(d, &["train", "--dataset", "merged", "--split", "split.tsv", "--model", "softmax", "--features", "bow", "--out", "bow.bin"]);
    ok(d, &["tune-ensemble", "--member", "nb.bin", "--member", "bow.bin", "--dataset", "merged", "--split", "split.tsv", "--out", "w.txt"]);
    let weights = String::from_utf8(read(d.join("w.txt"))).unwrap();
    let line = weights.lines().find_map(|l| l.strip_prefix("weights=")).unwrap();
    let sum: f64 = line.split(',').map(|x| x.parse::<f64>().unwrap()).sum();
    assert!((sum - 1.0).abs() <= 1e-9);
    let table = ok(d, &["evaluate", "--model", "nb.bin", "--model", "bow.bin", "--weights", "w.txt", "--dataset", "merged", "--split", "split.tsv", "--name", "fixture"]);
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "Dataset\tMethod\tAccuracy\tMacro F1\tPrecision\tRecall\tBalanced Accuracy");
    assert!(lines[3].starts_with("fixture\tEnsemble\t"));
    let json = ok(d, &["evaluate", "--weights", "w.txt", "--dataset", "merged", "--split", "split.tsv", "--format", "json-like"]);
    assert!(json.trim_start().starts_with('{') && json.contains("\"macro_f1\""));
    assert!(start.elapsed() < Duration::from_secs(60));
}

#[test]
fn artifacts_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    prepare(d);
    for tag in ["a", "b"] {
        ok(d, &["split", "--dataset", "merged", "--seed", "3", "--out", &format!("split_{tag}.tsv")]);
        ok(d, &["train", "--dataset", "merged", "--split", "split_a.tsv", "--model", "softmax", "--features", "kmer", "--k", "3", "--epochs", "40", "--seed", "5", "--out", &format!("m_{tag}.bin")]);
        ok(d, &["simulate-reads", "--dataset", "merged", "--read-len", "80", "--sub-rate", "0.02", "--ins-rate", "0.01", "--seed", "4", "--out", &format!("reads_{tag}"), "--fastq", &format!("reads_{tag}.fq")]);
    }
    assert_eq!(read(d.join("split_a.tsv")), read(d.join("split_b.tsv")));
    assert_eq!(read(d.join("m_a.bin")), read(d.join("m_b.bin")));
    assert_eq!(read(d.join("reads_a.fq")), read(d.join("reads_b.fq")));
    assert_eq!(read(d.join("reads_a/records.fasta")), read(d.join("reads_b/records.fasta")));
}

#[test]
fn augment_through_child_process_generator() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    prepare(d);
    ok(d, &["split", "--dataset", "merged", "--seed", "7", "--out", "split.tsv"]);
    let bridge = format!("cmd:{BIN} serve-fixture --classes unused --generate-rate 0.05 --seed 2");
    let out = ok(d, &["augment", "--dataset", "merged", "--split", "split.tsv", "--threshold", "20", "--bridge", &bridge, "--timestamp", "0", "--out", "aug", "--out-split", "aug_split.tsv", "--audit", "audit.tsv"]);
    assert!(out.contains("glycopeptide: 13 -> 20"), "{out}");
    let manifest = String::from_utf8(read(d.join("aug_split.tsv"))).unwrap();
    let original = String::from_utf8(read(d.join("split.tsv"))).unwrap();
    for line in manifest.lines().filter(|l| l.starts_with("aug_")) {
        assert!(line.ends_with("\tTRAIN"), "{line}");
    }
    for line in original.lines().filter(|l| !l.starts_with('#')) {
        assert!(manifest.lines().any(|l| l == line), "{line} changed");
    }
    let audit = String::from_utf8(read(d.join("audit.tsv"))).unwrap();
    assert!(audit.lines().all(|l| l.split('\t').count() == 7));
}

#[test]
fn bridge_check_over_child_stdio() {
    let dir = tempfile::tempdir().unwrap();
    let endpoint = format!("cmd:{BIN} serve-fixture --classes a,b,c --generate-rate 0.1");
    let out = ok(dir.path(), &["bridge-check", "--endpoint", &endpoint, "--expect-classes", "a,b,c"]);
    assert!(out.lines().all(|l| l.starts_with("PASS")), "{out}");
    assert!(out.contains("PASS malformed line"));

    let drift = run(dir.path(), &["bridge-check", "--endpoint", &endpoint, "--expect-classes", "a,b"]);
    assert_eq!(code(&drift), 4);

    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let down = run(dir.path(), &["bridge-check", "--endpoint", &format!("tcp://127.0.0.1:{port}"), "--timeout-ms", "500"]);
    assert_eq!(code(&down), 4);
}

#[test]
fn remote_member_through_bridge() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    prepare(d);
    ok(d, &["split", "--dataset", "merged", "--seed", "7", "--out", "split.tsv"]);
    ok(d, &["train", "--dataset", "merged", "--split", "split.tsv", "--model", "naive-bayes", "--k", "4", "--out", "nb.bin"]);
    let remote = format!("cmd:{BIN} serve-fixture --model nb.bin");
    ok(d, &["predict", "--model", "nb.bin", "--dataset", "merged", "--split", "split.tsv", "--out", "local.tsv"]);
    ok(d, &["predict", "--model", &remote, "--dataset", "merged", "--split", "split.tsv", "--out", "remote.tsv"]);
    assert_eq!(read(d.join("local.tsv")), read(d.join("remote.tsv")));
}
