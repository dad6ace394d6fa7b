//! End-to-end runs of the `ssjf-sim` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssjf-sim"))
        .args(args)
        .env_remove("SSJF_SIM_THREADS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn shipped_scenario() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/rate-sweep.toml")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_metrics_and_events() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let events = dir.path().join("events.jsonl");
    let out = sim(&[
        "run",
        "--config",
        s(&shipped_scenario()),
        "--requests",
        "300",
        "--out",
        s(&out_dir),
        "--events",
        s(&events),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    assert!(csv
        .starts_with("run_id,policy,batch_mode,max_batch,rate_rps,cv,seed,completed,incomplete,"));
    assert_eq!(csv.lines().count(), 2);
    assert!(out_dir.join("metrics.json").exists());
    assert_eq!(
        fs::read_to_string(out_dir.join("records.csv"))
            .unwrap()
            .lines()
            .count(),
        301
    );
    let log = fs::read_to_string(&events).unwrap();
    // arrive, enqueue, dispatch, complete per request
    assert_eq!(log.lines().count(), 4 * 300);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for i in 0..2 {
        let out_dir = dir.path().join(format!("o{i}"));
        let events = dir.path().join(format!("e{i}.jsonl"));
        let out = sim(&[
            "run",
            "--requests",
            "200",
            "--policy",
            "pairwise",
            "--pairwise-accuracy",
            "0.8",
            "--out",
            s(&out_dir),
            "--events",
            s(&events),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        files.push((
            fs::read(out_dir.join("metrics.csv")).unwrap(),
            fs::read(&events).unwrap(),
        ));
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("o");
    let out = sim(&[
        "run",
        "--config",
        s(&shipped_scenario()),
        "--requests",
        "50",
        "--batch-mode",
        "dynamic",
        "--max-batch-size",
        "3",
        "--batch-wait-timeout-ms",
        "20",
        "--policy",
        "fcfs",
        "--rate-rps",
        "1.5",
        "--out",
        s(&out_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(&row[1..5], ["fcfs", "dynamic", "3", "1.5"]);
}

#[test]
fn sweep_counts_rows_and_respects_thread_cap() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let out_dir = dir.path().join(format!("t{threads}"));
        let out = Command::new(env!("CARGO_BIN_EXE_ssjf-sim"))
            .args([
                "sweep",
                "--requests",
                "150",
                "--axis",
                "rate",
                "--values",
                "2,4,8",
                "--policies",
                "fcfs,ssjf",
                "--repeats",
                "3",
                "--out",
                s(&out_dir),
            ])
            .env("SSJF_SIM_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let metrics = fs::read(out_dir.join("metrics.csv")).unwrap();
        assert_eq!(String::from_utf8_lossy(&metrics).lines().count(), 1 + 18);
        let summary = fs::read(out_dir.join("summary.csv")).unwrap();
        assert_eq!(String::from_utf8_lossy(&summary).lines().count(), 1 + 6);
        assert!(out_dir.join("run_rate_8_ssjf_3.csv").exists());
        outputs.push((metrics, summary));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn sweep_without_axis_is_invalid() {
    let dir = tempfile::tempdir().unwrap();
    let out = sim(&["sweep", "--out", s(dir.path())]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("axis"), "{}", stderr(&out));
}

#[test]
fn gen_trace_round_trips_through_run() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.jsonl");
    let out = sim(&[
        "gen-trace",
        "--requests",
        "40",
        "--rounds",
        "2",
        "--seed",
        "9",
        "--out",
        s(&trace),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(&trace).unwrap();
    assert_eq!(text.lines().count(), 80);
    assert!(text.contains("\"round\":2"));
    let run = sim(&["run", "--trace", s(&trace), "--policy", "sjf_oracle"]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    assert!(String::from_utf8_lossy(&run.stdout).contains("completed       80"));
}

#[test]
fn gen_trace_depends_on_seed() {
    let dir = tempfile::tempdir().unwrap();
    let traces: Vec<String> = ["1", "2", "1"]
        .iter()
        .enumerate()
        .map(|(i, seed)| {
            let path = dir.path().join(format!("{i}.jsonl"));
            assert_eq!(
                code(&sim(&[
                    "gen-trace",
                    "--requests",
                    "20",
                    "--seed",
                    seed,
                    "--out",
                    s(&path)
                ])),
                0
            );
            fs::read_to_string(path).unwrap()
        })
        .collect();
    assert_ne!(traces[0], traces[1]);
    assert_eq!(traces[0], traces[2]);
}

#[test]
fn gen_trace_rejects_empty_workload() {
    let dir = tempfile::tempdir().unwrap();
    let out = sim(&[
        "gen-trace",
        "--requests",
        "0",
        "--out",
        s(&dir.path().join("t.jsonl")),
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn validate_reports_every_problem() {
    let ok = sim(&["validate", "--config", s(&shipped_scenario())]);
    assert_eq!(code(&ok), 0, "{}", stderr(&ok));
    let bad = sim(&[
        "validate",
        "--batch-mode",
        "dynamic",
        "--max-batch-size",
        "0",
        "--cv=-1",
    ]);
    assert_eq!(code(&bad), 1);
    let err = stderr(&bad);
    assert!(err.contains("max_batch_size"), "{err}");
    assert!(err.contains("batch_wait_timeout_ms"), "{err}");
    assert!(err.contains("cv"), "{err}");
}

#[test]
fn io_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.toml");
    assert_eq!(code(&sim(&["validate", "--config", s(&missing)])), 2);
    let trace = dir.path().join("missing.jsonl");
    assert_eq!(code(&sim(&["run", "--trace", s(&trace)])), 2);
    let blocked = dir.path().join("file");
    fs::write(&blocked, "").unwrap();
    let out = sim(&[
        "gen-trace",
        "--requests",
        "3",
        "--out",
        s(&blocked.join("t.jsonl")),
    ]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn malformed_config_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "cv = 2.0\npolicy = \"lifo\"\n").unwrap();
    let out = sim(&["validate", "--config", s(&path)]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains(":2:"), "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(code(&sim(&[])), 1);
    assert_eq!(code(&sim(&["run", "--policy", "lifo"])), 1);
    assert_eq!(
        code(&sim(&["run", "--rate-rps", "2", "--utilization", "0.5"])),
        1
    );
    assert_eq!(code(&sim(&["--help"])), 0);
}
