//! End-to-end checks of the CLI surface: subcommands, exit codes, file
//! formats, and the environment seed override.

use std::path::Path;
use std::process::{Command, Output};

use memlearn::harness::report::MetricsReport;

fn memlearn() -> Command {
    Command::new(env!("CARGO_BIN_EXE_memlearn"))
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

fn assert_code(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

const SMALL_CONFIG: &str = r#"
seed = 7
[trace.synthetic]
generator = "stride"
stride_lines = 2
pages = 1
length = 5000
seed = 3
[prefetcher]
kind = "stride"
degree = 4
"#;

#[test]
fn simulate_writes_report_and_is_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.toml");
    write(&cfg, SMALL_CONFIG);
    let out_a = dir.path().join("a.json");
    let out_b = dir.path().join("b.json");

    let run = memlearn()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_a)
        .output()
        .unwrap();
    assert_code(&run, 0);
    let report = MetricsReport::from_json(&std::fs::read_to_string(&out_a).unwrap()).unwrap();
    assert_eq!(report.seed, 7);
    assert!(report.instructions > 0);

    // MEMLEARN_SEED overrides the config seed; --seed overrides both.
    let run = memlearn()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_b)
        .env("MEMLEARN_SEED", "99")
        .output()
        .unwrap();
    assert_code(&run, 0);
    let report = MetricsReport::from_json(&std::fs::read_to_string(&out_b).unwrap()).unwrap();
    assert_eq!(report.seed, 99);

    let run = memlearn()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .args(["--seed", "123"])
        .arg("--out")
        .arg(&out_b)
        .env("MEMLEARN_SEED", "99")
        .output()
        .unwrap();
    assert_code(&run, 0);
    let report = MetricsReport::from_json(&std::fs::read_to_string(&out_b).unwrap()).unwrap();
    assert_eq!(report.seed, 123);
}

#[test]
fn exit_codes_follow_error_class() {
    let dir = tempfile::tempdir().unwrap();

    // Config error: 2.
    let cfg = dir.path().join("bad.toml");
    write(&cfg, "[pythia]\ngamma = 1.0\n");
    let run = memlearn()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_code(&run, 2);

    // Trace error: 3.
    let cfg = dir.path().join("ok.toml");
    write(&cfg, "");
    let garbage = dir.path().join("bad.trace");
    write(&garbage, "0 1 L 40 8 - -\nnot a record\n");
    let run = memlearn()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--trace")
        .arg(&garbage)
        .output()
        .unwrap();
    assert_code(&run, 3);

    // Missing trace source: config error.
    let run = memlearn()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_code(&run, 2);
}

#[test]
fn gen_trace_then_simulate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("walk.trace.gz");
    let run = memlearn()
        .args([
            "gen-trace",
            "--spec",
            "generator=stride,stride_lines=1,pages=2,length=4000,seed=5",
        ])
        .arg("--out")
        .arg(&trace)
        .output()
        .unwrap();
    assert_code(&run, 0);

    let cfg = dir.path().join("sim.toml");
    write(&cfg, "[prefetcher]\nkind = \"nextline\"\ndegree = 2\n");
    let run = memlearn()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--trace")
        .arg(&trace)
        .output()
        .unwrap();
    assert_code(&run, 0);
    let report =
        MetricsReport::from_json(&String::from_utf8_lossy(&run.stdout)).expect("stdout report");
    // 4000 records minus the default 10% warmup, all of them loads/branches.
    assert_eq!(
        report.counters.demand_accesses + report.counters.branches,
        3600
    );

    // Bad inline specs are trace errors.
    let run = memlearn()
        .args(["gen-trace", "--spec", "generator=stride,length=0"])
        .arg("--out")
        .arg(dir.path().join("x.trace"))
        .output()
        .unwrap();
    assert_code(&run, 3);
}

#[test]
fn paired_and_report_diff() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.toml");
    write(&cfg, SMALL_CONFIG);
    let paired_out = dir.path().join("paired.json");
    let run = memlearn()
        .args(["paired", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&paired_out)
        .output()
        .unwrap();
    assert_code(&run, 0);
    let text = std::fs::read_to_string(&paired_out).unwrap();
    let paired: memlearn::PairedReport = serde_json::from_str(&text).unwrap();
    assert!(paired.speedup > 0.0);
    assert_eq!(
        paired.baseline.trace_digest,
        paired.with_mechanisms.trace_digest
    );

    // report-diff: identical reports exit 0, differing ones exit 1.
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for out in [&a, &b] {
        let run = memlearn()
            .args(["simulate", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(out)
            .output()
            .unwrap();
        assert_code(&run, 0);
    }
    let run = memlearn().arg("report-diff").arg(&a).arg(&b).output().unwrap();
    assert_code(&run, 0);

    let run = memlearn()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .args(["--seed", "1234"])
        .arg("--out")
        .arg(&b)
        .output()
        .unwrap();
    assert_code(&run, 0);
    let run = memlearn().arg("report-diff").arg(&a).arg(&b).output().unwrap();
    assert_code(&run, 1);
    let diff_text = String::from_utf8_lossy(&run.stdout);
    assert!(diff_text.contains("seed"), "{diff_text}");
}

#[test]
fn csv_format_and_athena_log() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.toml");
    write(
        &cfg,
        r#"
seed = 7
[trace.synthetic]
generator = "stride"
stride_lines = 1
pages = 1
length = 9000
seed = 3
[prefetcher]
kind = "stride"
[hermes]
enabled = true
[athena]
enabled = true
"#,
    );
    let out = dir.path().join("report.csv");
    let log = dir.path().join("athena.csv");
    let run = memlearn()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .args(["--format", "csv"])
        .arg("--out")
        .arg(&out)
        .arg("--athena-log")
        .arg(&log)
        .output()
        .unwrap();
    assert_code(&run, 0);
    let csv = std::fs::read_to_string(&out).unwrap();
    let report = MetricsReport::from_csv(&csv).unwrap();
    assert!(report.instructions > 0);

    let log_text = std::fs::read_to_string(&log).unwrap();
    let mut lines = log_text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "epoch,pref_accuracy_bucket,ocp_accuracy_bucket,bw_bucket,pollution_bucket,action,degree,reward"
    );
    // 9000 records at 2000-record epochs: four boundaries.
    assert_eq!(lines.count(), 4);
}
