use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use driftpool::data::{load_csv, Column};
use driftpool::results::ResultsBundle;

fn driftpool(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_driftpool"))
        .args(args)
        .env("DRIFTPOOL_LOG", "warn")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

const SMALL_SPEC: &str = r#"{
  "concepts": [
    {"level": 0.0, "amplitude": 1.0, "period": 24, "noise_sigma": 0.2},
    {"level": 6.0, "amplitude": 1.0, "period": 24, "noise_sigma": 0.2}
  ],
  "schedule": [
    {"concept": 0, "duration": 1200},
    {"concept": 1, "duration": 1200},
    {"concept": 0, "duration": 1200}
  ],
  "seed": 0
}"#;

fn small_manifest(dir: &Path, name: &str, extra: &str) -> String {
    let spec = dir.join("spec.json");
    fs::write(&spec, SMALL_SPEC).unwrap();
    let path = dir.join(name);
    fs::write(
        &path,
        format!("# small two-concept run\ndata = synthetic:{}\nnormalize = whole\nlookback = 48\nhorizon = 24\n{extra}", spec.display()),
    )
    .unwrap();
    path.display().to_string()
}

fn columns(path: &Path) -> Vec<String> {
    let text = fs::read_to_string(path).unwrap();
    text.lines()
        .next()
        .unwrap()
        .split(',')
        .map(str::to_string)
        .collect()
}

#[test]
fn generate_default_stream() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let out = driftpool(&["generate", "--seed", "7", "--out", a.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let summary = stdout(&out);
    assert!(summary.contains("points 18000"), "{summary}");
    assert!(summary.contains("segments 6"), "{summary}");
    assert!(
        summary.contains("segment 5: concept 0 [15000, 18000)"),
        "{summary}"
    );

    let series = load_csv(a.join("series.csv"), &Column::Name("value".into()), true).unwrap();
    assert_eq!(series.len(), 18000);
    let labels = load_csv(a.join("labels.csv"), &Column::Name("label".into()), true).unwrap();
    assert_eq!(labels.values[2999], 0.0);
    assert_eq!(labels.values[3000], 1.0);

    assert!(
        driftpool(&["generate", "--seed", "7", "--out", b.to_str().unwrap()])
            .status
            .success()
    );
    for f in ["series.csv", "labels.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
    }
}

#[test]
fn generate_rejects_empty_segment() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bad.json");
    fs::write(
        &spec,
        SMALL_SPEC.replacen("\"duration\": 1200", "\"duration\": 0", 1),
    )
    .unwrap();
    let out = driftpool(&[
        "generate",
        "--spec",
        spec.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).contains("schedule[0].duration"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn run_writes_loadable_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let m = small_manifest(dir.path(), "run.cfg", "");
    let out_dir = dir.path().join("out");
    let out = driftpool(&["run", "--config", &m, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("evolutions 1"), "{}", stdout(&out));

    let bundle = ResultsBundle::read(&out_dir).unwrap();
    assert_eq!(bundle.schema_version, 1);
    assert_eq!(bundle.config_hash.len(), 64);
    assert_eq!(bundle.data.len, 3600);

    for (file, header) in [
        (
            "records.csv",
            vec!["t", "entry_id", "mse", "evolved", "abandoned", "pool_size"],
        ),
        ("genes.csv", vec!["t", "entry_id", "mu", "sigma"]),
        ("events.csv", vec!["t", "entry_id", "event", "parent"]),
        ("labels.csv", vec!["t", "label"]),
    ] {
        let path = out_dir.join(file);
        assert_eq!(columns(&path), header, "{file}");
        for col in header {
            load_csv(&path, &Column::Name(col.into()), true)
                .unwrap_or_else(|e| panic!("{file}/{col}: {e}"));
        }
    }
    let mse = load_csv(
        out_dir.join("records.csv"),
        &Column::Name("mse".into()),
        true,
    )
    .unwrap();
    assert_eq!(mse.values.len(), bundle.result.records.len());
    for (a, r) in mse.values.iter().zip(&bundle.result.records) {
        assert_eq!(*a, r.mse);
    }

    let purity = driftpool(&[
        "purity",
        "--results",
        out_dir.to_str().unwrap(),
        "--labels",
        out_dir.join("labels.csv").to_str().unwrap(),
        "--exclude-safe",
    ]);
    assert!(purity.status.success(), "{}", stderr(&purity));
    assert!(
        stdout(&purity).starts_with("purity 1.0000"),
        "{}",
        stdout(&purity)
    );
}

#[test]
fn flags_override_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let m = small_manifest(dir.path(), "run.cfg", "evolution = true\n");
    let off = small_manifest(dir.path(), "off.cfg", "evolution = false\n");
    let a = driftpool(&["run", "--config", &m, "--no-evolution"]);
    let b = driftpool(&["run", "--config", &off]);
    assert!(a.status.success() && b.status.success());
    assert_eq!(stdout(&a), stdout(&b));
    assert!(stdout(&a).contains("evolutions 0"));
}

#[test]
fn exit_codes_by_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let m = small_manifest(dir.path(), "run.cfg", "");

    let bad = driftpool(&["run", "--config", &m, "--set", "tau_l=1.5"]);
    assert_eq!(bad.status.code(), Some(2));
    let msg = stderr(&bad);
    assert!(msg.contains("tau_l") && msg.contains("(0, 1]"), "{msg}");

    assert_eq!(driftpool(&["run", "--bogus"]).status.code(), Some(2));
    assert_eq!(
        driftpool(&["run", "--local-only", "--global-only"])
            .status
            .code(),
        Some(2)
    );

    let missing = driftpool(&[
        "run",
        "--data",
        dir.path().join("none.csv").to_str().unwrap(),
    ]);
    assert_eq!(missing.status.code(), Some(4));

    let diverge = driftpool(&["run", "--config", &m, "--set", "lr=1e6"]);
    assert_eq!(diverge.status.code(), Some(3), "{}", stderr(&diverge));
}

#[test]
fn csv_column_selection() {
    let dir = tempfile::tempdir().unwrap();
    let gen = dir.path().join("gen");
    assert!(driftpool(&["generate", "--out", gen.to_str().unwrap()])
        .status
        .success());
    let series = gen.join("series.csv");
    let by_name = driftpool(&[
        "run",
        "--data",
        series.to_str().unwrap(),
        "--column",
        "value",
    ]);
    let by_index = driftpool(&["run", "--data", series.to_str().unwrap(), "--column", "1"]);
    assert!(by_name.status.success(), "{}", stderr(&by_name));
    let mse = |o: &Output| {
        stdout(o)
            .lines()
            .find(|l| l.starts_with("mean_mse"))
            .unwrap()
            .to_string()
    };
    assert_eq!(mse(&by_name), mse(&by_index));

    let wrong = driftpool(&["run", "--data", series.to_str().unwrap(), "--column", "OT"]);
    assert_eq!(wrong.status.code(), Some(2));
    assert!(
        stderr(&wrong).contains("available columns: t, value"),
        "{}",
        stderr(&wrong)
    );
}

#[test]
fn compare_three_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let base = small_manifest(dir.path(), "base.cfg", "evolution = false\n");
    let cep = small_manifest(dir.path(), "cep.cfg", "");
    let again = small_manifest(dir.path(), "again.cfg", "evolution = false\n");
    let csv = dir.path().join("cmp.csv");
    let out = driftpool(&[
        "compare",
        &base,
        &cep,
        &again,
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let table = stdout(&out);
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), 3, "{table}");
    assert!(
        rows[0].ends_with("0.00%") && rows[2].ends_with("0.00%"),
        "{table}"
    );
    assert!(
        rows[1].trim_end().ends_with('%') && !rows[1].ends_with(" 0.00%"),
        "{table}"
    );

    let delta = load_csv(&csv, &Column::Name("delta_pct".into()), true).unwrap();
    assert_eq!(delta.values.len(), 3);
    assert_eq!(delta.values[0], 0.0);
    assert_ne!(delta.values[1], 0.0);
    assert_eq!(delta.values[2], 0.0);

    let other = small_manifest(dir.path(), "other.cfg", "horizon = 12\n");
    let mismatch = driftpool(&["compare", &base, &other]);
    assert_eq!(mismatch.status.code(), Some(2));
    assert!(driftpool(&["compare", &base]).status.code() == Some(2));
}

#[test]
fn purity_rejects_label_length_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let m = small_manifest(dir.path(), "run.cfg", "");
    let out_dir = dir.path().join("out");
    assert!(
        driftpool(&["run", "--config", &m, "--out", out_dir.to_str().unwrap()])
            .status
            .success()
    );
    let short = dir.path().join("short.csv");
    fs::write(&short, "t,label\n0,0\n1,0\n").unwrap();
    let out = driftpool(&[
        "purity",
        "--results",
        out_dir.to_str().unwrap(),
        "--labels",
        short.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).contains("2 labels for a series of 3600 points"),
        "{}",
        stderr(&out)
    );
}
