use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"{
  "dataset": {
    "kind": "synthetic",
    "num_classes": 4,
    "dims": 4,
    "train_size": 400,
    "test_size": 160,
    "layout": { "height": 2, "width": 2 }
  },
  "train": { "steps": 120, "population_size": 3, "hidden_layers": [16], "lr_decay_steps": 60 },
  "corruptions": ["shot_noise", "contrast"]
}"#;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_compresslens"))
        .args(args)
        .env_remove("COMPRESSLENS_THREADS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

#[test]
fn help_and_usage_codes() {
    assert_eq!(code(&cli(&["--help"])), 0);
    assert_eq!(code(&cli(&["run", "--no-such-flag"])), 1);
    assert_eq!(code(&cli(&[])), 1);
    let out = Command::new(env!("CARGO_BIN_EXE_compresslens"))
        .args(["report", "missing.csv", "--out", "x"])
        .env("COMPRESSLENS_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("COMPRESSLENS_THREADS"));
}

#[test]
fn malformed_inputs_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("audit.csv");
    fs::write(&bad, "class,oops\n1,2\n").unwrap();
    let out = cli(&["report", s(&bad), "--out", s(dir.path())]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        code(&cli(&[
            "report",
            s(&dir.path().join("absent.csv")),
            "--out",
            s(dir.path())
        ])),
        2
    );
}

#[test]
fn accuracy_table_mode() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("table.csv");
    fs::write(
        &table,
        "corruption,sparsity,top1,topk\nbrightness,0,69.49,89.18\nbrightness,0.9,64.12,85.63\n",
    )
    .unwrap();
    let out_csv = dir.path().join("norm.csv");
    let out = cli(&[
        "audit-robustness",
        "--table",
        s(&table),
        "--out",
        s(&out_csv),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(out_csv).unwrap();
    assert!(text.starts_with("corruption,sparsity,top1_abs,topk_abs,top1_norm,topk_norm\n"));
    assert!(
        text.contains("brightness,0.9,64.12,85.63,-7.73,-3.98"),
        "{text}"
    );
}

#[test]
fn file_flow_from_generation_to_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let config = d.join("config.json");
    fs::write(&config, CONFIG).unwrap();
    let data = d.join("data");
    assert_eq!(
        code(&cli(&[
            "generate",
            "--config",
            s(&config),
            "--out",
            s(&data)
        ])),
        0
    );
    let (train, test) = (data.join("train.csv"), data.join("test.csv"));
    assert!(train.exists() && test.exists());

    let common = [
        "--config",
        s(&config),
        "--train",
        s(&train),
        "--test",
        s(&test),
    ];
    let base = d.join("base");
    let comp = d.join("comp");
    let quant = d.join("quant");
    for (out, extra) in [
        (&base, vec![]),
        (&comp, vec!["--sparsity", "0.9"]),
        (&quant, vec!["--quant", "int8"]),
    ] {
        let mut args = vec!["train"];
        args.extend(common);
        args.extend(["--out", s(out)]);
        args.extend(extra);
        let o = cli(&args);
        let expected = if out == &quant { 1 } else { 0 };
        assert_eq!(code(&o), expected, "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert!(base.join("models/model_002.json").exists());
    assert_eq!(
        code(&cli(&[
            "train",
            "--train",
            s(&train),
            "--test",
            s(&test),
            "--out",
            "x",
            "--sparsity",
            "0.5",
            "--quant",
            "float16"
        ])),
        1
    );

    let audit = d.join("prune_0.9.csv");
    let o = cli(&[
        "audit-classes",
        "--base",
        s(&base.join("predictions.csv")),
        "--comp",
        s(&comp.join("predictions.csv")),
        "--out",
        s(&audit),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let pie_dir = d.join("pie");
    let o = cli(&[
        "audit-pie",
        "--base",
        s(&base.join("predictions.csv")),
        "--comp",
        s(&comp.join("predictions.csv")),
        "--dataset",
        s(&test),
        "--out",
        s(&pie_dir),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(pie_dir.join("pies.csv").exists());
    assert!(pie_dir.join("subset_accuracy.json").exists());

    let rob = d.join("robustness.csv");
    let o = cli(&[
        "audit-robustness",
        "--config",
        s(&config),
        "--dataset",
        s(&test),
        "--base-models",
        s(&base.join("models")),
        "--comp-models",
        s(&comp.join("models")),
        "--corruptions",
        "contrast,gaussian_noise",
        "--sparsity",
        "0.9",
        "--out",
        s(&rob),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = fs::read_to_string(&rob).unwrap();
    assert_eq!(rows.lines().count(), 3, "{rows}");

    let report = d.join("report");
    let o = cli(&["report", s(&audit), "--out", s(&report), "--chart"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(fs::read_to_string(report.join("report.txt"))
        .unwrap()
        .starts_with("== prune_0.9: 4 classes"));
    assert!(report.join("chart_prune_0.9.csv").exists());
}

#[test]
fn empty_audit_gives_empty_report() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("nothing.csv");
    fs::write(&empty, "").unwrap();
    let out = cli(&["report", s(&empty), "--out", s(dir.path())]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("0 classes"));
}

#[test]
fn run_writes_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    fs::write(&config, CONFIG).unwrap();
    let out = dir.path().join("bundle");
    let o = cli(&[
        "run",
        "--config",
        s(&config),
        "--out",
        s(&out),
        "--sparsity",
        "0.5,0.9",
        "--quant",
        "none",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let labels: Vec<&str> = summary["entries"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["label"].as_str().unwrap())
        .collect();
    assert_eq!(labels, ["baseline", "prune_0.5", "prune_0.9"]);
    assert!(out.join("prune_0.9/robustness.csv").exists());
}
