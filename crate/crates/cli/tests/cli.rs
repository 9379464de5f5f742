use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = r#"
[generator]
trading_days = 12
minutes_per_day = 400
news_rate = 0.3
base_drift = -8e-5

[[generator.rules]]
category = "politics"
region = "A"
trigger_tokens = ["rate", "hike"]
direction = "up"
magnitude = 4e-4
delay_minutes = 10
effect_minutes = 10
rate = 0.04
decoy_rate = 0.02

[encoder]
layers = 1
hidden = 8
heads = 2
ffn = 16
max_len = 96
min_freq = 1

[train]
max_epochs = 6
batch_size = 16
l2 = 0.0
lr = 0.003
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_forexsum"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn forexsum")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path) -> PathBuf {
    let p = dir.join("tiny.toml");
    fs::write(&p, TINY).unwrap();
    p
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn generate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(&run(&[
            "generate",
            "--config",
            s(&cfg),
            "--out",
            s(out),
            "--seed",
            "7",
        ]));
    }
    for f in [
        "news.jsonl",
        "trades.csv",
        "signals.jsonl",
        "summary.json",
        "manifest.json",
    ] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f} differs"
        );
    }
    let manifest = json(&a.join("manifest.json"));
    assert_eq!(manifest["command"], "generate");
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["config"]["generator"]["news_rate"], 0.3);
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "generate",
        "--config",
        "/no/such/forexsum.toml",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/forexsum.toml"));

    let out = run(&[
        "generate",
        "--set",
        "train.learning_rate=1",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));

    let out = run(&["train", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2), "train without data.prepared");
}

#[test]
fn zero_rule_dataset_is_balanced() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g");
    ok(&run(&[
        "generate",
        "--set",
        "generator.trading_days=30",
        "--set",
        "generator.news_rate=0.1",
        "--out",
        s(&out),
        "--seed",
        "3",
    ]));
    let summary = json(&out.join("summary.json"));
    let windows = summary["windows"].as_u64().unwrap();
    assert!(windows > 1000);
    let up = summary["up_fraction"].as_f64().unwrap();
    assert!((up - 0.5).abs() < 0.05, "up fraction {up}");
}

#[test]
fn no_news_variant_needs_no_news_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let raw = dir.path().join("raw");
    ok(&run(&[
        "generate",
        "--config",
        s(&cfg),
        "--out",
        s(&raw),
        "--seed",
        "1",
    ]));
    let trades = raw.join("trades.csv");
    let prep = dir.path().join("prep");
    let set_trades = format!("data.trades=\"{}\"", s(&trades));
    let base = [
        "--config",
        s(&cfg),
        "--set",
        &set_trades,
        "--set",
        "train.variant=no_news",
    ];
    let out = run(&[&["preprocess"][..], &base, &["--out", s(&prep)]].concat());
    ok(&out);
    let set_prep = format!("data.prepared=\"{}\"", s(&prep));
    let run_dir = dir.path().join("run");
    ok(&run(&[
        &["train"][..],
        &base,
        &["--set", &set_prep, "--out", s(&run_dir)],
    ]
    .concat()));
    assert!(run_dir.join("eval_test.json").exists());
}

#[test]
fn nan_loss_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let raw = dir.path().join("raw");
    ok(&run(&[
        "generate",
        "--config",
        s(&cfg),
        "--out",
        s(&raw),
        "--seed",
        "1",
    ]));
    let set_raw = format!("data.raw=\"{}\"", s(&raw));
    let prep = dir.path().join("prep");
    ok(&run(&[
        "preprocess",
        "--config",
        s(&cfg),
        "--set",
        &set_raw,
        "--out",
        s(&prep),
    ]));
    let set_prep = format!("data.prepared=\"{}\"", s(&prep));
    let out = run(&[
        "train",
        "--config",
        s(&cfg),
        "--set",
        &set_prep,
        "--set",
        "train.lr=1e300",
        "--out",
        s(&dir.path().join("run")),
    ]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("NaN"));
}

#[test]
fn full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let raw = dir.path().join("raw");
    let prep = dir.path().join("prep");
    let run_a = dir.path().join("run_a");
    let run_b = dir.path().join("run_b");
    let set_raw = format!("data.raw=\"{}\"", s(&raw));
    let set_prep = format!("data.prepared=\"{}\"", s(&prep));
    let set_run = format!("data.run=\"{}\"", s(&run_a));
    let c = s(&cfg);

    ok(&run(&[
        "generate",
        "--config",
        c,
        "--out",
        s(&raw),
        "--seed",
        "5",
    ]));
    ok(&run(&[
        "preprocess",
        "--config",
        c,
        "--set",
        &set_raw,
        "--out",
        s(&prep),
    ]));
    for f in [
        "train.jsonl",
        "dev.jsonl",
        "test.jsonl",
        "scaler.json",
        "vocab.tsv",
        "tfidf.tsv",
    ] {
        assert!(prep.join(f).exists(), "missing {f}");
    }

    for r in [&run_a, &run_b] {
        ok(&run(&[
            "train",
            "--config",
            c,
            "--set",
            &set_prep,
            "--out",
            s(r),
            "--seed",
            "11",
        ]));
    }
    assert_eq!(
        fs::read(run_a.join("eval_test.json")).unwrap(),
        fs::read(run_b.join("eval_test.json")).unwrap()
    );
    assert_eq!(
        fs::read(run_a.join("history.jsonl")).unwrap(),
        fs::read(run_b.join("history.jsonl")).unwrap()
    );
    assert!(run_a.join("checkpoint/params.json").exists());
    let manifest = json(&run_a.join("manifest.json"));
    let files: Vec<&str> = manifest["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f.as_str().unwrap())
        .collect();
    assert!(files.contains(&"history.jsonl") && files.contains(&"eval_test.json"));

    let eval_dir = dir.path().join("eval");
    for split in ["train", "test"] {
        let set_split = format!("eval.split={split}");
        ok(&run(&[
            "eval",
            "--config",
            c,
            "--set",
            &set_prep,
            "--set",
            &set_run,
            "--set",
            &set_split,
            "--out",
            s(&eval_dir),
            "--seed",
            "11",
        ]));
    }
    let train_f1 = json(&eval_dir.join("eval_train.json"))["macro_f1"]
        .as_f64()
        .unwrap();
    let test = json(&eval_dir.join("eval_test.json"));
    assert_eq!(test, json(&run_a.join("eval_test.json")));
    assert!(train_f1 >= test["macro_f1"].as_f64().unwrap());

    let an = dir.path().join("analyze");
    ok(&run(&[
        "analyze",
        "--config",
        c,
        "--set",
        &set_prep,
        "--set",
        &set_run,
        "--out",
        s(&an),
    ]));
    let report = json(&an.join("attribution.json"));
    assert_eq!(report["categories"].as_array().unwrap().len(), 9);
    assert_eq!(report["regions"].as_array().unwrap().len(), 3);
    for f in [
        "category_influence.png",
        "region_influence.png",
        "analysis.jsonl",
    ] {
        assert!(an.join(f).exists(), "missing {f}");
    }

    let sk = dir.path().join("sweep_k");
    ok(&run(&[
        "sweep",
        "--config",
        c,
        "--set",
        &set_prep,
        "--set",
        "sweep.kind=k",
        "--set",
        "sweep.k=1,2,3,all",
        "--set",
        "train.max_epochs=1",
        "--out",
        s(&sk),
    ]));
    let table = fs::read_to_string(sk.join("sweep_k.csv")).unwrap();
    assert_eq!(table.lines().count(), 5, "{table}");
    assert!(table.lines().last().unwrap().starts_with("all,"));
    assert!(sk.join("sweep_k.png").exists());

    let st = dir.path().join("sweep_time");
    ok(&run(&[
        "sweep",
        "--config",
        c,
        "--set",
        &set_raw,
        "--set",
        "sweep.input_minutes=[20]",
        "--set",
        "sweep.delay_minutes=[5,10]",
        "--set",
        "train.max_epochs=1",
        "--out",
        s(&st),
    ]));
    assert_eq!(
        fs::read_to_string(st.join("sweep_time.csv"))
            .unwrap()
            .lines()
            .count(),
        3
    );
    assert!(st.join("sweep_time_f1.png").exists());
}
