//! Acceptance checks. Prints one `PASS`/`FAIL` line per criterion.
//!
//! `ACCEPTANCE_ONLY=1,3,10` restricts the run to the listed criteria. The
//! process fails only when one of the exact checks (1-4, 10) fails.

mod common;

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::Instant;

use common::exhaustive::{brute_force_partition, partition_of};
use forexsum::config::Config;
use forexsum::corpus::{generate_synthetic, Category, Region, TradeSeries};
use forexsum::eval::{analysis_records, attribution, macro_f1, mcc};
use forexsum::extraction::TopK;
use forexsum::grouping::{
    affinity_propagation, ap::with_preference, cosine_matrix, APConfig, TfidfVocab,
};
use forexsum::model::{prepare_sample, Model, Variant};
use forexsum::pipeline::{
    build_dataset, sweep_selection_k, sweep_time, train_and_evaluate, Dataset, RawData,
};
use forexsum::training::{analytic_gradients, grad_check};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 3] = [1, 2, 3];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

// ---------------------------------------------------------------------------
// 1-4: oracles and invariants

fn ac1_gradients() -> Outcome {
    let t = Instant::now();
    let mut rng = common::rng(41);
    let spec = common::spec(Variant::Full, 16, 2, 13);
    let mut model = Model::new(spec.clone(), 41).unwrap();
    common::randomize(&mut model.store, 141, 0.3);
    let sample = common::random_sample(&mut rng, 2, 3, 13);
    let prepared = prepare_sample(&sample, &spec, &common::vocab(), None).unwrap();
    let analytic = analytic_gradients(&model, &prepared, 0.015).unwrap();
    let report = grad_check(&model, &prepared, &analytic, 0.015, usize::MAX, 1e-4, 41).unwrap();
    let worst = report
        .tensors
        .iter()
        .map(|t| t.max_rel_error)
        .fold(0.0, f64::max);
    let coords: usize = report.tensors.iter().map(|t| t.coords).sum();
    let secs = t.elapsed().as_secs_f64();
    outcome(
        report.passed() && secs < 60.0,
        format!(
            "{} tensors, {coords} coordinates, worst rel err {worst:.2e} (< 1e-4), {secs:.1}s (< 60s)",
            report.tensors.len()
        ),
    )
}

fn ac2_invariants() -> Outcome {
    let variants = [
        Variant::Full,
        Variant::NoGroup,
        Variant::NoConnect,
        Variant::Lstm,
    ];
    let vocab = common::vocab();
    let mut rng = common::rng(42);
    let mut worst: f64 = 0.0;
    let mut negative = false;
    let mut too_long = 0;
    for i in 0..500 {
        let mut spec = common::spec(variants[i % variants.len()], 8, 1, 13);
        spec.encoder.max_len = 32;
        let mut model = Model::new(spec.clone(), i as u64).unwrap();
        common::randomize(&mut model.store, 1000 + i as u64, 0.5);
        let groups = rng.gen_range(1..5);
        let per_group = rng.gen_range(1..15);
        let sample = common::random_sample(&mut rng, groups, per_group, 13);
        let prepared = prepare_sample(&sample, &spec, &vocab, None).unwrap();
        too_long += prepared
            .groups
            .iter()
            .flat_map(|g| &g.encodings)
            .filter(|e| e.len() > spec.encoder.max_len)
            .count();
        let pred = model.predict(&prepared).unwrap();
        let mut check = |v: &[f64]| {
            worst = worst.max((v.iter().sum::<f64>() - 1.0).abs());
            negative |= v.iter().any(|x| *x < 0.0);
        };
        check(&pred.probs);
        check(&pred.att);
        for s in &pred.selections {
            check(&s.weights);
        }
    }
    outcome(
        worst < 1e-6 && !negative && too_long == 0,
        format!(
            "500 passes: max |sum-1| {worst:.1e} (< 1e-6), negatives {negative}, over-length {too_long}"
        ),
    )
}

fn table_oracle(pred: &[u8], labels: &[u8]) -> (f64, f64) {
    let mut m = [[0u64; 2]; 2];
    for (&p, &y) in pred.iter().zip(labels) {
        m[y as usize][p as usize] += 1;
    }
    let class_f1 = |c: usize| {
        let support = m[c][0] + m[c][1] + m[0][c] + m[1][c];
        if support == 0 {
            0.0
        } else {
            2.0 * m[c][c] as f64 / support as f64
        }
    };
    let (tp, tn, fp, fn_) = (
        m[1][1] as f64,
        m[0][0] as f64,
        m[0][1] as f64,
        m[1][0] as f64,
    );
    let marg = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    let r = if marg == 0.0 {
        0.0
    } else {
        (tp * tn - fp * fn_) / marg.sqrt()
    };
    (0.5 * (class_f1(1) + class_f1(0)), r)
}

fn ac3_metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..80);
        let (bp, by) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
        let p: Vec<u8> = (0..n).map(|_| u8::from(rng.gen_bool(bp))).collect();
        let y: Vec<u8> = (0..n).map(|_| u8::from(rng.gen_bool(by))).collect();
        let (f, m) = table_oracle(&p, &y);
        if macro_f1(&p, &y).unwrap() != f || mcc(&p, &y).unwrap() != m {
            mismatches += 1;
        }
    }
    let mut p = Vec::new();
    let mut y = Vec::new();
    for (n, pv, yv) in [(3, 1u8, 1u8), (1, 1, 0), (2, 0, 1), (4, 0, 0)] {
        p.extend(std::iter::repeat_n(pv, n));
        y.extend(std::iter::repeat_n(yv, n));
    }
    let f = format!("{:.4}", macro_f1(&p, &y).unwrap());
    let m = format!("{:.4}", mcc(&p, &y).unwrap());
    outcome(
        mismatches == 0 && f == "0.6970" && m == "0.4082",
        format!("1000 random cases, {mismatches} mismatches; worked matrix F1 {f}, MCC {m}"),
    )
}

const TOPIC_WORDS: [&str; 14] = [
    "rate", "hike", "oil", "price", "vote", "senate", "jobs", "report", "bank", "euro", "trade",
    "deal", "gold", "rally",
];

fn ac4_affinity_propagation() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let cfg = APConfig::default();
    let mut agree = 0;
    let mut tried = 0;
    while tried < 50 {
        let n = rng.gen_range(2..=8);
        let headlines: Vec<String> = (0..n)
            .map(|_| {
                let len = rng.gen_range(2..6);
                (0..len)
                    .map(|_| TOPIC_WORDS[rng.gen_range(0..TOPIC_WORDS.len())])
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect();
        let vocab = TfidfVocab::fit(&headlines).unwrap();
        let vecs: Vec<_> = headlines
            .iter()
            .map(|h| vocab.vectorize(h).unwrap())
            .collect();
        let s = cosine_matrix(&vecs);
        tried += 1;
        let got = partition_of(&affinity_propagation(&s, &cfg).unwrap().labels);
        let want: BTreeSet<BTreeSet<usize>> =
            brute_force_partition(&with_preference(&s, cfg.preference));
        if got == want {
            agree += 1;
        }
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        agree == 50 && secs < 120.0,
        format!("{agree}/50 instances match exhaustive search, {secs:.1}s (< 120s)"),
    )
}

// ---------------------------------------------------------------------------
// 5-9: synthetic replication

/// One planted rule: region-A politics headlines containing "rate hike"
/// lift the price by a single jump ten minutes later.
const PLANTED: &str = r#"generator.rules=[{category="politics",region="A",trigger_tokens=["rate","hike"],direction="up",magnitude=3e-3,delay_minutes=10,effect_minutes=1,rate=0.04,decoy_rate=0.03}]"#;

fn base_overrides() -> Vec<String> {
    [
        "window.input_minutes=10",
        "window.delay_minutes=10",
        "generator.base_drift=-0.5e-4",
        "generator.news_rate=0.8",
        "encoder.hidden=16",
        "encoder.layers=1",
        "encoder.heads=2",
        "encoder.ffn=32",
        "encoder.min_freq=1",
        "train.max_epochs=20",
        "train.l2=0.0",
        PLANTED,
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

fn config_with(extra: &[&str]) -> Config {
    let mut o = base_overrides();
    o.extend(extra.iter().map(|s| s.to_string()));
    Config::load(None, &o).expect("acceptance config")
}

fn raw_data(cfg: &Config) -> RawData {
    let data = generate_synthetic(&cfg.generator, &cfg.pair).unwrap();
    RawData {
        news: data.news,
        series: TradeSeries::from_bars(data.bars).unwrap(),
    }
}

fn with_variant(cfg: &Config, v: &str) -> Config {
    let mut c = cfg.clone();
    c.train.variant = v.parse().unwrap();
    c
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn fmt(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3}")).collect();
    format!("[{}] mean {:.3}", parts.join(", "), mean(v))
}

struct Replication {
    windows: Vec<usize>,
    full: Vec<f64>,
    no_news: Vec<f64>,
    no_group: Vec<f64>,
    no_connect: Vec<f64>,
    top_category: Vec<Category>,
    top_region: Vec<Region>,
    secs_ac5: f64,
}

fn replicate() -> Replication {
    let mut r = Replication {
        windows: Vec::new(),
        full: Vec::new(),
        no_news: Vec::new(),
        no_group: Vec::new(),
        no_connect: Vec::new(),
        top_category: Vec::new(),
        top_region: Vec::new(),
        secs_ac5: 0.0,
    };
    for seed in SEEDS {
        let t = Instant::now();
        let cfg = config_with(&[
            "generator.trading_days=175",
            &format!("generator.seed={seed}"),
        ]);
        let raw = raw_data(&cfg);
        let ds: Dataset = build_dataset(&raw, &cfg, &cfg.window).unwrap();
        r.windows
            .push(ds.train.len() + ds.dev.len() + ds.test.len());

        let full = train_and_evaluate(&ds, &cfg, seed).unwrap();
        r.full.push(full.test.macro_f1);
        let spec = &full.model.spec;
        let test = ds.prepare(&ds.test, spec).unwrap();
        let report = attribution(&analysis_records(&test, &full.predictions)).unwrap();
        r.top_category.push(report.top_category());
        r.top_region.push(report.top_region());

        let no_news = train_and_evaluate(&ds, &with_variant(&cfg, "no_news"), seed).unwrap();
        r.no_news.push(no_news.test.macro_f1);
        r.secs_ac5 += t.elapsed().as_secs_f64();

        let ng = train_and_evaluate(&ds, &with_variant(&cfg, "no_group"), seed).unwrap();
        r.no_group.push(ng.test.macro_f1);
        let nc = train_and_evaluate(&ds, &with_variant(&cfg, "no_connect"), seed).unwrap();
        r.no_connect.push(nc.test.macro_f1);
        eprintln!(
            "  seed {seed}: full {:.3} no_news {:.3} no_group {:.3} no_connect {:.3} ({:.0}s)",
            full.test.macro_f1,
            no_news.test.macro_f1,
            ng.test.macro_f1,
            nc.test.macro_f1,
            t.elapsed().as_secs_f64()
        );
    }
    r
}

fn ac5(r: &Replication) -> Outcome {
    let (f, n) = (mean(&r.full), mean(&r.no_news));
    let min_windows = *r.windows.iter().min().unwrap();
    outcome(
        f >= 0.70 && n <= 0.55 && min_windows >= 20_000 && r.secs_ac5 < 1800.0,
        format!(
            "full F1 {} (>= 0.70), no_news F1 {} (<= 0.55), >= {min_windows} windows, {:.0}s (< 1800s)",
            fmt(&r.full),
            fmt(&r.no_news),
            r.secs_ac5
        ),
    )
}

fn ac6(r: &Replication) -> Outcome {
    let f = mean(&r.full);
    outcome(
        f > mean(&r.no_group) && f > mean(&r.no_connect),
        format!(
            "full {} vs no_group {}, no_connect {}",
            fmt(&r.full),
            fmt(&r.no_group),
            fmt(&r.no_connect)
        ),
    )
}

fn ac7(r: &Replication) -> Outcome {
    let cats = r
        .top_category
        .iter()
        .filter(|c| **c == Category::Politics)
        .count();
    let regs = r.top_region.iter().filter(|c| **c == Region::A).count();
    outcome(
        cats == 3 && regs == 3,
        format!(
            "top category {:?} ({cats}/3 politics), top region {:?} ({regs}/3 A)",
            r.top_category, r.top_region
        ),
    )
}

fn ac8_selection_k() -> Outcome {
    let ks = [
        TopK::Top(1),
        TopK::Top(2),
        TopK::Top(3),
        TopK::Top(4),
        TopK::All,
    ];
    let mut table: Vec<Vec<f64>> = vec![Vec::new(); ks.len()];
    for seed in SEEDS {
        let cfg = config_with(&[
            "generator.trading_days=40",
            &format!("generator.seed={seed}"),
            "generator.news_rate=2.0",
            "generator.category_weights=[1,1,1,1,1,10,1,1,1]",
            "generator.min_rule_spacing=10",
            "train.max_epochs=10",
        ]);
        let raw = raw_data(&cfg);
        let ds = build_dataset(&raw, &cfg, &cfg.window).unwrap();
        for (i, cell) in sweep_selection_k(&ds, &cfg, &ks, seed)
            .unwrap()
            .into_iter()
            .enumerate()
        {
            table[i].push(cell.macro_f1);
        }
    }
    let means: Vec<f64> = table.iter().map(|v| mean(v)).collect();
    let best = means[..4].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let cells: Vec<String> = ks
        .iter()
        .zip(&means)
        .map(|(k, m)| format!("k={k}: {m:.3}"))
        .collect();
    outcome(
        best > means[4],
        format!("mean F1 over 3 seeds {}", cells.join(", ")),
    )
}

fn ac9_time_sweep() -> Outcome {
    let rule = r#"generator.rules=[{category="politics",region="A",trigger_tokens=["rate","hike"],direction="up",magnitude=2e-4,delay_minutes=5,effect_minutes=30,rate=0.02,decoy_rate=0.0}]"#;
    let cfg = config_with(&[
        "generator.trading_days=100",
        "generator.seed=9",
        "generator.base_drift=-1.2e-4",
        "generator.news_rate=0.3",
        "train.max_epochs=15",
        rule,
    ]);
    let raw = raw_data(&cfg);
    let cells = sweep_time(&raw, &cfg, &[10], &[5, 30, 40], 9).unwrap();
    let f = |d: usize| {
        cells
            .iter()
            .find(|c| c.delay_minutes == d)
            .unwrap()
            .macro_f1
    };
    let (d5, d30, d40) = (f(5), f(30), f(40));
    outcome(
        d5 > 0.65 && (d30 - 0.5).abs() <= 0.05 && (d40 - 0.5).abs() <= 0.05,
        format!(
            "W=10: F1 at D=5 {d5:.3} (> 0.65), D=30 {d30:.3}, D=40 {d40:.3} (|F1-0.5| <= 0.05)"
        ),
    )
}

// ---------------------------------------------------------------------------
// 10: determinism

fn ac10_determinism() -> Outcome {
    let cfg = config_with(&[
        "generator.trading_days=20",
        "generator.seed=10",
        "train.max_epochs=4",
    ]);
    let raw = raw_data(&cfg);
    let ds = build_dataset(&raw, &cfg, &cfg.window).unwrap();
    let run = || {
        let o = train_and_evaluate(&ds, &cfg, 10).unwrap();
        (
            serde_json::to_string(&o.test).unwrap(),
            serde_json::to_string(&o.history).unwrap(),
        )
    };
    let (a, b) = (run(), run());
    outcome(
        a == b,
        format!("two runs, report and history identical: {}", a == b),
    )
}

fn main() -> ExitCode {
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |n: u32| only.as_ref().is_none_or(|o| o.contains(&n));
    let names = [
        "gradient integrity",
        "probability and weight invariants",
        "metric oracles",
        "affinity propagation oracle",
        "synthetic learnability",
        "ablation ordering",
        "attribution recovery",
        "selection-k trend",
        "time-sweep sanity",
        "determinism",
    ];
    let mut results: Vec<(u32, Outcome)> = Vec::new();
    let mut run = |n: u32, f: &dyn Fn() -> Outcome| {
        if wanted(n) {
            let o = f();
            println!(
                "AC{n:<2} {} {}: {}",
                if o.pass { "PASS" } else { "FAIL" },
                names[n as usize - 1],
                o.detail
            );
            results.push((n, o));
        }
    };
    run(1, &ac1_gradients);
    run(2, &ac2_invariants);
    run(3, &ac3_metrics);
    run(4, &ac4_affinity_propagation);
    if wanted(5) || wanted(6) || wanted(7) {
        let r = replicate();
        run(5, &|| ac5(&r));
        run(6, &|| ac6(&r));
        run(7, &|| ac7(&r));
    }
    run(8, &ac8_selection_k);
    run(9, &ac9_time_sweep);
    run(10, &ac10_determinism);

    let failed: Vec<u32> = results
        .iter()
        .filter(|(_, o)| !o.pass)
        .map(|(n, _)| *n)
        .collect();
    println!(
        "acceptance: {}/{} criteria pass{}",
        results.len() - failed.len(),
        results.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!("; failing {failed:?}")
        }
    );
    // Replication criteria (5-9) are statistical and only reported.
    if failed.iter().any(|n| [1, 2, 3, 4, 10].contains(n)) {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
