//! End-to-end stages shared by the command line and the test suites: raw
//! data → windowed dataset → trained model → reports, sweeps and charts.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{Config, SplitName, SweepKind};
use crate::corpus::{
    generate_synthetic, load_news, load_trades, write_news, write_signals, write_trades, NewsItem,
    TradeSeries,
};
use crate::encoder::Vocab;
use crate::error::{Error, Result};
use crate::eval::{analysis_records, attribution, evaluate, AttributionReport, EvalReport};
use crate::extraction::TopK;
use crate::features::{
    build_windows, chronological_split, feature_dim, load_samples, save_samples, Sample,
    ScalerState, WindowSpec,
};
use crate::grouping::tfidf::TfidfVocab;
use crate::model::{prepare_sample, Model, ModelSpec, Prediction, PreparedSample};
use crate::parallel;
use crate::plot;
use crate::training::{train, TrainHistory};

pub const MANIFEST_FORMAT: &str = "forexsum-manifest";

fn json_err(e: serde_json::Error) -> Error {
    Error::Serde(e.to_string())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(json_err)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(json_err)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Resolved configuration and every file a command wrote.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub files: Vec<String>,
}

pub fn write_manifest(
    out: &Path,
    command: &str,
    seed: u64,
    cfg: &Config,
    files: &[PathBuf],
) -> Result<PathBuf> {
    let mut files: Vec<String> = files
        .iter()
        .map(|f| f.strip_prefix(out).unwrap_or(f).display().to_string())
        .collect();
    files.push("manifest.json".into());
    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        version: 1,
        command: command.into(),
        seed,
        config: serde_json::to_value(cfg).map_err(json_err)?,
        files,
    };
    let path = out.join("manifest.json");
    write_json(&path, &manifest)?;
    Ok(path)
}

// ---------------------------------------------------------------------------
// raw data

pub struct RawData {
    pub news: Vec<NewsItem>,
    pub series: TradeSeries,
}

/// Loads trades and (unless the variant ignores text) news for `cfg.pair`.
pub fn load_raw(cfg: &Config) -> Result<RawData> {
    let trades = cfg
        .trades_path()
        .ok_or_else(|| Error::Config("set data.raw or data.trades".into()))?;
    let series = load_trades(&trades)?;
    let news = match cfg.news_path() {
        Some(p) if p.exists() => load_news(&p, &cfg.pair)?,
        Some(p) if cfg.uses_news() => {
            return Err(Error::Config(format!(
                "news file {} not found",
                p.display()
            )))
        }
        None if cfg.uses_news() => return Err(Error::Config("set data.raw or data.news".into())),
        _ => {
            log::info!("no news input; continuing with trade data only");
            Vec::new()
        }
    };
    Ok(RawData { news, series })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateSummary {
    pub news: usize,
    pub bars: usize,
    pub signals: usize,
    pub windows: usize,
    pub up: usize,
    pub down: usize,
    pub up_fraction: f64,
}

/// Writes `news.jsonl`, `trades.csv`, `signals.jsonl` and `summary.json`.
/// `seed` replaces `generator.seed`.
pub fn run_generate(
    cfg: &Config,
    seed: u64,
    out: &Path,
) -> Result<(GenerateSummary, Vec<PathBuf>)> {
    ensure_dir(out)?;
    let mut gen = cfg.generator.clone();
    gen.seed = seed;
    let data = generate_synthetic(&gen, &cfg.pair)?;
    let files = vec![
        out.join("news.jsonl"),
        out.join("trades.csv"),
        out.join("signals.jsonl"),
        out.join("summary.json"),
    ];
    write_news(&files[0], &data.records)?;
    write_trades(&files[1], &data.bars)?;
    write_signals(&files[2], &data.signals)?;
    let series = TradeSeries::from_bars(data.bars.clone())?;
    let windows = build_windows(&series, &data.news, &cfg.window, &cfg.pair.name)?;
    let up = windows.iter().filter(|w| w.label == 1).count();
    let summary = GenerateSummary {
        news: data.records.len(),
        bars: data.bars.len(),
        signals: data.signals.len(),
        windows: windows.len(),
        up,
        down: windows.len() - up,
        up_fraction: up as f64 / windows.len().max(1) as f64,
    };
    write_json(&files[3], &summary)?;
    Ok((summary, files))
}

// ---------------------------------------------------------------------------
// windowed dataset

/// Scaled, split samples plus everything fitted on the training split.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub window: WindowSpec,
    pub train: Vec<Sample>,
    pub dev: Vec<Sample>,
    pub test: Vec<Sample>,
    pub scaler: ScalerState,
    pub vocab: Vocab,
    pub tfidf: Option<TfidfVocab>,
}

/// Distinct training headlines in first-seen order.
fn train_headlines(train: &[Sample]) -> Vec<String> {
    let mut seen = BTreeMap::new();
    let mut out = Vec::new();
    for s in train {
        for n in &s.news {
            if seen.insert(n.id.clone(), ()).is_none() {
                out.push(n.headline.clone());
            }
        }
    }
    out
}

pub fn build_dataset(raw: &RawData, cfg: &Config, window: &WindowSpec) -> Result<Dataset> {
    let samples = build_windows(&raw.series, &raw.news, window, &cfg.pair.name)?;
    let split = chronological_split(&samples, &cfg.split)?;
    if split.train.is_empty() {
        return Err(Error::InsufficientData("training split is empty".into()));
    }
    let scaler = ScalerState::fit(&split.train)?;
    let scale = |v: &[Sample]| {
        v.iter()
            .map(|s| scaler.apply(s))
            .collect::<Result<Vec<_>>>()
    };
    let (train, dev, test) = (
        scale(&split.train)?,
        scale(&split.dev)?,
        scale(&split.test)?,
    );
    let headlines = train_headlines(&train);
    let vocab = Vocab::build(&headlines, cfg.encoder.min_freq);
    let tfidf = if headlines.is_empty() {
        None
    } else {
        Some(TfidfVocab::fit(&headlines)?)
    };
    Ok(Dataset {
        window: *window,
        train,
        dev,
        test,
        scaler,
        vocab,
        tfidf,
    })
}

impl Dataset {
    pub fn split(&self, name: SplitName) -> &[Sample] {
        match name {
            SplitName::Train => &self.train,
            SplitName::Dev => &self.dev,
            SplitName::Test => &self.test,
        }
    }

    pub fn feature_dim(&self) -> usize {
        feature_dim(self.window.input_minutes)
    }

    pub fn save(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        ensure_dir(dir)?;
        let mut files = Vec::new();
        for name in [SplitName::Train, SplitName::Dev, SplitName::Test] {
            let p = dir.join(format!("{}.jsonl", name.as_str()));
            save_samples(&p, self.split(name), &self.window)?;
            files.push(p);
        }
        let p = dir.join("scaler.json");
        self.scaler.save(&p)?;
        files.push(p);
        let p = dir.join("vocab.tsv");
        self.vocab.save(&p)?;
        files.push(p);
        if let Some(t) = &self.tfidf {
            let p = dir.join("tfidf.tsv");
            t.save(&p)?;
            files.push(p);
        }
        Ok(files)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let (window, train) = load_samples(&dir.join("train.jsonl"))?;
        let (_, dev) = load_samples(&dir.join("dev.jsonl"))?;
        let (_, test) = load_samples(&dir.join("test.jsonl"))?;
        let tfidf_path = dir.join("tfidf.tsv");
        Ok(Dataset {
            window,
            train,
            dev,
            test,
            scaler: ScalerState::load(&dir.join("scaler.json"))?,
            vocab: Vocab::load(&dir.join("vocab.tsv"))?,
            tfidf: if tfidf_path.exists() {
                Some(TfidfVocab::load(&tfidf_path)?)
            } else {
                None
            },
        })
    }

    pub fn prepare(&self, samples: &[Sample], spec: &ModelSpec) -> Result<Vec<PreparedSample>> {
        parallel::map_indexed(samples, |_, s| {
            prepare_sample(s, spec, &self.vocab, self.tfidf.as_ref())
        })
        .into_iter()
        .collect()
    }
}

pub fn run_preprocess(cfg: &Config, out: &Path) -> Result<(Dataset, Vec<PathBuf>)> {
    let raw = load_raw(cfg)?;
    let ds = build_dataset(&raw, cfg, &cfg.window)?;
    log::info!(
        "windows: {} train, {} dev, {} test; vocab {}",
        ds.train.len(),
        ds.dev.len(),
        ds.test.len(),
        ds.vocab.len()
    );
    let files = ds.save(out)?;
    Ok((ds, files))
}

fn prepared_dir(cfg: &Config) -> Result<&Path> {
    cfg.data
        .prepared
        .as_deref()
        .ok_or_else(|| Error::Config("set data.prepared to a preprocess output directory".into()))
}

fn run_dir(cfg: &Config) -> Result<&Path> {
    cfg.data
        .run
        .as_deref()
        .ok_or_else(|| Error::Config("set data.run to a train output directory".into()))
}

// ---------------------------------------------------------------------------
// training and evaluation

pub struct TrainOutcome {
    pub model: Model,
    pub history: TrainHistory,
    pub test: EvalReport,
    pub predictions: Vec<Prediction>,
}

/// Fresh model from `cfg`, trained on `ds.train`, early-stopped on `ds.dev`
/// and scored on `ds.test`.
pub fn train_and_evaluate(ds: &Dataset, cfg: &Config, seed: u64) -> Result<TrainOutcome> {
    let spec = cfg.model_spec(ds.feature_dim(), ds.vocab.len());
    let model = Model::new(spec.clone(), seed)?;
    let train_set = ds.prepare(&ds.train, &spec)?;
    let dev_set = ds.prepare(&ds.dev, &spec)?;
    let test_set = ds.prepare(&ds.test, &spec)?;
    let (model, history) = train(model, &train_set, &dev_set, &cfg.train, seed)?;
    let (test, predictions) = evaluate(&model, &test_set, seed)?;
    Ok(TrainOutcome {
        model,
        history,
        test,
        predictions,
    })
}

pub fn run_train(cfg: &Config, seed: u64, out: &Path) -> Result<(TrainOutcome, Vec<PathBuf>)> {
    let ds = Dataset::load(prepared_dir(cfg)?)?;
    ensure_dir(out)?;
    let outcome = train_and_evaluate(&ds, cfg, seed)?;
    let ckpt = out.join("checkpoint");
    outcome.model.save(&ckpt)?;
    let history = out.join("history.jsonl");
    outcome.history.save_jsonl(&history)?;
    let report = out.join("eval_test.json");
    write_json(&report, &outcome.test)?;
    Ok((
        outcome,
        vec![
            ckpt.join("model.json"),
            ckpt.join("params.json"),
            history,
            report,
        ],
    ))
}

fn load_for_eval(cfg: &Config) -> Result<(Dataset, Model)> {
    let ds = Dataset::load(prepared_dir(cfg)?)?;
    let model = Model::load(&run_dir(cfg)?.join("checkpoint"))?;
    Ok((ds, model))
}

pub fn run_eval(cfg: &Config, seed: u64, out: &Path) -> Result<(EvalReport, Vec<PathBuf>)> {
    let (ds, model) = load_for_eval(cfg)?;
    ensure_dir(out)?;
    let samples = ds.prepare(ds.split(cfg.eval.split), &model.spec)?;
    let (report, _) = evaluate(&model, &samples, seed)?;
    let path = out.join(format!("eval_{}.json", cfg.eval.split.as_str()));
    write_json(&path, &report)?;
    Ok((report, vec![path]))
}

// ---------------------------------------------------------------------------
// attribution

pub fn run_analyze(
    cfg: &Config,
    seed: u64,
    out: &Path,
) -> Result<(AttributionReport, Vec<PathBuf>)> {
    let (ds, model) = load_for_eval(cfg)?;
    ensure_dir(out)?;
    let samples = ds.prepare(ds.split(cfg.eval.split), &model.spec)?;
    let (_, preds) = evaluate(&model, &samples, seed)?;
    let records = analysis_records(&samples, &preds);
    let report = attribution(&records)?;

    let dump = out.join("analysis.jsonl");
    let mut f = fs::File::create(&dump).map_err(|e| Error::io(&dump, e))?;
    for r in &records {
        let line = serde_json::to_string(r).map_err(json_err)?;
        writeln!(f, "{line}").map_err(|e| Error::io(&dump, e))?;
    }
    let json = out.join("attribution.json");
    write_json(&json, &report)?;
    let cat_csv = out.join("category_influence.csv");
    let mut text = String::from("category,proportion\n");
    for (c, w) in &report.categories {
        text.push_str(&format!("{c},{w:.6}\n"));
    }
    fs::write(&cat_csv, text).map_err(|e| Error::io(&cat_csv, e))?;
    let reg_csv = out.join("region_influence.csv");
    let mut text = String::from("region,proportion\n");
    for (r, w) in &report.regions {
        text.push_str(&format!("{r:?},{w:.6}\n"));
    }
    fs::write(&reg_csv, text).map_err(|e| Error::io(&reg_csv, e))?;
    let cat_png = out.join("category_influence.png");
    plot::bar_chart(
        &cat_png,
        &report.categories.iter().map(|c| c.1).collect::<Vec<_>>(),
    )?;
    let reg_png = out.join("region_influence.png");
    plot::bar_chart(
        &reg_png,
        &report.regions.iter().map(|r| r.1).collect::<Vec<_>>(),
    )?;
    Ok((report, vec![dump, json, cat_csv, reg_csv, cat_png, reg_png]))
}

// ---------------------------------------------------------------------------
// sweeps

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeCell {
    pub input_minutes: usize,
    pub delay_minutes: usize,
    pub macro_f1: f64,
    pub mcc: f64,
    pub n_test: usize,
}

/// One independent train + test run per `(W, D)` pair, all with `seed`.
/// Rows follow `input_minutes`, columns `delay_minutes`.
pub fn sweep_time(
    raw: &RawData,
    cfg: &Config,
    input: &[usize],
    delay: &[usize],
    seed: u64,
) -> Result<Vec<TimeCell>> {
    if input.is_empty() || delay.is_empty() {
        return Err(Error::Config("time sweep grids must be non-empty".into()));
    }
    let mut cells = Vec::with_capacity(input.len() * delay.len());
    for &w in input {
        for &d in delay {
            let window = WindowSpec {
                input_minutes: w,
                delay_minutes: d,
                overlap: cfg.window.overlap,
            };
            let ds = build_dataset(raw, cfg, &window)?;
            let outcome = train_and_evaluate(&ds, cfg, seed)?;
            log::info!(
                "sweep W={w} D={d}: f1 {:.4} mcc {:.4}",
                outcome.test.macro_f1,
                outcome.test.mcc
            );
            cells.push(TimeCell {
                input_minutes: w,
                delay_minutes: d,
                macro_f1: outcome.test.macro_f1,
                mcc: outcome.test.mcc,
                n_test: outcome.test.n,
            });
        }
    }
    Ok(cells)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KCell {
    pub k: TopK,
    pub macro_f1: f64,
    pub mcc: f64,
}

/// One independent train + test run per selection size, all with `seed`.
pub fn sweep_selection_k(ds: &Dataset, cfg: &Config, ks: &[TopK], seed: u64) -> Result<Vec<KCell>> {
    if ks.is_empty() {
        return Err(Error::Config("k grid must be non-empty".into()));
    }
    ks.iter()
        .map(|&k| {
            let mut c = cfg.clone();
            c.train.k = k;
            let outcome = train_and_evaluate(ds, &c, seed)?;
            log::info!(
                "sweep k={k}: f1 {:.4} mcc {:.4}",
                outcome.test.macro_f1,
                outcome.test.mcc
            );
            Ok(KCell {
                k,
                macro_f1: outcome.test.macro_f1,
                mcc: outcome.test.mcc,
            })
        })
        .collect()
}

pub fn run_sweep(cfg: &Config, seed: u64, out: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(out)?;
    match cfg.sweep.kind {
        SweepKind::Time => {
            let raw = load_raw(cfg)?;
            let (rows, cols) = (&cfg.sweep.input_minutes, &cfg.sweep.delay_minutes);
            let cells = sweep_time(&raw, cfg, rows, cols, seed)?;
            let csv = out.join("sweep_time.csv");
            let mut text = String::from("input_minutes,delay_minutes,macro_f1,mcc,n_test\n");
            for c in &cells {
                text.push_str(&format!(
                    "{},{},{:.6},{:.6},{}\n",
                    c.input_minutes, c.delay_minutes, c.macro_f1, c.mcc, c.n_test
                ));
            }
            fs::write(&csv, text).map_err(|e| Error::io(&csv, e))?;
            let f1_png = out.join("sweep_time_f1.png");
            plot::heatmap(
                &f1_png,
                rows.len(),
                cols.len(),
                &cells.iter().map(|c| c.macro_f1).collect::<Vec<_>>(),
            )?;
            let mcc_png = out.join("sweep_time_mcc.png");
            plot::heatmap(
                &mcc_png,
                rows.len(),
                cols.len(),
                &cells.iter().map(|c| c.mcc).collect::<Vec<_>>(),
            )?;
            Ok(vec![csv, f1_png, mcc_png])
        }
        SweepKind::K => {
            let ds = Dataset::load(prepared_dir(cfg)?)?;
            let cells = sweep_selection_k(&ds, cfg, &cfg.sweep.k, seed)?;
            let csv = out.join("sweep_k.csv");
            let mut text = String::from("k,macro_f1,mcc\n");
            for c in &cells {
                text.push_str(&format!("{},{:.6},{:.6}\n", c.k, c.macro_f1, c.mcc));
            }
            fs::write(&csv, text).map_err(|e| Error::io(&csv, e))?;
            let png = out.join("sweep_k.png");
            plot::bar_chart(&png, &cells.iter().map(|c| c.macro_f1).collect::<Vec<_>>())?;
            Ok(vec![csv, png])
        }
    }
}

/// Loads `path` as a pretty JSON record written by one of the stages.
pub fn read_report<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    read_json(path)
}
