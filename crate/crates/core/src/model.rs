//! The full predictor: grouping, encoding, extraction and aggregation wired
//! together, plus per-sample preparation and analysis records.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aggregation::{classify, fuse, group_attention, trade_mlp, AggregationParams};
use crate::autodiff::{Tape, Var};
use crate::corpus::{Category, Minute, NewsItem, Region};
use crate::encoder::{
    assemble_independent, assemble_units, EncoderConfig, EncoderKind, EncoderParams, GroupEncoding,
    Vocab,
};
use crate::error::{Error, Result};
use crate::extraction::{extract, ExtractionParams, GroupSummary, TopK};
use crate::features::Sample;
use crate::grouping::{
    group_news, single_group, APConfig, GroupSubject, GroupingMethod, TfidfVocab,
};
use crate::nn::Dropout;
use crate::params::{Gradients, ParamStore};
use crate::tensor::Matrix;

pub const MODEL_FORMAT: &str = "forexsum-model";
pub const MODEL_VERSION: u32 = 1;
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    NoNews,
    NoGroup,
    NoConnect,
    Lstm,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::NoNews,
        Variant::NoGroup,
        Variant::NoConnect,
        Variant::Lstm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoNews => "no_news",
            Variant::NoGroup => "no_group",
            Variant::NoConnect => "no_connect",
            Variant::Lstm => "lstm",
        }
    }

    pub fn uses_news(self) -> bool {
        self != Variant::NoNews
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown variant {s:?}"))
    }
}

/// Everything needed to rebuild a model's parameter layout and inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub encoder: EncoderConfig,
    pub variant: Variant,
    pub grouping: GroupingMethod,
    pub k: TopK,
    pub time_unit: i64,
    pub ap: APConfig,
    pub feature_dim: usize,
    pub vocab_size: usize,
}

impl ModelSpec {
    pub fn encoder_config(&self) -> EncoderConfig {
        let mut cfg = self.encoder.clone();
        if self.variant == Variant::Lstm {
            cfg.kind = EncoderKind::Lstm;
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder_config().validate()?;
        self.ap.validate()?;
        if self.time_unit <= 0 {
            return Err(Error::Config("time unit must be positive".into()));
        }
        if self.feature_dim == 0 {
            return Err(Error::Config("feature dimension must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct SpecFile {
    format: String,
    version: u32,
    spec: ModelSpec,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub spec: ModelSpec,
    pub store: ParamStore,
    pub encoder: EncoderParams,
    pub extraction: ExtractionParams,
    pub aggregation: AggregationParams,
}

impl Model {
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let h = spec.encoder.hidden;
        let encoder = EncoderParams::init(
            &mut store,
            &mut rng,
            &spec.encoder_config(),
            spec.vocab_size.max(4),
        )?;
        let extraction = ExtractionParams::init(&mut store, &mut rng, h);
        let aggregation = AggregationParams::init(&mut store, &mut rng, spec.feature_dim, h);
        Ok(Model {
            spec,
            store,
            encoder,
            extraction,
            aggregation,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let spec = SpecFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            spec: self.spec.clone(),
        };
        let path = dir.join("model.json");
        let text = serde_json::to_string_pretty(&spec).map_err(|e| Error::Serde(e.to_string()))?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        self.store.save(&dir.join("params.json"))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("model.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let file: SpecFile = serde_json::from_str(&text)
            .map_err(|e| Error::Serde(format!("{}: {e}", path.display())))?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(Error::Serde(format!(
                "{}: expected {MODEL_FORMAT} v{MODEL_VERSION}, found {} v{}",
                path.display(),
                file.format,
                file.version
            )));
        }
        let mut model = Model::new(file.spec, 0)?;
        let stored = ParamStore::load(&dir.join("params.json"))?;
        model.store.load_values_from(&stored)?;
        Ok(model)
    }
}

/// Per-headline facts carried through to analysis records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewsMeta {
    pub id: String,
    pub timestamp: Minute,
    pub category: Category,
    pub region: Region,
}

impl From<&NewsItem> for NewsMeta {
    fn from(n: &NewsItem) -> Self {
        NewsMeta {
            id: n.id.clone(),
            timestamp: n.timestamp,
            category: n.category,
            region: n.region,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedGroup {
    pub subject: GroupSubject,
    pub news: Vec<NewsMeta>,
    /// One connected encoding, or one per headline when encoding in isolation.
    pub encodings: Vec<GroupEncoding>,
    /// Group-member index of each encoder output row.
    pub rows: Vec<usize>,
}

/// A scaled sample with its groups tokenized and laid out for the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSample {
    pub window_start: Minute,
    pub label: u8,
    pub trade: Vec<f64>,
    pub groups: Vec<PreparedGroup>,
}

impl PreparedSample {
    pub fn max_group_len(&self) -> usize {
        self.groups.iter().map(|g| g.news.len()).max().unwrap_or(0)
    }
}

pub fn prepare_sample(
    sample: &Sample,
    spec: &ModelSpec,
    vocab: &Vocab,
    tfidf: Option<&TfidfVocab>,
) -> Result<PreparedSample> {
    if sample.trade_features.len() != spec.feature_dim {
        return Err(Error::Shape(format!(
            "sample has {} trade features, model expects {}",
            sample.trade_features.len(),
            spec.feature_dim
        )));
    }
    let groups = match spec.variant {
        Variant::NoNews => Vec::new(),
        Variant::NoGroup => single_group(&sample.news),
        _ => group_news(
            &sample.news,
            spec.grouping,
            sample.window_start,
            spec.time_unit,
            tfidf,
            &spec.ap,
        )?,
    };
    let max_len = spec.encoder.max_len;
    let groups = groups
        .into_iter()
        .map(|g| {
            let units: Vec<Vec<usize>> =
                g.news.iter().map(|n| vocab.tokenize(&n.headline)).collect();
            let (encodings, rows) = if spec.variant == Variant::NoConnect {
                (
                    assemble_independent(&units, max_len)?,
                    (0..units.len()).collect(),
                )
            } else {
                let enc = assemble_units(&units, max_len)?;
                let rows = enc.survivors.clone();
                (vec![enc], rows)
            };
            Ok(PreparedGroup {
                subject: g.subject,
                news: g.news.iter().map(NewsMeta::from).collect(),
                encodings,
                rows,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PreparedSample {
        window_start: sample.window_start,
        label: sample.label,
        trade: sample.trade_features.clone(),
        groups,
    })
}

pub struct ForwardOutput {
    /// `1 × 2`; index = label.
    pub probs: Var,
    pub att: Vec<f64>,
    pub summaries: Vec<GroupSummary>,
    pub rt: Var,
    pub rs: Var,
}

impl Model {
    pub fn forward(
        &self,
        tape: &mut Tape,
        sample: &PreparedSample,
        dropout: &mut Dropout,
    ) -> Result<ForwardOutput> {
        let y = tape.constant(Matrix::row_vector(sample.trade.clone()));
        let rt = trade_mlp(tape, y, &self.aggregation, dropout);
        let h = self.spec.encoder.hidden;

        let mut summaries = Vec::with_capacity(sample.groups.len());
        for g in &sample.groups {
            let cls = if g.encodings.len() == 1 && self.spec.variant != Variant::NoConnect {
                self.encoder.encode(tape, &g.encodings[0], dropout)
            } else {
                self.encoder.encode_independent(tape, &g.encodings, dropout)
            };
            summaries.push(extract(tape, cls, &self.extraction, self.spec.k)?);
        }

        let (rs, att) = if summaries.is_empty() {
            if self.spec.variant.uses_news() {
                log::debug!(
                    "sample at {} has no news; using the trade-only path",
                    sample.window_start
                );
            }
            (tape.constant(Matrix::zeros(1, h)), Vec::new())
        } else {
            let reps: Vec<Var> = summaries.iter().map(|s| s.representation).collect();
            let stacked = tape.concat_rows(&reps);
            let att = group_attention(tape, rt, stacked, self.aggregation.wa);
            let rs = tape.matmul(att, stacked);
            (rs, tape.value(att).data.clone())
        };
        let fused = fuse(tape, rt, rs);
        let probs = classify(tape, fused, &self.aggregation, dropout);
        Ok(ForwardOutput {
            probs,
            att,
            summaries,
            rt,
            rs,
        })
    }

    /// Inference without dropout.
    pub fn predict(&self, sample: &PreparedSample) -> Result<Prediction> {
        let mut tape = Tape::new(&self.store);
        let out = self.forward(&mut tape, sample, &mut Dropout::off())?;
        let p = tape.value(out.probs);
        let probs = [p.data[0], p.data[1]];
        Ok(Prediction {
            probs,
            predicted: u8::from(probs[1] > probs[0]),
            att: out.att,
            selections: out
                .summaries
                .into_iter()
                .map(|s| Selection {
                    selected: s.selected,
                    weights: s.weights,
                    scores: s.scores,
                })
                .collect(),
        })
    }

    /// NLL of one sample (no L2 term) and its parameter gradients.
    pub fn sample_gradients(
        &self,
        sample: &PreparedSample,
        dropout: &mut Dropout,
    ) -> Result<(f64, Gradients)> {
        let mut tape = Tape::new(&self.store);
        let out = self.forward(&mut tape, sample, dropout)?;
        let loss = nll(&mut tape, out.probs, sample.label);
        Ok((tape.scalar(loss), tape.backward(loss)))
    }
}

/// `−ln max(p[label], 1e-12)`.
pub fn nll(tape: &mut Tape, probs: Var, label: u8) -> Var {
    let p = tape.element(probs, label as usize);
    let lp = tape.ln_floor(p, PROB_FLOOR);
    tape.scale(lp, -1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Encoder-row indices, in selection order.
    pub selected: Vec<usize>,
    pub weights: Vec<f64>,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub probs: [f64; 2],
    pub predicted: u8,
    pub att: Vec<f64>,
    pub selections: Vec<Selection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewsRecord {
    pub id: String,
    pub timestamp: Minute,
    pub category: Category,
    pub region: Region,
    /// Importance score, when the headline reached the encoder.
    pub score: Option<f64>,
    /// Selection weight; zero when not selected.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRecord {
    pub subject: GroupSubject,
    pub attention: f64,
    pub news: Vec<NewsRecord>,
}

/// One line of the per-sample analysis dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRecord {
    pub window_start: Minute,
    pub label: u8,
    pub predicted: u8,
    pub probs: [f64; 2],
    pub groups: Vec<GroupRecord>,
}

pub fn analysis_record(sample: &PreparedSample, pred: &Prediction) -> AnalysisRecord {
    let groups = sample
        .groups
        .iter()
        .zip(&pred.selections)
        .zip(&pred.att)
        .map(|((g, sel), &attention)| {
            let mut news: Vec<NewsRecord> = g
                .news
                .iter()
                .map(|n| NewsRecord {
                    id: n.id.clone(),
                    timestamp: n.timestamp,
                    category: n.category,
                    region: n.region,
                    score: None,
                    weight: 0.0,
                })
                .collect();
            for (row, &member) in g.rows.iter().enumerate() {
                news[member].score = sel.scores.get(row).copied();
            }
            for (&row, &w) in sel.selected.iter().zip(&sel.weights) {
                news[g.rows[row]].weight = w;
            }
            GroupRecord {
                subject: g.subject.clone(),
                attention,
                news,
            }
        })
        .collect();
    AnalysisRecord {
        window_start: sample.window_start,
        label: sample.label,
        predicted: pred.predicted,
        probs: pred.probs,
        groups,
    }
}
