//! Windowed samples: trade-data embedding, min-max scaling, labels and
//! chronological splits.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Minute, NewsItem, TradeBar, TradeSeries};
use crate::error::{Error, Result};
use crate::parallel;

pub const SAMPLES_FORMAT: &str = "forexsum-samples";
pub const SAMPLES_VERSION: u32 = 1;
pub const FEATURE_LAYOUT: &str = "raw[t=0..W][open,high,low,close] | change_rate[t=0..W][open,high,low,close] | pooled_stats[mean,max,min,median,variance]";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub window_start: Minute,
    /// Exclusive end of the input window.
    pub window_end: Minute,
    pub news: Vec<NewsItem>,
    pub trade_features: Vec<f64>,
    /// 1 = up, 0 = down (ties count as down).
    pub label: u8,
    pub pair: String,
}

impl Sample {
    pub fn overlaps(&self, other: &Sample) -> bool {
        self.window_start < other.window_end && other.window_start < self.window_end
    }
}

pub fn feature_dim(input_minutes: usize) -> usize {
    8 * input_minutes + 5
}

/// Binary movement label from the window-ending close and the close `D` minutes later.
pub fn movement_label(end_close: f64, future_close: f64) -> u8 {
    u8::from(future_close > end_close)
}

/// Trade-data embedding of `8W + 5` reals.
///
/// Change rates of the first minute are taken against `prev_bar` when given,
/// else zero. Statistics pool all `4W` raw prices; variance is the population
/// variance.
pub fn trade_embedding(
    bars: &[TradeBar],
    prev_bar: Option<&TradeBar>,
    input_minutes: usize,
) -> Result<Vec<f64>> {
    if bars.len() != input_minutes || input_minutes == 0 {
        return Err(Error::Shape(format!(
            "expected {input_minutes} bars, got {}",
            bars.len()
        )));
    }
    if bars.windows(2).any(|w| w[0].timestamp >= w[1].timestamp)
        || prev_bar.is_some_and(|p| p.timestamp >= bars[0].timestamp)
    {
        return Err(Error::InvalidInput("bars are not chronological".into()));
    }
    let ohlc = |b: &TradeBar| [b.open, b.high, b.low, b.close];
    let mut out = Vec::with_capacity(feature_dim(input_minutes));
    for b in bars {
        out.extend(ohlc(b));
    }
    for (t, b) in bars.iter().enumerate() {
        let prev = if t == 0 { prev_bar } else { Some(&bars[t - 1]) };
        match prev {
            Some(p) => {
                let (pp, cp) = (ohlc(p), ohlc(b));
                out.extend((0..4).map(|c| (cp[c] - pp[c]) / pp[c]));
            }
            None => out.extend([0.0; 4]),
        }
    }
    let mut pooled: Vec<f64> = out[..4 * input_minutes].to_vec();
    let n = pooled.len() as f64;
    let mean = pooled.iter().sum::<f64>() / n;
    let max = pooled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = pooled.iter().cloned().fold(f64::INFINITY, f64::min);
    let variance = pooled.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    pooled.sort_by(|a, b| a.total_cmp(b));
    let mid = pooled.len() / 2;
    let median = if pooled.len().is_multiple_of(2) {
        0.5 * (pooled[mid - 1] + pooled[mid])
    } else {
        pooled[mid]
    };
    out.extend([mean, max, min, median, variance]);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowSpec {
    pub input_minutes: usize,
    pub delay_minutes: usize,
    pub overlap: f64,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec {
            input_minutes: 20,
            delay_minutes: 10,
            overlap: 0.5,
        }
    }
}

impl WindowSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_minutes == 0 || self.delay_minutes == 0 {
            return Err(Error::Config(
                "input and delay minutes must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(Error::Config("overlap must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Minutes between consecutive window starts.
    pub fn stride(&self) -> usize {
        ((self.input_minutes as f64 * (1.0 - self.overlap)).round() as usize).max(1)
    }
}

/// Slides input windows over `series` and attaches news and labels.
///
/// Windows start at the first bar and advance by [`WindowSpec::stride`].
/// A window is skipped when any of its input minutes or its prediction
/// minute is missing from the series. `news` must be chronological.
pub fn build_windows(
    series: &TradeSeries,
    news: &[NewsItem],
    spec: &WindowSpec,
    pair: &str,
) -> Result<Vec<Sample>> {
    spec.validate()?;
    let (first, last) = match (series.bars.first(), series.bars.last()) {
        (Some(f), Some(l)) => (f.timestamp, l.timestamp),
        _ => return Err(Error::InsufficientData("no trade bars".into())),
    };
    let w = spec.input_minutes as i64;
    let d = spec.delay_minutes as i64;
    let stride = spec.stride() as i64;
    let mut starts = Vec::new();
    let mut s = first.0;
    while s + w - 1 + d <= last.0 {
        starts.push(Minute(s));
        s += stride;
    }
    let built = parallel::map_indexed(&starts, |_, &start| -> Option<Result<Sample>> {
        let i = series.index_of(start)?;
        let end_idx = i + spec.input_minutes - 1;
        let end_bar = series.bars.get(end_idx)?;
        if end_bar.timestamp.0 != start.0 + w - 1 {
            return None;
        }
        let future = series.bars[series.index_of(end_bar.timestamp.offset(d))?];
        let prev = i
            .checked_sub(1)
            .map(|p| &series.bars[p])
            .filter(|p| p.timestamp.0 == start.0 - 1);
        let features = match trade_embedding(&series.bars[i..=end_idx], prev, spec.input_minutes) {
            Ok(f) => f,
            Err(e) => return Some(Err(e)),
        };
        let end = start.offset(w);
        let lo = news.partition_point(|n| n.timestamp < start);
        let hi = news.partition_point(|n| n.timestamp < end);
        Some(Ok(Sample {
            window_start: start,
            window_end: end,
            news: news[lo..hi].to_vec(),
            trade_features: features,
            label: movement_label(end_bar.close, future.close),
            pair: pair.to_string(),
        }))
    });
    let samples: Vec<Sample> = built.into_iter().flatten().collect::<Result<_>>()?;
    if samples.is_empty() {
        return Err(Error::InsufficientData(
            "trade bars do not cover a single complete window".into(),
        ));
    }
    Ok(samples)
}

/// Per-feature min/max learned on training samples of one pair.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScalerState {
    pub format: String,
    pub version: u32,
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

impl ScalerState {
    pub fn fit(train: &[Sample]) -> Result<Self> {
        let first = train
            .first()
            .ok_or_else(|| Error::InsufficientData("cannot fit scaler on no samples".into()))?;
        let dim = first.trade_features.len();
        let mut mins = vec![f64::INFINITY; dim];
        let mut maxs = vec![f64::NEG_INFINITY; dim];
        for s in train {
            if s.trade_features.len() != dim {
                return Err(Error::Shape("inconsistent feature dimension".into()));
            }
            for (j, v) in s.trade_features.iter().enumerate() {
                mins[j] = mins[j].min(*v);
                maxs[j] = maxs[j].max(*v);
            }
        }
        Ok(ScalerState {
            format: "forexsum-scaler".into(),
            version: 1,
            mins,
            maxs,
        })
    }

    pub fn is_fitted(&self) -> bool {
        !self.mins.is_empty()
    }

    pub fn scale(&self, features: &[f64]) -> Result<Vec<f64>> {
        if !self.is_fitted() {
            return Err(Error::UnfittedScaler);
        }
        if features.len() != self.mins.len() {
            return Err(Error::Shape(format!(
                "scaler fitted on {} features, got {}",
                self.mins.len(),
                features.len()
            )));
        }
        Ok(features
            .iter()
            .zip(self.mins.iter().zip(&self.maxs))
            .map(|(v, (lo, hi))| {
                if hi > lo {
                    ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect())
    }

    pub fn apply(&self, sample: &Sample) -> Result<Sample> {
        Ok(Sample {
            trade_features: self.scale(&sample.trade_features)?,
            ..sample.clone()
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Serde(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSpec {
    Counts {
        train: usize,
        dev: usize,
        test: usize,
    },
    Fractions {
        train: f64,
        dev: f64,
        test: f64,
    },
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec::Fractions {
            train: 0.8,
            dev: 0.1,
            test: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<Sample>,
    pub dev: Vec<Sample>,
    pub test: Vec<Sample>,
}

/// Contiguous time-ordered split. Dev/test samples whose input window
/// overlaps a training window are dropped.
pub fn chronological_split(samples: &[Sample], spec: &SplitSpec) -> Result<Split> {
    if samples
        .windows(2)
        .any(|w| w[0].window_start > w[1].window_start)
    {
        return Err(Error::InvalidInput("samples must be time-sorted".into()));
    }
    let n = samples.len();
    let (n_train, n_dev, n_test) = match *spec {
        SplitSpec::Counts { train, dev, test } => {
            if train + dev + test > n {
                return Err(Error::InsufficientData(format!(
                    "split {train}+{dev}+{test} exceeds {n} samples"
                )));
            }
            (train, dev, test)
        }
        SplitSpec::Fractions { train, dev, test } => {
            if [train, dev, test].iter().any(|f| !(0.0..=1.0).contains(f))
                || train + dev + test > 1.0 + 1e-9
            {
                return Err(Error::Config(
                    "split fractions must be in [0,1] and sum to <= 1".into(),
                ));
            }
            let nt = (train * n as f64).round() as usize;
            let nd = ((dev * n as f64).round() as usize).min(n - nt);
            let ns = ((test * n as f64).round() as usize).min(n - nt - nd);
            (nt, nd, ns)
        }
    };
    let train = samples[..n_train].to_vec();
    let train_end = train.iter().map(|s| s.window_end).max();
    let keep = |s: &&Sample| train_end.is_none_or(|e| s.window_start >= e);
    let dev = samples[n_train..n_train + n_dev]
        .iter()
        .filter(keep)
        .cloned()
        .collect();
    let test = samples[n_train + n_dev..n_train + n_dev + n_test]
        .iter()
        .filter(keep)
        .cloned()
        .collect();
    Ok(Split { train, dev, test })
}

#[derive(Debug, Serialize, Deserialize)]
struct SamplesHeader {
    format: String,
    version: u32,
    input_minutes: usize,
    delay_minutes: usize,
    feature_layout: String,
    count: usize,
}

/// Writes samples as JSON lines after a header line documenting the layout.
pub fn save_samples(path: &Path, samples: &[Sample], spec: &WindowSpec) -> Result<()> {
    let mut buf = Vec::new();
    let header = SamplesHeader {
        format: SAMPLES_FORMAT.into(),
        version: SAMPLES_VERSION,
        input_minutes: spec.input_minutes,
        delay_minutes: spec.delay_minutes,
        feature_layout: FEATURE_LAYOUT.into(),
        count: samples.len(),
    };
    let ser = |e: serde_json::Error| Error::Serde(e.to_string());
    serde_json::to_writer(&mut buf, &header).map_err(ser)?;
    buf.push(b'\n');
    for s in samples {
        serde_json::to_writer(&mut buf, s).map_err(ser)?;
        buf.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn load_samples(path: &Path) -> Result<(WindowSpec, Vec<Sample>)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let malformed = |line: usize, message: String| Error::MalformedRecord {
        path: path.to_path_buf(),
        line,
        message,
    };
    let header_line = lines
        .next()
        .ok_or_else(|| malformed(1, "missing header".into()))?
        .map_err(|e| Error::io(path, e))?;
    let header: SamplesHeader =
        serde_json::from_str(&header_line).map_err(|e| malformed(1, e.to_string()))?;
    if header.format != SAMPLES_FORMAT || header.version != SAMPLES_VERSION {
        return Err(malformed(
            1,
            format!("unsupported {} v{}", header.format, header.version),
        ));
    }
    let mut samples = Vec::with_capacity(header.count);
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        samples.push(serde_json::from_str(&line).map_err(|e| malformed(i + 2, e.to_string()))?);
    }
    let spec = WindowSpec {
        input_minutes: header.input_minutes,
        delay_minutes: header.delay_minutes,
        overlap: 0.0,
    };
    Ok((spec, samples))
}
