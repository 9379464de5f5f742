//! News and trade-bar ingestion, plus the synthetic data generator.
//!
//! News files hold one JSON record per line:
//!
//! ```text
//! {"id":"n0000001","ts":"2021-01-04T08:00Z","headline":"fed rate hike","category":"politics","countries":["US"]}
//! ```
//!
//! A `body` field may be present and is ignored. Trade files are CSV with the
//! header `ts,open,high,low,close`.

mod synthetic;

pub use synthetic::{
    generate_synthetic, Direction, SignalEvent, SignalRule, SyntheticConfig, SyntheticDataset,
};

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, NaiveDateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minutes since the Unix epoch, UTC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Minute(pub i64);

impl Minute {
    pub fn offset(self, minutes: i64) -> Minute {
        Minute(self.0 + minutes)
    }

    pub fn to_datetime(self) -> DateTime<Utc> {
        Utc.timestamp_opt(self.0 * 60, 0)
            .single()
            .expect("minute within chrono range")
    }

    /// Parses ISO-8601 (`2021-01-04T08:00Z`, with optional seconds or offset),
    /// truncating to the minute.
    pub fn parse(text: &str) -> Option<Minute> {
        let text = text.trim();
        let dt = DateTime::parse_from_rfc3339(text)
            .map(|d| d.with_timezone(&Utc))
            .ok()
            .or_else(|| {
                let naive = text.trim_end_matches('Z');
                [
                    "%Y-%m-%dT%H:%M",
                    "%Y-%m-%dT%H:%M:%S",
                    "%Y-%m-%d %H:%M",
                    "%Y-%m-%d %H:%M:%S",
                ]
                .iter()
                .find_map(|f| NaiveDateTime::parse_from_str(naive, f).ok())
                .map(|n| n.and_utc())
            })?;
        Some(Minute(dt.timestamp().div_euclid(60)))
    }
}

impl fmt::Display for Minute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_datetime().format("%Y-%m-%dT%H:%MZ"))
    }
}

/// The nine merged news categories, in their fixed order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    BusinessSectors,
    BusinessGeneral,
    BusinessAssets,
    BusinessCommodities,
    BusinessOrganizations,
    Politics,
    ArtsCultureSports,
    ScienceTechnology,
    Other,
}

impl Category {
    pub const ALL: [Category; 9] = [
        Category::BusinessSectors,
        Category::BusinessGeneral,
        Category::BusinessAssets,
        Category::BusinessCommodities,
        Category::BusinessOrganizations,
        Category::Politics,
        Category::ArtsCultureSports,
        Category::ScienceTechnology,
        Category::Other,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Category::BusinessSectors => "business_sectors",
            Category::BusinessGeneral => "business_general",
            Category::BusinessAssets => "business_assets",
            Category::BusinessCommodities => "business_commodities",
            Category::BusinessOrganizations => "business_organizations",
            Category::Politics => "politics",
            Category::ArtsCultureSports => "arts_culture_sports",
            Category::ScienceTechnology => "science_technology",
            Category::Other => "other",
        }
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Category::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| s.to_string())
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Region of a news item relative to a currency pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Region {
    A,
    B,
    AB,
}

impl Region {
    pub const ALL: [Region; 3] = [Region::A, Region::B, Region::AB];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl FromStr for Region {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "A" | "a" => Ok(Region::A),
            "B" | "b" => Ok(Region::B),
            "AB" | "ab" => Ok(Region::AB),
            _ => Err(s.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewsItem {
    pub id: String,
    pub timestamp: Minute,
    pub headline: String,
    pub category: Category,
    pub region: Region,
}

/// A news record as stored on disk, before region resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewsRecord {
    pub id: String,
    pub ts: String,
    pub headline: String,
    pub category: String,
    pub countries: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeBar {
    pub timestamp: Minute,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
}

impl TradeBar {
    pub fn validate(&self) -> Result<()> {
        let bad = |message: &str| Error::InvalidBar {
            minute: self.timestamp.to_string(),
            message: message.to_string(),
        };
        let prices = [self.open, self.high, self.low, self.close];
        if prices.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err(bad("non-positive price"));
        }
        if self.high < self.low {
            return Err(bad("high < low"));
        }
        if self.low > self.open.min(self.close) || self.open.max(self.close) > self.high {
            return Err(bad("open/close outside [low, high]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurrencyPairSpec {
    pub name: String,
    pub region_a: BTreeSet<String>,
    pub region_b: BTreeSet<String>,
}

impl Default for CurrencyPairSpec {
    fn default() -> Self {
        Self::usd_eur()
    }
}

impl CurrencyPairSpec {
    pub fn new(name: &str, region_a: &[&str], region_b: &[&str]) -> Result<Self> {
        let spec = CurrencyPairSpec {
            name: name.to_string(),
            region_a: region_a.iter().map(|s| s.to_string()).collect(),
            region_b: region_b.iter().map(|s| s.to_string()).collect(),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The synthetic default: USD against EUR.
    pub fn usd_eur() -> Self {
        Self::new("USD-EUR", &["US"], &["EU", "DE", "FR", "IT", "ES"]).expect("disjoint regions")
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(tag) = self.region_a.intersection(&self.region_b).next() {
            return Err(Error::Config(format!(
                "pair {}: country tag {tag} in both regions",
                self.name
            )));
        }
        Ok(())
    }

    /// Ternary region of a country-tag set; `None` when it touches neither side.
    pub fn resolve<S: AsRef<str>>(&self, countries: &[S]) -> Option<Region> {
        let in_a = countries.iter().any(|c| self.region_a.contains(c.as_ref()));
        let in_b = countries.iter().any(|c| self.region_b.contains(c.as_ref()));
        match (in_a, in_b) {
            (true, true) => Some(Region::AB),
            (true, false) => Some(Region::A),
            (false, true) => Some(Region::B),
            (false, false) => None,
        }
    }
}

pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl NewsRecord {
    /// Validates the record and resolves its region. `Ok(None)` means the
    /// record is unrelated to the pair.
    fn into_item(
        self,
        pair: &CurrencyPairSpec,
        path: &Path,
        line: usize,
    ) -> Result<Option<NewsItem>> {
        let headline = normalize_whitespace(&self.headline);
        if headline.is_empty() {
            return Err(Error::MalformedRecord {
                path: path.to_path_buf(),
                line,
                message: "empty headline".into(),
            });
        }
        if self.id.trim().is_empty() {
            return Err(Error::MalformedRecord {
                path: path.to_path_buf(),
                line,
                message: "empty id".into(),
            });
        }
        let timestamp = Minute::parse(&self.ts).ok_or_else(|| Error::BadTimestamp {
            path: path.to_path_buf(),
            line,
            value: self.ts.clone(),
        })?;
        let category =
            self.category
                .parse::<Category>()
                .map_err(|value| Error::UnknownCategory {
                    path: path.to_path_buf(),
                    line,
                    value,
                })?;
        Ok(pair.resolve(&self.countries).map(|region| NewsItem {
            id: self.id,
            timestamp,
            headline,
            category,
            region,
        }))
    }
}

/// Reads a line-delimited news file, keeping only records related to `pair`.
/// The result is sorted by timestamp (stable for equal minutes).
pub fn load_news(path: &Path, pair: &CurrencyPairSpec) -> Result<Vec<NewsItem>> {
    pair.validate()?;
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: NewsRecord =
            serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                path: path.to_path_buf(),
                line: line_no,
                message: e.to_string(),
            })?;
        if !seen.insert(record.id.clone()) {
            return Err(Error::MalformedRecord {
                path: path.to_path_buf(),
                line: line_no,
                message: format!("duplicate id {}", record.id),
            });
        }
        if let Some(item) = record.into_item(pair, path, line_no)? {
            out.push(item);
        }
    }
    out.sort_by_key(|n| n.timestamp);
    Ok(out)
}

pub fn write_news(path: &Path, records: &[NewsRecord]) -> Result<()> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r).map_err(|e| Error::Serde(e.to_string()))?;
        buf.push(b'\n');
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Runs of missing minutes between consecutive bars.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapReport {
    /// `(first missing minute, number of missing minutes)`.
    pub ranges: Vec<(Minute, i64)>,
}

impl GapReport {
    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn contains(&self, m: Minute) -> bool {
        let idx = self.ranges.partition_point(|(start, _)| *start <= m);
        idx > 0 && {
            let (start, len) = self.ranges[idx - 1];
            m.0 < start.0 + len
        }
    }

    pub fn missing_minutes(&self) -> i64 {
        self.ranges.iter().map(|(_, len)| len).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeSeries {
    pub bars: Vec<TradeBar>,
    pub gaps: GapReport,
}

impl TradeSeries {
    /// Sorts, rejects duplicates and records gaps.
    pub fn from_bars(mut bars: Vec<TradeBar>) -> Result<Self> {
        for b in &bars {
            b.validate()?;
        }
        bars.sort_by_key(|b| b.timestamp);
        let mut gaps = GapReport::default();
        for w in bars.windows(2) {
            let (prev, next) = (w[0].timestamp, w[1].timestamp);
            if prev == next {
                return Err(Error::DuplicateMinute(next.to_string()));
            }
            if next.0 > prev.0 + 1 {
                gaps.ranges.push((prev.offset(1), next.0 - prev.0 - 1));
            }
        }
        Ok(TradeSeries { bars, gaps })
    }

    /// Index of the bar at minute `m`, if present.
    pub fn index_of(&self, m: Minute) -> Option<usize> {
        self.bars.binary_search_by_key(&m, |b| b.timestamp).ok()
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct TradeRow {
    ts: String,
    open: f64,
    high: f64,
    low: f64,
    close: f64,
}

pub fn load_trades(path: &Path) -> Result<TradeSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::MalformedRecord {
                path: path.to_path_buf(),
                line: 1,
                message: format!("{other:?}"),
            },
        })?;
    let headers = reader
        .headers()
        .map_err(|e| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    for col in ["ts", "open", "high", "low", "close"] {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::MalformedRecord {
                path: path.to_path_buf(),
                line: 1,
                message: format!("missing column {col}"),
            });
        }
    }
    let mut bars = Vec::new();
    for (i, row) in reader.deserialize::<TradeRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::MalformedRecord {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        let timestamp = Minute::parse(&row.ts).ok_or_else(|| Error::BadTimestamp {
            path: path.to_path_buf(),
            line,
            value: row.ts.clone(),
        })?;
        bars.push(TradeBar {
            timestamp,
            open: row.open,
            high: row.high,
            low: row.low,
            close: row.close,
        });
    }
    TradeSeries::from_bars(bars)
}

pub fn write_trades(path: &Path, bars: &[TradeBar]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::Serde(e.to_string()))?;
    for b in bars {
        writer
            .serialize(TradeRow {
                ts: b.timestamp.to_string(),
                open: b.open,
                high: b.high,
                low: b.low,
                close: b.close,
            })
            .map_err(|e| Error::Serde(e.to_string()))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

pub fn write_signals(path: &Path, signals: &[SignalEvent]) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for s in signals {
        let line = serde_json::to_string(s).map_err(|e| Error::Serde(e.to_string()))?;
        writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub fn load_signals(path: &Path) -> Result<Vec<SignalEvent>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::MalformedRecord {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}
