//! Synthetic news + price generator with planted, logged signals.
//!
//! Prices follow a geometric random walk at minute resolution. Each planted
//! rule emits trigger headlines at a Poisson rate; an emission at minute `t`
//! adds the rule's signed drift to the log-returns of minutes
//! `[t + delay, t + delay + effect)`. Decoy headlines reuse the trigger
//! tokens under the wrong category or region and move nothing.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::{Category, CurrencyPairSpec, Minute, NewsItem, NewsRecord, Region, TradeBar};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Up => 1.0,
            Direction::Down => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalRule {
    pub category: Category,
    pub region: Region,
    pub trigger_tokens: Vec<String>,
    pub direction: Direction,
    /// Per-minute log-drift added while the effect is active.
    pub magnitude: f64,
    pub delay_minutes: u32,
    #[serde(default = "default_effect")]
    pub effect_minutes: u32,
    /// Emissions per minute.
    pub rate: f64,
    /// Decoy headlines (same tokens, wrong category or region) per minute.
    #[serde(default)]
    pub decoy_rate: f64,
}

fn default_effect() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub trading_days: usize,
    pub minutes_per_day: usize,
    /// Background (non-trigger) headlines per minute.
    pub news_rate: f64,
    /// Relative category frequencies in the fixed category order.
    pub category_weights: Vec<f64>,
    /// Relative frequencies of regions A, B, AB.
    pub region_weights: Vec<f64>,
    /// Fraction of background news tagged with unrelated countries.
    pub foreign_fraction: f64,
    /// Standard deviation of the per-minute log-return.
    pub volatility: f64,
    /// Log-drift added to every minute, on top of rule effects.
    pub base_drift: f64,
    pub start_price: f64,
    /// Minimum minutes between any two rule emissions (0 disables).
    pub min_rule_spacing: u32,
    pub rules: Vec<SignalRule>,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            seed: 0,
            trading_days: 20,
            minutes_per_day: 600,
            news_rate: 1.0,
            category_weights: vec![1.0; 9],
            region_weights: vec![1.0, 1.0, 1.0],
            foreign_fraction: 0.05,
            volatility: 2e-4,
            base_drift: 0.0,
            start_price: 1.2,
            min_rule_spacing: 0,
            rules: Vec::new(),
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.trading_days == 0 || self.minutes_per_day == 0 {
            return bad("trading_days and minutes_per_day must be positive".into());
        }
        if !self.base_drift.is_finite() {
            return bad("base_drift must be finite".into());
        }
        if !(self.news_rate >= 0.0) || !(self.volatility >= 0.0) || !(self.start_price > 0.0) {
            return bad("news_rate, volatility must be >= 0 and start_price > 0".into());
        }
        if self.category_weights.len() != 9 || self.category_weights.iter().any(|w| *w < 0.0) {
            return bad("category_weights needs 9 non-negative entries".into());
        }
        if self.category_weights.iter().sum::<f64>() <= 0.0 {
            return bad("category_weights must not all be zero".into());
        }
        if self.region_weights.len() != 3
            || self.region_weights.iter().any(|w| *w < 0.0)
            || self.region_weights.iter().sum::<f64>() <= 0.0
        {
            return bad("region_weights needs 3 non-negative entries, not all zero".into());
        }
        if !(0.0..1.0).contains(&self.foreign_fraction) {
            return bad("foreign_fraction must lie in [0, 1)".into());
        }
        let reserved = reserved_vocabulary();
        for (i, r) in self.rules.iter().enumerate() {
            if !(r.magnitude >= 0.0) {
                return bad(format!("rule {i}: magnitude must be >= 0"));
            }
            if !(r.rate >= 0.0 && r.rate <= 1.0) || !(r.decoy_rate >= 0.0 && r.decoy_rate <= 1.0) {
                return bad(format!("rule {i}: rates must lie in [0, 1]"));
            }
            if r.effect_minutes == 0 {
                return bad(format!("rule {i}: effect_minutes must be positive"));
            }
            if r.trigger_tokens.is_empty() {
                return bad(format!("rule {i}: no trigger tokens"));
            }
            for t in &r.trigger_tokens {
                if reserved.contains(t.as_str()) {
                    return bad(format!(
                        "rule {i}: trigger token `{t}` is a noise-vocabulary word"
                    ));
                }
                if t.is_empty() || t.chars().any(|c| !c.is_ascii_lowercase()) {
                    return bad(format!(
                        "rule {i}: trigger token `{t}` must be lowercase ascii"
                    ));
                }
            }
        }
        Ok(())
    }
}

/// One planted-rule emission.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalEvent {
    pub rule: usize,
    pub ts: Minute,
    pub news_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub pair: CurrencyPairSpec,
    pub records: Vec<NewsRecord>,
    /// `records` with regions resolved; foreign news dropped.
    pub news: Vec<NewsItem>,
    pub bars: Vec<TradeBar>,
    pub signals: Vec<SignalEvent>,
}

const FILLER: &[&str] = &[
    "says", "report", "update", "sources", "official", "week", "plans", "amid", "after", "new",
    "view", "data",
];

const REGION_A_WORDS: &[&str] = &["washington", "treasury", "american", "federal"];
const REGION_B_WORDS: &[&str] = &["brussels", "eurozone", "european", "frankfurt"];

fn category_words(c: Category) -> &'static [&'static str] {
    match c {
        Category::BusinessSectors => &[
            "retail", "autos", "airlines", "telecom", "pharma", "steel", "shipping", "insurers",
        ],
        Category::BusinessGeneral => &[
            "earnings", "profit", "merger", "ceo", "layoffs", "outlook", "shares", "deal",
        ],
        Category::BusinessAssets => &[
            "bonds", "yields", "stocks", "futures", "index", "equities", "notes", "spreads",
        ],
        Category::BusinessCommodities => &[
            "oil", "gold", "copper", "wheat", "crude", "opec", "metals", "gas",
        ],
        Category::BusinessOrganizations => &[
            "imf",
            "wto",
            "bank",
            "union",
            "regulator",
            "agency",
            "board",
            "council",
        ],
        Category::Politics => &[
            "election",
            "minister",
            "parliament",
            "senate",
            "vote",
            "summit",
            "sanctions",
            "diplomat",
        ],
        Category::ArtsCultureSports => &[
            "festival", "film", "league", "cup", "museum", "concert", "team", "award",
        ],
        Category::ScienceTechnology => &[
            "chip",
            "software",
            "satellite",
            "research",
            "ai",
            "startup",
            "patent",
            "cyber",
        ],
        Category::Other => &[
            "weather", "storm", "traffic", "holiday", "obituary", "lottery", "zoo", "fire",
        ],
    }
}

/// Every word the background headline generator can emit.
pub fn reserved_vocabulary() -> HashSet<&'static str> {
    let mut set: HashSet<&'static str> = FILLER.iter().copied().collect();
    set.extend(REGION_A_WORDS);
    set.extend(REGION_B_WORDS);
    for c in Category::ALL {
        set.extend(category_words(c));
    }
    set
}

struct Tags {
    a: Vec<String>,
    b: Vec<String>,
}

fn pick<'a, R: Rng, T>(rng: &mut R, xs: &'a [T]) -> &'a T {
    &xs[rng.gen_range(0..xs.len())]
}

fn weighted_index<R: Rng>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

fn region_tokens<R: Rng>(rng: &mut R, region: Region) -> Vec<String> {
    let mut out = Vec::new();
    if matches!(region, Region::A | Region::AB) {
        out.push(pick(rng, REGION_A_WORDS).to_string());
    }
    if matches!(region, Region::B | Region::AB) {
        out.push(pick(rng, REGION_B_WORDS).to_string());
    }
    out
}

fn countries<R: Rng>(rng: &mut R, tags: &Tags, region: Option<Region>) -> Vec<String> {
    match region {
        Some(Region::A) => vec![pick(rng, &tags.a).clone()],
        Some(Region::B) => vec![pick(rng, &tags.b).clone()],
        Some(Region::AB) => vec![pick(rng, &tags.a).clone(), pick(rng, &tags.b).clone()],
        None => vec![pick(rng, &["BR", "IN", "ZA", "MX"]).to_string()],
    }
}

fn background_headline<R: Rng>(rng: &mut R, category: Category, region: Option<Region>) -> String {
    let mut words: Vec<String> = region.map(|r| region_tokens(rng, r)).unwrap_or_default();
    let topical = rng.gen_range(2..=3);
    let vocab = category_words(category);
    for _ in 0..topical {
        words.push(pick(rng, vocab).to_string());
    }
    let filler = rng.gen_range(0..=1);
    for _ in 0..filler {
        words.push(pick(rng, FILLER).to_string());
    }
    words.shuffle(rng);
    words.join(" ")
}

fn trigger_headline<R: Rng>(rng: &mut R, rule: &SignalRule, region: Region) -> String {
    let mut head = region_tokens(rng, region);
    head.shuffle(rng);
    let mut words = head;
    words.extend(rule.trigger_tokens.iter().cloned());
    if rng.gen_bool(0.5) {
        words.push(pick(rng, FILLER).to_string());
    }
    words.join(" ")
}

/// Deterministic in `config`: identical configs give identical datasets.
pub fn generate_synthetic(
    config: &SyntheticConfig,
    pair: &CurrencyPairSpec,
) -> Result<SyntheticDataset> {
    config.validate()?;
    pair.validate()?;
    let tags = Tags {
        a: pair.region_a.iter().cloned().collect(),
        b: pair.region_b.iter().cloned().collect(),
    };
    if tags.a.is_empty() || tags.b.is_empty() {
        return Err(Error::Config("pair regions must be non-empty".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let base = Minute::parse("2021-01-04T08:00Z").expect("valid base");
    let total = config.trading_days * config.minutes_per_day;
    let mut drift = vec![0.0; total];
    let mut records = Vec::new();
    let mut signals = Vec::new();
    let mut next_id = 0usize;
    let mut last_emission: Option<usize> = None;
    let background = Poisson::new(config.news_rate.max(1e-12)).expect("positive rate");

    let minute_at = |k: usize| -> Minute {
        let day = (k / config.minutes_per_day) as i64;
        let m = (k % config.minutes_per_day) as i64;
        base.offset(day * 1440 + m)
    };

    for k in 0..total {
        let ts = minute_at(k);
        let count = if config.news_rate > 0.0 {
            background.sample(&mut rng) as usize
        } else {
            0
        };
        for _ in 0..count {
            let category = Category::ALL[weighted_index(&mut rng, &config.category_weights)];
            let region = if rng.gen::<f64>() < config.foreign_fraction {
                None
            } else {
                Some(Region::ALL[weighted_index(&mut rng, &config.region_weights)])
            };
            records.push(NewsRecord {
                id: format!("n{next_id:07}"),
                ts: ts.to_string(),
                headline: background_headline(&mut rng, category, region),
                category: category.as_str().to_string(),
                countries: countries(&mut rng, &tags, region),
                body: None,
            });
            next_id += 1;
        }

        for (ri, rule) in config.rules.iter().enumerate() {
            let spaced = match last_emission {
                Some(prev) => k - prev >= config.min_rule_spacing as usize,
                None => true,
            };
            // Draw unconditionally so spacing does not shift the random stream.
            let fire = rng.gen::<f64>() < rule.rate;
            if fire && spaced {
                let id = format!("n{next_id:07}");
                next_id += 1;
                records.push(NewsRecord {
                    id: id.clone(),
                    ts: ts.to_string(),
                    headline: trigger_headline(&mut rng, rule, rule.region),
                    category: rule.category.as_str().to_string(),
                    countries: countries(&mut rng, &tags, Some(rule.region)),
                    body: None,
                });
                signals.push(SignalEvent {
                    rule: ri,
                    ts,
                    news_id: id,
                });
                last_emission = Some(k);
                let start = k + rule.delay_minutes as usize;
                let end = (start + rule.effect_minutes as usize).min(total);
                for d in drift.iter_mut().take(end).skip(start) {
                    *d += rule.direction.sign() * rule.magnitude;
                }
            }
            if rng.gen::<f64>() < rule.decoy_rate {
                let (category, region) = if rng.gen_bool(0.5) {
                    let others: Vec<Category> = Category::ALL
                        .iter()
                        .copied()
                        .filter(|c| *c != rule.category)
                        .collect();
                    (*pick(&mut rng, &others), rule.region)
                } else {
                    let others: Vec<Region> = Region::ALL
                        .iter()
                        .copied()
                        .filter(|r| *r != rule.region)
                        .collect();
                    (rule.category, *pick(&mut rng, &others))
                };
                records.push(NewsRecord {
                    id: format!("n{next_id:07}"),
                    ts: ts.to_string(),
                    headline: trigger_headline(&mut rng, rule, region),
                    category: category.as_str().to_string(),
                    countries: countries(&mut rng, &tags, Some(region)),
                    body: None,
                });
                next_id += 1;
            }
        }
    }

    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut bars = Vec::with_capacity(total);
    let mut price = config.start_price;
    for (k, d) in drift.iter().enumerate() {
        let open = price;
        let z: f64 = normal.sample(&mut rng);
        let close = open * (config.volatility * z + config.base_drift + d).exp();
        let wick_hi: f64 = normal.sample(&mut rng);
        let wick_lo: f64 = normal.sample(&mut rng);
        let high = open.max(close) * (0.5 * config.volatility * wick_hi.abs()).exp();
        let low = open.min(close) * (-0.5 * config.volatility * wick_lo.abs()).exp();
        bars.push(TradeBar {
            timestamp: minute_at(k),
            open,
            high,
            low,
            close,
        });
        price = close;
    }

    let news = records
        .iter()
        .filter_map(|r| {
            let region = pair.resolve(&r.countries)?;
            Some(NewsItem {
                id: r.id.clone(),
                timestamp: Minute::parse(&r.ts).expect("generated timestamp"),
                headline: r.headline.clone(),
                category: r.category.parse().expect("generated category"),
                region,
            })
        })
        .collect();

    Ok(SyntheticDataset {
        pair: pair.clone(),
        records,
        news,
        bars,
        signals,
    })
}
