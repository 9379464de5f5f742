#![allow(dead_code)]

pub mod exhaustive;

use forexsum::corpus::{Category, Minute, NewsItem, Region};
use forexsum::encoder::{EncoderConfig, EncoderKind, Vocab};
use forexsum::extraction::TopK;
use forexsum::features::Sample;
use forexsum::grouping::{APConfig, GroupingMethod};
use forexsum::model::{ModelSpec, Variant};
use forexsum::params::ParamStore;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const WORDS: [&str; 10] = [
    "rate", "hike", "cut", "oil", "jobs", "euro", "bank", "growth", "deal", "vote",
];

pub fn news(
    id: usize,
    minute: i64,
    headline: &str,
    category: Category,
    region: Region,
) -> NewsItem {
    NewsItem {
        id: format!("n{id}"),
        timestamp: Minute(1_000 + minute),
        headline: headline.to_string(),
        category,
        region,
    }
}

pub fn vocab() -> Vocab {
    let lines: Vec<String> = WORDS.iter().map(|w| format!("{w} {w}")).collect();
    Vocab::build(&lines, 1)
}

pub fn spec(variant: Variant, hidden: usize, layers: usize, feature_dim: usize) -> ModelSpec {
    ModelSpec {
        encoder: EncoderConfig {
            kind: EncoderKind::Transformer,
            layers,
            hidden,
            heads: 2,
            ffn: 2 * hidden,
            max_len: 64,
            min_freq: 1,
        },
        variant,
        grouping: GroupingMethod::Category,
        k: TopK::Top(2),
        time_unit: 5,
        ap: APConfig::default(),
        feature_dim,
        vocab_size: vocab().len(),
    }
}

/// Random sample whose news fall into `groups` categories with `per_group` items each.
pub fn random_sample(
    rng: &mut ChaCha8Rng,
    groups: usize,
    per_group: usize,
    feature_dim: usize,
) -> Sample {
    let regions = [Region::A, Region::B, Region::AB];
    let mut items = Vec::new();
    for g in 0..groups {
        for j in 0..per_group {
            let len = rng.gen_range(1..4);
            let headline: Vec<&str> = (0..len)
                .map(|_| WORDS[rng.gen_range(0..WORDS.len())])
                .collect();
            let id = items.len();
            items.push(news(
                id,
                (j * groups + g) as i64,
                &headline.join(" "),
                Category::ALL[g],
                regions[rng.gen_range(0..3)],
            ));
        }
    }
    items.sort_by_key(|n| n.timestamp);
    Sample {
        window_start: Minute(1_000),
        window_end: Minute(1_000 + (groups * per_group) as i64),
        news: items,
        trade_features: (0..feature_dim).map(|_| rng.gen_range(0.0..1.0)).collect(),
        label: rng.gen_range(0..2),
        pair: "USD-EUR".into(),
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Moves every parameter to a random point with O(1) activations, away from
/// the near-zero regime of the default initialization.
pub fn randomize(store: &mut ParamStore, seed: u64, std: f64) {
    let mut r = rng(seed);
    let normal = Normal::new(0.0, std).unwrap();
    for t in store.tensors_mut() {
        for v in &mut t.data {
            *v += normal.sample(&mut r);
        }
    }
}
