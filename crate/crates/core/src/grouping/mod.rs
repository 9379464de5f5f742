//! Partitioning a window's news into groups by time bucket, topic or category.

pub mod ap;
pub mod tfidf;

pub use ap::{affinity_propagation, APConfig, Clustering, Preference};
pub use tfidf::{cosine, SparseVec, TfidfVocab};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Category, Minute, NewsItem};
use crate::error::Result;
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupingMethod {
    Time,
    Topic,
    Category,
}

impl std::str::FromStr for GroupingMethod {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "time" => Ok(GroupingMethod::Time),
            "topic" => Ok(GroupingMethod::Topic),
            "category" => Ok(GroupingMethod::Category),
            other => Err(format!("unknown grouping method {other:?}")),
        }
    }
}

impl GroupingMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            GroupingMethod::Time => "time",
            GroupingMethod::Topic => "topic",
            GroupingMethod::Category => "category",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroupSubject {
    TimeBucket { index: usize },
    Topic { exemplar: String },
    Category { category: Category },
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewsGroup {
    pub subject: GroupSubject,
    /// Chronological, never empty.
    pub news: Vec<NewsItem>,
}

impl NewsGroup {
    pub fn len(&self) -> usize {
        self.news.len()
    }

    pub fn is_empty(&self) -> bool {
        self.news.is_empty()
    }
}

fn chronological(mut news: Vec<NewsItem>) -> Vec<NewsItem> {
    news.sort_by_key(|n| n.timestamp);
    news
}

pub fn group_by_time(news: &[NewsItem], window_start: Minute, unit_minutes: i64) -> Vec<NewsGroup> {
    let unit = unit_minutes.max(1);
    let mut buckets: BTreeMap<i64, Vec<NewsItem>> = BTreeMap::new();
    for n in news {
        let b = (n.timestamp.0 - window_start.0).div_euclid(unit);
        buckets.entry(b).or_default().push(n.clone());
    }
    buckets
        .into_iter()
        .map(|(b, items)| NewsGroup {
            subject: GroupSubject::TimeBucket {
                index: b.max(0) as usize,
            },
            news: chronological(items),
        })
        .collect()
}

pub fn group_by_category(news: &[NewsItem]) -> Vec<NewsGroup> {
    let mut by_cat: BTreeMap<usize, Vec<NewsItem>> = BTreeMap::new();
    for n in news {
        by_cat
            .entry(n.category.index())
            .or_default()
            .push(n.clone());
    }
    by_cat
        .into_iter()
        .map(|(i, items)| NewsGroup {
            subject: GroupSubject::Category {
                category: Category::ALL[i],
            },
            news: chronological(items),
        })
        .collect()
}

pub fn cosine_matrix(vectors: &[SparseVec]) -> Matrix {
    let n = vectors.len();
    let mut s = Matrix::zeros(n, n);
    for i in 0..n {
        for k in i..n {
            let c = cosine(&vectors[i], &vectors[k]);
            s.set(i, k, c);
            s.set(k, i, c);
        }
    }
    s
}

pub fn group_by_topic(
    news: &[NewsItem],
    vocab: &TfidfVocab,
    config: &APConfig,
) -> Result<Vec<NewsGroup>> {
    if news.is_empty() {
        return Ok(Vec::new());
    }
    let vectors = news
        .iter()
        .map(|n| vocab.vectorize(&n.headline))
        .collect::<Result<Vec<_>>>()?;
    let clustering = affinity_propagation(&cosine_matrix(&vectors), config)?;
    let mut groups: Vec<NewsGroup> = clustering
        .exemplars
        .iter()
        .enumerate()
        .map(|(ci, &e)| NewsGroup {
            subject: GroupSubject::Topic {
                exemplar: news[e].id.clone(),
            },
            news: chronological(
                news.iter()
                    .zip(&clustering.labels)
                    .filter(|(_, &l)| l == ci)
                    .map(|(n, _)| n.clone())
                    .collect(),
            ),
        })
        .collect();
    groups.sort_by_key(|g| g.news[0].timestamp);
    Ok(groups)
}

/// All news in one group.
pub fn single_group(news: &[NewsItem]) -> Vec<NewsGroup> {
    if news.is_empty() {
        return Vec::new();
    }
    vec![NewsGroup {
        subject: GroupSubject::All,
        news: chronological(news.to_vec()),
    }]
}

/// Groups a window's news with the requested method.
pub fn group_news(
    news: &[NewsItem],
    method: GroupingMethod,
    window_start: Minute,
    time_unit: i64,
    vocab: Option<&TfidfVocab>,
    ap: &APConfig,
) -> Result<Vec<NewsGroup>> {
    match method {
        GroupingMethod::Time => Ok(group_by_time(news, window_start, time_unit)),
        GroupingMethod::Category => Ok(group_by_category(news)),
        GroupingMethod::Topic => {
            let vocab = vocab.ok_or(crate::error::Error::EmptyVocab)?;
            group_by_topic(news, vocab, ap)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Region;

    fn item(id: &str, minute: i64, category: Category, headline: &str) -> NewsItem {
        NewsItem {
            id: id.into(),
            timestamp: Minute(1000 + minute),
            headline: headline.into(),
            category,
            region: Region::A,
        }
    }

    #[test]
    fn time_buckets() {
        let news = vec![
            item("a", 0, Category::Politics, "x"),
            item("b", 3, Category::Politics, "x"),
            item("c", 7, Category::Politics, "x"),
        ];
        let g = group_by_time(&news, Minute(1000), 5);
        assert_eq!(g.len(), 2);
        assert_eq!(g[0].len(), 2);
        assert_eq!(g[1].news[0].id, "c");
        assert_eq!(g[1].subject, GroupSubject::TimeBucket { index: 1 });
        assert!(group_by_time(&[], Minute(0), 5).is_empty());
    }

    #[test]
    fn categories_in_fixed_order() {
        let news = vec![
            item("s1", 1, Category::ScienceTechnology, "x"),
            item("p1", 2, Category::Politics, "x"),
            item("p2", 3, Category::Politics, "x"),
            item("s2", 4, Category::ScienceTechnology, "x"),
            item("p3", 5, Category::Politics, "x"),
        ];
        let g = group_by_category(&news);
        let sizes: Vec<usize> = g.iter().map(NewsGroup::len).collect();
        assert_eq!(sizes, vec![3, 2]);
        assert_eq!(
            g[0].subject,
            GroupSubject::Category {
                category: Category::Politics
            }
        );
    }

    #[test]
    fn identical_headlines_form_one_topic() {
        let news: Vec<NewsItem> = (0..4)
            .map(|i| {
                item(
                    &format!("n{i}"),
                    i,
                    Category::Other,
                    "fed signals rate hike",
                )
            })
            .collect();
        let vocab = TfidfVocab::fit(&["fed signals rate hike", "oil falls sharply"]).unwrap();
        let g = group_by_topic(&news, &vocab, &APConfig::default()).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].len(), 4);
    }

    #[test]
    fn single_item_topic() {
        let news = vec![item("a", 0, Category::Other, "oil falls")];
        let vocab = TfidfVocab::fit(&["oil falls"]).unwrap();
        let g = group_by_topic(&news, &vocab, &APConfig::default()).unwrap();
        assert_eq!(g.len(), 1);
    }
}
