use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::text::normalize_tokens;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const CLS: usize = 2;
pub const SEP: usize = 3;
const SPECIALS: [&str; 4] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"];
const HEADER: &str = "# forexsum-vocab v1";

/// Word-level vocabulary with reserved special ids 0..4.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    freqs: Vec<usize>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Keeps words seen at least `min_freq` times, most frequent first.
    pub fn build<S: AsRef<str>>(headlines: &[S], min_freq: usize) -> Self {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for h in headlines {
            for t in normalize_tokens(h.as_ref()) {
                *counts.entry(t).or_default() += 1;
            }
        }
        let mut words: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(_, c)| *c >= min_freq.max(1))
            .collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        let mut freqs = vec![0; SPECIALS.len()];
        for (w, c) in words {
            tokens.push(w);
            freqs.push(c);
        }
        Self::from_parts(tokens, freqs)
    }

    fn from_parts(tokens: Vec<String>, freqs: Vec<usize>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocab {
            tokens,
            freqs,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= SPECIALS.len()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    /// Never empty: a headline with no words maps to a single `[UNK]`.
    pub fn tokenize(&self, headline: &str) -> Vec<usize> {
        let ids: Vec<usize> = normalize_tokens(headline)
            .iter()
            .map(|t| self.id(t))
            .collect();
        if ids.is_empty() {
            vec![UNK]
        } else {
            ids
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = format!("{HEADER}\n");
        for (i, (t, f)) in self.tokens.iter().zip(&self.freqs).enumerate() {
            text.push_str(&format!("{t}\t{i}\t{f}\n"));
        }
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bad = |line: usize, message: String| Error::MalformedRecord {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lines = text.lines();
        if lines.next() != Some(HEADER) {
            return Err(bad(1, format!("expected header {HEADER:?}")));
        }
        let mut tokens = Vec::new();
        let mut freqs = Vec::new();
        for (i, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split('\t').collect();
            let [t, id, f] = fields[..] else {
                return Err(bad(i + 2, "expected token<TAB>id<TAB>frequency".into()));
            };
            if id.parse::<usize>().ok() != Some(i) {
                return Err(bad(i + 2, format!("ids must be dense, expected {i}")));
            }
            tokens.push(t.to_string());
            freqs.push(f.parse().map_err(|_| bad(i + 2, "bad frequency".into()))?);
        }
        if tokens.len() < SPECIALS.len() || tokens[..SPECIALS.len()] != SPECIALS {
            return Err(bad(2, "special tokens missing".into()));
        }
        Ok(Self::from_parts(tokens, freqs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_maps_unknowns() {
        let v = Vocab::build(&["rate hike", "Rate hike!", "oil"], 2);
        assert_eq!(v.len(), 6);
        assert_eq!(v.tokenize("Rate hike!"), vec![v.id("rate"), v.id("hike")]);
        assert_eq!(v.tokenize("oil"), vec![UNK]);
        assert_eq!(v.tokenize("?!"), vec![UNK]);
        assert_eq!(v.token(CLS), "[CLS]");
    }

    #[test]
    fn file_round_trip() {
        let v = Vocab::build(&["a b", "a b c", "c"], 1);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("vocab.tsv");
        v.save(&p).unwrap();
        assert_eq!(Vocab::load(&p).unwrap(), v);
    }
}
