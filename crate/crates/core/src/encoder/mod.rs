//! Group encoders producing one vector per headline.
//!
//! A group is laid out as `[CLS] tokens [SEP]` per headline, oldest first,
//! with segment ids alternating A/B per headline. The transformer reads the
//! whole sequence and returns the hidden state at each `[CLS]`; the recurrent
//! variant runs a bidirectional LSTM and pools each headline's span with
//! self-attention.

mod lstm;
mod transformer;
pub mod vocab;

pub use lstm::LstmParams;
pub use transformer::TransformerParams;
pub use vocab::{Vocab, CLS, PAD, SEP, UNK};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::grouping::NewsGroup;
use crate::nn::Dropout;
use crate::params::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    Transformer,
    Lstm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub ffn: usize,
    pub max_len: usize,
    pub min_freq: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            kind: EncoderKind::Transformer,
            layers: 2,
            hidden: 64,
            heads: 4,
            ffn: 256,
            max_len: 256,
            min_freq: 2,
        }
    }
}

impl EncoderConfig {
    /// Full-size layout: 12 layers, 768 hidden, 12 heads.
    pub fn large() -> Self {
        EncoderConfig {
            layers: 12,
            hidden: 768,
            heads: 12,
            ffn: 3072,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.hidden == 0 || self.layers == 0 {
            return fail("encoder.hidden and encoder.layers must be positive".into());
        }
        if self.heads == 0 || !self.hidden.is_multiple_of(self.heads) {
            return fail(format!(
                "encoder.hidden {} not divisible by heads {}",
                self.hidden, self.heads
            ));
        }
        if self.kind == EncoderKind::Lstm && !self.hidden.is_multiple_of(2) {
            return fail("lstm encoder needs an even hidden size".into());
        }
        if self.max_len < 3 {
            return fail("encoder.max_len must be at least 3".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Segment {
    A,
    B,
}

impl Segment {
    pub fn of_unit(j: usize) -> Self {
        if j.is_multiple_of(2) {
            Segment::A
        } else {
            Segment::B
        }
    }

    pub fn id(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEncoding {
    pub token_ids: Vec<usize>,
    pub segments: Vec<Segment>,
    pub positions: Vec<usize>,
    pub cls_positions: Vec<usize>,
    /// `[start, end)` of each surviving unit, `[CLS]` and `[SEP]` included.
    pub spans: Vec<(usize, usize)>,
    /// Index into the group of each surviving headline, chronological.
    pub survivors: Vec<usize>,
}

impl GroupEncoding {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    pub fn n_units(&self) -> usize {
        self.cls_positions.len()
    }
}

/// Lays out tokenized headlines (chronological), keeping whole units from
/// the most recent backwards while they fit in `max_len`. A most recent
/// headline too long on its own is cut to fit as the only unit.
pub fn assemble_units(units: &[Vec<usize>], max_len: usize) -> Result<GroupEncoding> {
    if units.is_empty() {
        return Err(Error::InvalidInput("cannot encode an empty group".into()));
    }
    if max_len < 3 {
        return Err(Error::Config("max_len must be at least 3".into()));
    }
    let mut survivors = Vec::new();
    let mut total = 0;
    for j in (0..units.len()).rev() {
        let need = units[j].len() + 2;
        if total + need > max_len {
            break;
        }
        total += need;
        survivors.push(j);
    }
    let truncated;
    let token_lists: Vec<&[usize]> = if survivors.is_empty() {
        let last = units.len() - 1;
        survivors.push(last);
        truncated = units[last][..max_len - 2].to_vec();
        vec![&truncated]
    } else {
        survivors.reverse();
        survivors.iter().map(|&j| units[j].as_slice()).collect()
    };

    let mut enc = GroupEncoding {
        token_ids: Vec::new(),
        segments: Vec::new(),
        positions: Vec::new(),
        cls_positions: Vec::new(),
        spans: Vec::new(),
        survivors,
    };
    for (j, toks) in token_lists.iter().enumerate() {
        let start = enc.token_ids.len();
        enc.cls_positions.push(start);
        enc.token_ids.push(CLS);
        enc.token_ids.extend_from_slice(toks);
        enc.token_ids.push(SEP);
        let end = enc.token_ids.len();
        enc.spans.push((start, end));
        enc.segments
            .extend(std::iter::repeat_n(Segment::of_unit(j), end - start));
    }
    enc.positions = (0..enc.token_ids.len()).collect();
    Ok(enc)
}

pub fn assemble_group_input(
    group: &NewsGroup,
    vocab: &Vocab,
    config: &EncoderConfig,
) -> Result<GroupEncoding> {
    let units: Vec<Vec<usize>> = group
        .news
        .iter()
        .map(|n| vocab.tokenize(&n.headline))
        .collect();
    assemble_units(&units, config.max_len)
}

/// One single-unit encoding per headline, for encoding headlines in isolation.
pub fn assemble_independent(units: &[Vec<usize>], max_len: usize) -> Result<Vec<GroupEncoding>> {
    units
        .iter()
        .map(|u| assemble_units(std::slice::from_ref(u), max_len))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum EncoderParams {
    Transformer(TransformerParams),
    Lstm(LstmParams),
}

impl EncoderParams {
    pub fn init(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        config: &EncoderConfig,
        vocab_size: usize,
    ) -> Result<Self> {
        config.validate()?;
        Ok(match config.kind {
            EncoderKind::Transformer => {
                EncoderParams::Transformer(TransformerParams::init(store, rng, config, vocab_size))
            }
            EncoderKind::Lstm => {
                EncoderParams::Lstm(LstmParams::init(store, rng, config, vocab_size))
            }
        })
    }

    /// One row per surviving unit of `enc`.
    pub fn encode(&self, tape: &mut Tape, enc: &GroupEncoding, dropout: &mut Dropout) -> Var {
        match self {
            EncoderParams::Transformer(p) => p.encode(tape, enc, dropout),
            EncoderParams::Lstm(p) => p.encode(tape, enc, dropout),
        }
    }

    /// Encodes each single-unit encoding on its own and stacks the rows.
    pub fn encode_independent(
        &self,
        tape: &mut Tape,
        encs: &[GroupEncoding],
        dropout: &mut Dropout,
    ) -> Var {
        let rows: Vec<Var> = encs.iter().map(|e| self.encode(tape, e, dropout)).collect();
        tape.concat_rows(&rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_unit_layout() {
        let enc = assemble_units(&[vec![10, 11, 12], vec![13, 14]], 256).unwrap();
        assert_eq!(enc.token_ids, vec![CLS, 10, 11, 12, SEP, CLS, 13, 14, SEP]);
        use Segment::*;
        assert_eq!(enc.segments, vec![A, A, A, A, A, B, B, B, B]);
        assert_eq!(enc.cls_positions, vec![0, 5]);
        assert_eq!(enc.survivors, vec![0, 1]);
        assert_eq!(enc.spans, vec![(0, 5), (5, 9)]);
    }

    #[test]
    fn keeps_most_recent_units() {
        let units = vec![vec![7; 100]; 3];
        let enc = assemble_units(&units, 256).unwrap();
        assert_eq!(enc.survivors, vec![1, 2]);
        assert_eq!(enc.len(), 204);
        assert_eq!(enc.segments[0], Segment::A);
        assert_eq!(enc.segments[203], Segment::B);
    }

    #[test]
    fn overlong_single_unit_is_cut() {
        let enc = assemble_units(&[vec![1, 2], vec![9; 20]], 10).unwrap();
        assert_eq!(enc.survivors, vec![1]);
        assert_eq!(enc.len(), 10);
        assert_eq!(enc.token_ids[9], SEP);
    }

    #[test]
    fn config_validation() {
        assert!(EncoderConfig::default().validate().is_ok());
        assert!(EncoderConfig::large().validate().is_ok());
        let bad = EncoderConfig {
            heads: 3,
            ..EncoderConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
