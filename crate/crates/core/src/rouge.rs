//! Tokenization, longest common subsequence and Rouge-L scoring, plus a
//! parallel engine that scores every train × eval pair above a threshold.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{LabeledDataset, LabeledUtterance};

/// Inputs longer than this are truncated before scoring.
pub const MAX_TOKENS: usize = 512;

#[derive(Debug, Error, PartialEq)]
pub enum RougeError {
    #[error("rouge-l is undefined for two empty token sequences")]
    BothEmpty,
    #[error("threshold must lie in (0, 1], got {0}")]
    Threshold(f64),
}

/// Lowercased word tokens.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S: Into<String>> FromIterator<S> for TokenSeq {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        TokenSeq(iter.into_iter().map(Into::into).collect())
    }
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

/// Splits `text` into lowercase tokens: maximal runs of alphanumeric
/// characters, where an apostrophe flanked by alphanumerics stays inside the
/// token (`don't`). Everything else separates tokens.
pub fn tokenize(text: &str) -> TokenSeq {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut current = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            current.extend(c.to_lowercase());
        } else if is_apostrophe(c) && !current.is_empty() && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric()) {
            current.push(c);
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    if tokens.len() > MAX_TOKENS {
        log::warn!(
            "truncating a {}-token input to {MAX_TOKENS} tokens: {:.40}...",
            tokens.len(),
            text
        );
        tokens.truncate(MAX_TOKENS);
    }
    TokenSeq(tokens)
}

/// LCS length by dynamic programming over a single rolling row.
pub fn lcs_length<T: Eq>(a: &[T], b: &[T]) -> usize {
    let (outer, inner) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    if inner.is_empty() {
        return 0;
    }
    let mut row = vec![0usize; inner.len() + 1];
    for x in outer {
        let mut diag = 0;
        for (j, y) in inner.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[inner.len()]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RougeVariant {
    /// LCS divided by the longer sequence length.
    #[default]
    LcsOverMax,
    /// Harmonic mean of LCS precision and recall.
    LcsF1,
}

impl RougeVariant {
    pub fn score(self, lcs: usize, len_a: usize, len_b: usize) -> f64 {
        match self {
            RougeVariant::LcsOverMax => lcs as f64 / len_a.max(len_b) as f64,
            // 2PR/(P+R) with P = lcs/|a|, R = lcs/|b| reduces to 2·lcs/(|a|+|b|).
            RougeVariant::LcsF1 => (2 * lcs) as f64 / (len_a + len_b) as f64,
        }
    }
}

impl fmt::Display for RougeVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RougeVariant::LcsOverMax => "lcs-over-max",
            RougeVariant::LcsF1 => "lcs-f1",
        })
    }
}

impl FromStr for RougeVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lcs-over-max" | "lcs_over_max" => Ok(RougeVariant::LcsOverMax),
            "lcs-f1" | "lcs_f1" => Ok(RougeVariant::LcsF1),
            other => Err(format!("unknown rouge variant {other:?}")),
        }
    }
}

/// Scores are compared to `threshold` inclusively.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeConfig {
    pub variant: RougeVariant,
    pub threshold: f64,
}

impl Default for RougeConfig {
    fn default() -> Self {
        RougeConfig {
            variant: RougeVariant::LcsOverMax,
            threshold: 0.3,
        }
    }
}

impl RougeConfig {
    pub fn new(variant: RougeVariant, threshold: f64) -> Result<Self, RougeError> {
        let cfg = RougeConfig { variant, threshold };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), RougeError> {
        if self.threshold > 0.0 && self.threshold <= 1.0 {
            Ok(())
        } else {
            Err(RougeError::Threshold(self.threshold))
        }
    }

    pub fn passes(&self, score: f64) -> bool {
        score >= self.threshold
    }
}

pub fn rouge_l(a: &TokenSeq, b: &TokenSeq, variant: RougeVariant) -> Result<f64, RougeError> {
    rouge_l_slices(a.tokens(), b.tokens(), variant)
}

fn rouge_l_slices<T: Eq>(a: &[T], b: &[T], variant: RougeVariant) -> Result<f64, RougeError> {
    if a.is_empty() && b.is_empty() {
        return Err(RougeError::BothEmpty);
    }
    Ok(variant.score(lcs_length(a, b), a.len(), b.len()))
}

/// Convenience wrapper tokenizing both texts.
pub fn rouge_l_text(a: &str, b: &str, variant: RougeVariant) -> Result<f64, RougeError> {
    rouge_l(&tokenize(a), &tokenize(b), variant)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub train_id: String,
    pub eval_id: String,
    pub score: f64,
}

/// Token sequences mapped onto a shared integer vocabulary.
struct Interned {
    ids: Vec<String>,
    seqs: Vec<Vec<u32>>,
}

fn intern<'a>(texts: impl Iterator<Item = &'a LabeledUtterance>, vocab: &mut HashMap<String, u32>) -> Interned {
    let mut ids = Vec::new();
    let mut seqs = Vec::new();
    for u in texts {
        let seq = tokenize(&u.text)
            .0
            .into_iter()
            .map(|tok| {
                let next = vocab.len() as u32;
                *vocab.entry(tok).or_insert(next)
            })
            .collect();
        ids.push(u.id.clone());
        seqs.push(seq);
    }
    Interned { ids, seqs }
}

/// Scores every `train × eval_pool` pair and keeps those at or above the
/// threshold, sorted by train id then eval id. Pairs where either side has no
/// tokens score 0 and are never kept.
pub fn pairwise_scores(train: &LabeledDataset, eval_pool: &[LabeledUtterance], cfg: &RougeConfig) -> Vec<PairScore> {
    pairwise_scores_utterances(train.utterances(), eval_pool, cfg)
}

pub fn pairwise_scores_utterances(
    train: &[LabeledUtterance],
    eval_pool: &[LabeledUtterance],
    cfg: &RougeConfig,
) -> Vec<PairScore> {
    let mut vocab = HashMap::new();
    let left = intern(train.iter(), &mut vocab);
    let right = intern(eval_pool.iter(), &mut vocab);

    let mut pairs: Vec<PairScore> = (0..left.seqs.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let a = &left.seqs[i];
            let right = &right;
            let left = &left;
            right.seqs.iter().enumerate().filter_map(move |(j, b)| {
                if a.is_empty() || b.is_empty() {
                    return None;
                }
                // LCS cannot exceed the shorter length; skip pairs that cannot pass.
                let best = cfg.variant.score(a.len().min(b.len()), a.len(), b.len());
                if !cfg.passes(best) {
                    return None;
                }
                let score = cfg.variant.score(lcs_length(a, b), a.len(), b.len());
                cfg.passes(score).then(|| PairScore {
                    train_id: left.ids[i].clone(),
                    eval_id: right.ids[j].clone(),
                    score,
                })
            })
        })
        .collect();
    pairs.sort_by(|x, y| (&x.train_id, &x.eval_id).cmp(&(&y.train_id, &y.eval_id)));
    pairs
}

/// TSV debug dump: `train_id<TAB>eval_id<TAB>score` with 4 decimals.
pub fn pairs_to_tsv(pairs: &[PairScore]) -> String {
    let mut out = String::from("train_id\teval_id\tscore\n");
    for p in pairs {
        out.push_str(&format!("{}\t{}\t{:.4}\n", p.train_id, p.eval_id, p.score));
    }
    out
}
