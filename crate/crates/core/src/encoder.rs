//! Hashed character n-gram featurization and the two-tower linear encoder.

use std::collections::BTreeMap;
use std::hash::Hasher;
use std::sync::atomic::{AtomicUsize, Ordering};

use fnv::FnvHasher;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Mention;
use crate::error::{Error, Result};
use crate::kb::{Event, ENGLISH};

pub const DEFAULT_FEATURES: usize = 1 << 18;
pub const DEFAULT_DIM: usize = 32;
pub const DEFAULT_MAX_CONTEXT_CHARS: usize = 128;
pub const DEFAULT_MAX_CAND_CHARS: usize = 128;
pub const MIN_NGRAM: usize = 3;
pub const MAX_NGRAM: usize = 5;

/// Reserved characters wrapped around the mention span.
pub const SPAN_OPEN: char = '\u{2}';
pub const SPAN_CLOSE: char = '\u{3}';

static EMPTY_WINDOWS: AtomicUsize = AtomicUsize::new(0);

/// Number of mentions featurized from an empty window since process start.
pub fn empty_window_warnings() -> usize {
    EMPTY_WINDOWS.load(Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LanguageMode {
    /// Event text in the mention's language, English as fallback.
    Multilingual,
    /// Event text always in English.
    Crosslingual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeaturizerConfig {
    pub features: usize,
    pub max_context_chars: usize,
    pub max_cand_chars: usize,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        FeaturizerConfig {
            features: DEFAULT_FEATURES,
            max_context_chars: DEFAULT_MAX_CONTEXT_CHARS,
            max_cand_chars: DEFAULT_MAX_CAND_CHARS,
        }
    }
}

/// Sparse non-negative vector with indices sorted ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    dim: usize,
    entries: Vec<(u32, f64)>,
}

impl FeatureVector {
    pub fn zero(dim: usize) -> Self {
        FeatureVector {
            dim,
            entries: Vec::new(),
        }
    }

    /// Builds an L2-normalized vector from raw counts. Zero entries are dropped.
    pub fn normalized(dim: usize, counts: BTreeMap<u32, f64>) -> Self {
        let norm = counts.values().map(|v| v * v).sum::<f64>().sqrt();
        let entries = if norm > 0.0 {
            counts
                .into_iter()
                .filter(|(_, v)| *v != 0.0)
                .map(|(i, v)| (i, v / norm))
                .collect()
        } else {
            Vec::new()
        };
        FeatureVector { dim, entries }
    }

    /// Wraps raw entries without normalizing. Indices must be unique.
    pub fn from_entries(dim: usize, mut entries: Vec<(u32, f64)>) -> Result<Self> {
        entries.sort_by_key(|(i, _)| *i);
        for pair in entries.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(Error::InvalidConfig(format!("duplicate feature index {}", pair[0].0)));
            }
        }
        if let Some((i, _)) = entries.last() {
            if *i as usize >= dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: *i as usize + 1,
                });
            }
        }
        Ok(FeatureVector { dim, entries })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index: u32) -> f64 {
        self.entries
            .binary_search_by_key(&index, |(i, _)| *i)
            .map(|pos| self.entries[pos].1)
            .unwrap_or(0.0)
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(i, v) in &self.entries {
            out[i as usize] = v;
        }
        out
    }

    /// `alpha * self + beta * other`.
    pub fn combine(&self, alpha: f64, other: &FeatureVector, beta: f64) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: other.dim,
            });
        }
        let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
        for &(i, v) in &self.entries {
            *acc.entry(i).or_default() += alpha * v;
        }
        for &(i, v) in &other.entries {
            *acc.entry(i).or_default() += beta * v;
        }
        Ok(FeatureVector {
            dim: self.dim,
            entries: acc.into_iter().filter(|(_, v)| *v != 0.0).collect(),
        })
    }
}

/// 64-bit FNV-1a of the UTF-8 bytes, reduced mod `dim`.
pub fn hash_feature(ngram: &str, dim: usize) -> u32 {
    let mut h = FnvHasher::default();
    h.write(ngram.as_bytes());
    (h.finish() % dim as u64) as u32
}

/// Counts of every character n-gram with `MIN_NGRAM <= n <= MAX_NGRAM`.
pub fn char_ngrams(text: &str) -> BTreeMap<String, usize> {
    let chars: Vec<char> = text.chars().collect();
    let mut counts = BTreeMap::new();
    for n in MIN_NGRAM..=MAX_NGRAM {
        for window in chars.windows(n) {
            *counts.entry(window.iter().collect::<String>()).or_insert(0) += 1;
        }
    }
    counts
}

pub fn hash_counts<'a>(
    ngrams: impl IntoIterator<Item = (&'a String, &'a usize)>,
    dim: usize,
) -> BTreeMap<u32, f64> {
    let mut out = BTreeMap::new();
    for (gram, count) in ngrams {
        *out.entry(hash_feature(gram, dim)).or_insert(0.0) += *count as f64;
    }
    out
}

pub fn featurize_text(text: &str, dim: usize) -> FeatureVector {
    let lowered = text.to_lowercase();
    FeatureVector::normalized(dim, hash_counts(&char_ngrams(&lowered), dim))
}

/// Context window of at most `max_chars` characters around the span.
///
/// Returns `(left, span, right)`. The span is always kept (truncated to
/// `max_chars` when longer); the remaining budget is split evenly between
/// the two sides, and a side that runs out of context hands its share to
/// the other.
pub fn mention_window(mention: &Mention, max_chars: usize) -> (String, String, String) {
    let chars: Vec<char> = mention.context.chars().collect();
    let start = mention.span_start.min(chars.len());
    let end = mention.span_end.clamp(start, chars.len());
    let span_len = end - start;
    if span_len >= max_chars {
        let span = chars[start..start + max_chars].iter().collect();
        return (String::new(), span, String::new());
    }
    let budget = max_chars - span_len;
    let left_avail = start;
    let right_avail = chars.len() - end;
    let mut left = left_avail.min(budget / 2);
    let right = right_avail.min(budget - left);
    left = left_avail.min(budget - right);
    (
        chars[start - left..start].iter().collect(),
        chars[start..end].iter().collect(),
        chars[end..end + right].iter().collect(),
    )
}

/// Raw n-gram counts of a mention: plain n-grams of the window text plus
/// the n-grams of the marker-wrapped window that touch a marker.
pub fn mention_ngrams(mention: &Mention, max_chars: usize) -> BTreeMap<String, usize> {
    let (left, span, right) = mention_window(mention, max_chars);
    if left.is_empty() && span.is_empty() && right.is_empty() {
        return BTreeMap::new();
    }
    let plain = format!("{left}{span}{right}").to_lowercase();
    let marked = format!("{left}{SPAN_OPEN}{span}{SPAN_CLOSE}{right}").to_lowercase();
    let mut counts = char_ngrams(&plain);
    for (gram, c) in char_ngrams(&marked) {
        if gram.contains(SPAN_OPEN) || gram.contains(SPAN_CLOSE) {
            *counts.entry(gram).or_insert(0) += c;
        }
    }
    counts
}

pub fn featurize_mention(mention: &Mention, config: &FeaturizerConfig) -> FeatureVector {
    let counts = mention_ngrams(mention, config.max_context_chars);
    if counts.is_empty() {
        EMPTY_WINDOWS.fetch_add(1, Ordering::Relaxed);
        log::warn!("mention `{}` has an empty context window", mention.id);
        return FeatureVector::zero(config.features);
    }
    FeatureVector::normalized(config.features, hash_counts(&counts, config.features))
}

/// Title and description in the language selected by `mode`, truncated to
/// `max_chars` characters.
pub fn event_text(event: &Event, language: &str, mode: LanguageMode, max_chars: usize) -> Result<String> {
    let label = match mode {
        LanguageMode::Crosslingual => event.label(ENGLISH),
        LanguageMode::Multilingual => event.label(language).or_else(|| event.label(ENGLISH)),
    }
    .ok_or_else(|| Error::MissingLabel {
        event: event.id.clone(),
        language: language.to_string(),
    })?;
    let text = if label.description.is_empty() {
        label.title.clone()
    } else {
        format!("{} {}", label.title, label.description)
    };
    Ok(text.chars().take(max_chars).collect())
}

pub fn featurize_event(
    event: &Event,
    language: &str,
    mode: LanguageMode,
    config: &FeaturizerConfig,
) -> Result<FeatureVector> {
    let text = event_text(event, language, mode, config.max_cand_chars)?;
    Ok(featurize_text(&text, config.features))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tower {
    Mention,
    Event,
}

/// Two independent `F x d` projection matrices, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub features: usize,
    pub dim: usize,
    pub mention: Vec<f64>,
    pub event: Vec<f64>,
}

impl EncoderParams {
    pub fn zeros(features: usize, dim: usize) -> Self {
        EncoderParams {
            features,
            dim,
            mention: vec![0.0; features * dim],
            event: vec![0.0; features * dim],
        }
    }

    /// Uniform(-scale, scale) entries drawn from `rng`, mention tower first.
    pub fn random<R: Rng>(features: usize, dim: usize, scale: f64, rng: &mut R) -> Self {
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-scale..scale)).collect() };
        let mention = draw(features * dim);
        let event = draw(features * dim);
        EncoderParams {
            features,
            dim,
            mention,
            event,
        }
    }

    pub fn tower(&self, tower: Tower) -> &[f64] {
        match tower {
            Tower::Mention => &self.mention,
            Tower::Event => &self.event,
        }
    }

    pub fn tower_mut(&mut self, tower: Tower) -> &mut [f64] {
        match tower {
            Tower::Mention => &mut self.mention,
            Tower::Event => &mut self.event,
        }
    }

    /// `fvᵀ · W_tower`.
    pub fn encode(&self, fv: &FeatureVector, tower: Tower) -> Result<Vec<f64>> {
        if fv.dim() != self.features {
            return Err(Error::DimensionMismatch {
                expected: self.features,
                actual: fv.dim(),
            });
        }
        let w = self.tower(tower);
        let d = self.dim;
        let mut out = vec![0.0; d];
        for &(i, v) in fv.entries() {
            let row = &w[i as usize * d..(i as usize + 1) * d];
            for (o, r) in out.iter_mut().zip(row) {
                *o += v * r;
            }
        }
        Ok(out)
    }

    pub fn is_finite(&self) -> bool {
        self.mention.iter().chain(&self.event).all(|v| v.is_finite())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Inner product of a mention and an event encoding.
pub fn pair_score(mention: &[f64], event: &[f64]) -> Result<f64> {
    if mention.len() != event.len() {
        return Err(Error::DimensionMismatch {
            expected: mention.len(),
            actual: event.len(),
        });
    }
    Ok(dot(mention, event))
}
