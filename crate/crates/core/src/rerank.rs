//! Joint mention–event pair scoring and thresholded set prediction.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{GroundingInstance, Mention};
use crate::encoder::{
    char_ngrams, event_text, hash_counts, mention_ngrams, FeatureVector, LanguageMode,
    DEFAULT_MAX_CAND_CHARS, DEFAULT_MAX_CONTEXT_CHARS,
};
use crate::error::{Error, Result};
use crate::io;
use crate::kb::Kb;
use crate::metrics::{set_metrics, EvalRecord};
use crate::retrieval::{Candidate, RetrievalResult, DEFAULT_RERANK_K};
use crate::rng;
use crate::training::{bce_with_logit, sigmoid};
use crate::NULL_EVENT;

pub const DEFAULT_THRESHOLD_GRID: [f64; 7] = [0.001, 0.01, 0.1, 0.3, 0.5, 0.7, 0.9];

/// Dense summary features appended after the three hashed blocks.
const SUMMARY_FEATURES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PairFeatureConfig {
    /// Width of each hashed block.
    pub block: usize,
    pub max_context_chars: usize,
    pub max_cand_chars: usize,
}

impl Default for PairFeatureConfig {
    fn default() -> Self {
        PairFeatureConfig {
            block: 1 << 12,
            max_context_chars: DEFAULT_MAX_CONTEXT_CHARS,
            max_cand_chars: DEFAULT_MAX_CAND_CHARS,
        }
    }
}

impl PairFeatureConfig {
    /// Total joint feature dimension `P`.
    pub fn dim(&self) -> usize {
        3 * self.block + SUMMARY_FEATURES
    }
}

fn normalized_block(counts: BTreeMap<u32, f64>, offset: u32, out: &mut Vec<(u32, f64)>) -> Vec<(u32, f64)> {
    let norm = counts.values().map(|v| v * v).sum::<f64>().sqrt();
    let mut block = Vec::new();
    if norm > 0.0 {
        for (i, v) in counts {
            block.push((i, v / norm));
            out.push((i + offset, v / norm));
        }
    }
    block
}

/// Joint features of a mention–event pair.
///
/// Layout: `[mention | event | interaction | cosine, coverage]`. Each hashed
/// block is L2-normalized on its own. The interaction block hashes the
/// n-grams shared by mention window and event text, weighted by the smaller
/// of the two counts. `cosine` compares the mention and event blocks;
/// `coverage` is the share of event n-gram mass found in the mention.
pub fn featurize_pair(
    mention: &Mention,
    event: &crate::kb::Event,
    mode: LanguageMode,
    config: &PairFeatureConfig,
) -> Result<FeatureVector> {
    let dim = config.block;
    let m_grams = mention_ngrams(mention, config.max_context_chars);
    let text = event_text(event, &mention.language, mode, config.max_cand_chars)?.to_lowercase();
    let e_grams = char_ngrams(&text);

    let shared: BTreeMap<String, usize> = e_grams
        .iter()
        .filter_map(|(g, c)| m_grams.get(g).map(|mc| (g.clone(), (*mc).min(*c))))
        .collect();

    let mut entries = Vec::new();
    let m_block = normalized_block(hash_counts(&m_grams, dim), 0, &mut entries);
    let e_block = normalized_block(hash_counts(&e_grams, dim), dim as u32, &mut entries);
    normalized_block(hash_counts(&shared, dim), 2 * dim as u32, &mut entries);

    let e_map: BTreeMap<u32, f64> = e_block.into_iter().collect();
    let cosine: f64 = m_block
        .iter()
        .filter_map(|(i, v)| e_map.get(i).map(|w| v * w))
        .sum();
    let e_mass: usize = e_grams.values().sum();
    let coverage = if e_mass == 0 {
        0.0
    } else {
        shared.values().sum::<usize>() as f64 / e_mass as f64
    };
    let base = 3 * dim as u32;
    for (i, v) in [cosine, coverage].into_iter().enumerate() {
        if v != 0.0 {
            entries.push((base + i as u32, v));
        }
    }
    FeatureVector::from_entries(config.dim(), entries)
}

/// One-hidden-layer scorer: `w · tanh(Vᵀx + c) + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankerParams {
    pub input: usize,
    pub hidden: usize,
    /// `input x hidden`, row-major.
    pub v: Vec<f64>,
    pub c: Vec<f64>,
    pub w: Vec<f64>,
    pub b: f64,
    pub features: PairFeatureConfig,
    pub mode: LanguageMode,
    /// Threshold chosen on dev data, applied to σ(score).
    pub threshold: f64,
}

impl RerankerParams {
    fn hidden_pre(&self, x: &FeatureVector) -> Vec<f64> {
        let h = self.hidden;
        let mut z = self.c.clone();
        for &(i, xi) in x.entries() {
            let row = &self.v[i as usize * h..(i as usize + 1) * h];
            for (zk, vk) in z.iter_mut().zip(row) {
                *zk += xi * vk;
            }
        }
        z
    }

    pub fn score(&self, x: &FeatureVector) -> Result<f64> {
        if x.dim() != self.input {
            return Err(Error::DimensionMismatch {
                expected: self.input,
                actual: x.dim(),
            });
        }
        let z = self.hidden_pre(x);
        Ok(z.iter().zip(&self.w).map(|(zk, wk)| zk.tanh() * wk).sum::<f64>() + self.b)
    }

    /// One SGD step on the mean BCE of `examples`; returns the loss.
    fn step(&mut self, examples: &[(FeatureVector, bool)], lr: f64) -> f64 {
        let h = self.hidden;
        let n = examples.len() as f64;
        let mut loss = 0.0;
        let mut gw = vec![0.0; h];
        let mut gc = vec![0.0; h];
        let mut gb = 0.0;
        let mut gv: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
        for (x, label) in examples {
            let z = self.hidden_pre(x);
            let a: Vec<f64> = z.iter().map(|v| v.tanh()).collect();
            let s = a.iter().zip(&self.w).map(|(ak, wk)| ak * wk).sum::<f64>() + self.b;
            loss += bce_with_logit(s, *label);
            let g = (sigmoid(s) - *label as u8 as f64) / n;
            gb += g;
            let dz: Vec<f64> = (0..h).map(|k| g * self.w[k] * (1.0 - a[k] * a[k])).collect();
            for k in 0..h {
                gw[k] += g * a[k];
                gc[k] += dz[k];
            }
            for &(i, xi) in x.entries() {
                let row = gv.entry(i).or_insert_with(|| vec![0.0; h]);
                for k in 0..h {
                    row[k] += xi * dz[k];
                }
            }
        }
        for k in 0..h {
            self.w[k] -= lr * gw[k];
            self.c[k] -= lr * gc[k];
        }
        self.b -= lr * gb;
        for (i, row) in gv {
            let slot = &mut self.v[i as usize * h..(i as usize + 1) * h];
            for (p, g) in slot.iter_mut().zip(row) {
                *p -= lr * g;
            }
        }
        loss / n
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        io::read_json(path)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RerankConfig {
    pub k: usize,
    pub threshold_grid: Vec<f64>,
    /// Used when no dev data is available for selection.
    pub threshold: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub hidden: usize,
    pub seed: u64,
    pub features: PairFeatureConfig,
}

impl Default for RerankConfig {
    fn default() -> Self {
        RerankConfig {
            k: DEFAULT_RERANK_K,
            threshold_grid: DEFAULT_THRESHOLD_GRID.to_vec(),
            threshold: 0.5,
            epochs: 5,
            learning_rate: 0.5,
            hidden: 32,
            seed: 0,
            features: PairFeatureConfig::default(),
        }
    }
}

impl RerankConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.hidden == 0 {
            return Err(Error::InvalidConfig("k and hidden must be positive".into()));
        }
        if self.threshold_grid.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
            return Err(Error::InvalidConfig("threshold grid values must lie in (0, 1)".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Forces every gold event into the first `k` candidates.
///
/// Missing golds are taken in id order; each replaces the negative with
/// the lowest retrieval score at that moment (the later-ranked one on
/// ties). Gold candidates are never replaced and the list length is kept.
/// A list shorter than `k` is first extended with the missing golds.
pub fn substitute_missing_gold(
    mention_id: &str,
    candidates: &[Candidate],
    gold: &BTreeSet<String>,
    k: usize,
) -> Result<Vec<Candidate>> {
    if gold.len() > k {
        return Err(Error::GoldExceedsK {
            mention: mention_id.to_string(),
            gold: gold.len(),
            k,
        });
    }
    let mut list: Vec<Candidate> = candidates.iter().take(k).cloned().collect();
    let present: BTreeSet<String> = list.iter().map(|c| c.event.clone()).collect();
    let floor = list.iter().map(|c| c.score).fold(f64::INFINITY, f64::min);
    let floor = if floor.is_finite() { floor } else { 0.0 };
    for missing in gold.iter().filter(|g| !present.contains(*g)) {
        if list.len() < k {
            list.push(Candidate {
                event: missing.clone(),
                score: floor,
            });
            continue;
        }
        let victim = list
            .iter()
            .enumerate()
            .filter(|(_, c)| !gold.contains(&c.event))
            .min_by(|(ia, a), (ib, b)| a.score.total_cmp(&b.score).then(ib.cmp(ia)))
            .map(|(i, _)| i)
            .expect("gold.len() <= k leaves a negative to replace");
        list[victim].event = missing.clone();
    }
    Ok(list)
}

/// Reranker scores (logits) for a mention's candidates, in candidate order.
pub fn score_candidates(
    reranker: &RerankerParams,
    kb: &Kb,
    mention: &Mention,
    candidates: &[Candidate],
) -> Result<Vec<(String, f64)>> {
    candidates
        .iter()
        .map(|c| {
            let x = featurize_pair(mention, kb.event(&c.event)?, reranker.mode, &reranker.features)?;
            Ok((c.event.clone(), reranker.score(&x)?))
        })
        .collect()
}

/// Candidates with `σ(score) ≥ threshold`, without NULL substitution.
pub fn thresholded(scored: &[(String, f64)], threshold: f64) -> BTreeSet<String> {
    scored
        .iter()
        .filter(|(_, s)| sigmoid(*s) >= threshold)
        .map(|(e, _)| e.clone())
        .collect()
}

/// Thresholded prediction; `{NULL}` when nothing clears the threshold.
pub fn predict_set(scored: &[(String, f64)], threshold: f64) -> BTreeSet<String> {
    let set = thresholded(scored, threshold);
    if set.is_empty() {
        [NULL_EVENT.to_string()].into_iter().collect()
    } else {
        set
    }
}

/// Candidate ids sorted by reranker score, best first (ties by id).
pub fn rerank_order(scored: &[(String, f64)]) -> Vec<String> {
    let mut order: Vec<&(String, f64)> = scored.iter().collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    order.into_iter().map(|(e, _)| e.clone()).collect()
}

/// Scored dev candidates of one mention, with its gold set.
#[derive(Debug, Clone)]
pub struct ScoredMention {
    pub mention_id: String,
    pub gold: BTreeSet<String>,
    pub atomic: String,
    pub scored: Vec<(String, f64)>,
}

/// Grid value maximizing `strict acc × macro F1 × micro F1`; ties go to the
/// smaller threshold.
pub fn select_threshold(dev: &[ScoredMention], grid: &[f64]) -> Result<f64> {
    let mut sorted: Vec<f64> = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let first = *sorted
        .first()
        .ok_or_else(|| Error::InvalidConfig("threshold grid is empty".into()))?;
    if dev.is_empty() {
        return Ok(first);
    }
    let mut best = (first, f64::NEG_INFINITY);
    for &tau in &sorted {
        let records: Vec<EvalRecord> = dev
            .iter()
            .map(|m| EvalRecord {
                mention_id: m.mention_id.clone(),
                gold: m.gold.clone(),
                atomic: m.atomic.clone(),
                retrieved: m.scored.iter().map(|(e, _)| e.clone()).collect(),
                predicted: Some(predict_set(&m.scored, tau)),
                reranked: None,
            })
            .collect();
        let product = set_metrics(&records)?.product();
        log::debug!("threshold {tau}: product {product}");
        if product > best.1 {
            best = (tau, product);
        }
    }
    Ok(best.0)
}

/// The labelled candidate lists the reranker trains on: each mention's
/// first `k` retrievals after [`substitute_missing_gold`], marked positive
/// iff in the gold set.
pub fn training_lists(
    train: &[(GroundingInstance, RetrievalResult)],
    k: usize,
) -> Result<Vec<Vec<(Candidate, bool)>>> {
    if train.is_empty() {
        return Err(Error::EmptyRetrievals);
    }
    train
        .iter()
        .map(|(inst, retrieval)| {
            let list = substitute_missing_gold(&inst.mention.id, &retrieval.candidates, &inst.gold_set, k)?;
            Ok(list
                .into_iter()
                .map(|c| {
                    let label = inst.gold_set.contains(&c.event);
                    (c, label)
                })
                .collect())
        })
        .collect()
}

/// Trains the pair scorer on the substituted top-k lists of the training
/// mentions, then picks the threshold on `dev` (if any).
pub fn train_reranker(
    kb: &Kb,
    train: &[(GroundingInstance, RetrievalResult)],
    dev: &[(GroundingInstance, RetrievalResult)],
    mode: LanguageMode,
    config: &RerankConfig,
) -> Result<RerankerParams> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyRetrievals);
    }
    let input = config.features.dim();
    let h = config.hidden;
    let mut init = rng::substream(config.seed, rng::RERANK);
    let scale = 0.05;
    let v = (0..input * h).map(|_| init.gen_range(-scale..scale)).collect();
    let w = (0..h).map(|_| init.gen_range(-scale..scale)).collect();
    let mut params = RerankerParams {
        input,
        hidden: h,
        v,
        c: vec![0.0; h],
        w,
        b: 0.0,
        features: config.features,
        mode,
        threshold: config.threshold,
    };

    let lists = training_lists(train, config.k)?;
    let examples = train
        .iter()
        .zip(&lists)
        .map(|((inst, _), list)| {
            list.iter()
                .map(|(c, label)| {
                    let x = featurize_pair(&inst.mention, kb.event(&c.event)?, mode, &config.features)?;
                    Ok((x, *label))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut order: Vec<usize> = (0..examples.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut init);
        let mut total = 0.0;
        for &i in &order {
            total += params.step(&examples[i], config.learning_rate);
        }
        log::info!("rerank epoch {epoch}: loss {}", total / order.len() as f64);
    }

    if !dev.is_empty() {
        let scored = dev
            .iter()
            .map(|(inst, retrieval)| {
                let top: Vec<Candidate> = retrieval.candidates.iter().take(config.k).cloned().collect();
                Ok(ScoredMention {
                    mention_id: inst.mention.id.clone(),
                    gold: inst.gold_set.clone(),
                    atomic: inst.atomic_event.clone(),
                    scored: score_candidates(&params, kb, &inst.mention, &top)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        params.threshold = select_threshold(&scored, &config.threshold_grid)?;
        log::info!("selected threshold {}", params.threshold);
    }
    Ok(params)
}

/// One line of `predictions.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub mention_id: String,
    pub predicted: Vec<String>,
}
