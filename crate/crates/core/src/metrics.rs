//! Set-valued evaluation measures for retrieval, reranking and relation
//! extraction.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb::HierarchyForest;

/// Longest gold chain in the collected data; strict Recall@k below this is
/// reported through Recall@min instead.
pub const MIN_STRICT_K: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub mention_id: String,
    pub gold: BTreeSet<String>,
    /// Deepest gold event.
    pub atomic: String,
    /// Retrieved event ids, best first.
    pub retrieved: Vec<String>,
    /// Final predicted set (`{NULL}` when nothing cleared the threshold).
    pub predicted: Option<BTreeSet<String>>,
    /// Candidates re-sorted by reranker score, best first.
    pub reranked: Option<Vec<String>>,
}

fn non_empty(records: &[EvalRecord]) -> Result<()> {
    if records.is_empty() {
        Err(Error::EmptyRecords)
    } else {
        Ok(())
    }
}

fn top(list: &[String], k: usize) -> &[String] {
    &list[..k.min(list.len())]
}

fn mean(records: &[EvalRecord], f: impl Fn(&EvalRecord) -> f64) -> f64 {
    records.iter().map(f).sum::<f64>() / records.len() as f64
}

/// Fraction of mentions whose whole gold set (or, with `atomic_only`, just
/// the atomic event) is inside the top-k.
pub fn recall_at_k(records: &[EvalRecord], k: usize, atomic_only: bool) -> Result<f64> {
    non_empty(records)?;
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    if !atomic_only && k < MIN_STRICT_K {
        log::warn!("strict Recall@{k} is below the longest gold chain; prefer Recall@min");
    }
    Ok(mean(records, |r| {
        let window = top(&r.retrieved, k);
        let hit = if atomic_only {
            window.contains(&r.atomic)
        } else {
            r.gold.iter().all(|g| window.contains(g))
        };
        hit as u8 as f64
    }))
}

/// Strict containment within the top-|gold| candidates.
pub fn recall_at_min(records: &[EvalRecord]) -> Result<f64> {
    non_empty(records)?;
    Ok(mean(records, |r| {
        let window = top(&r.retrieved, r.gold.len());
        r.gold.iter().all(|g| window.contains(g)) as u8 as f64
    }))
}

/// Mean over mentions of (gold events in top-k) / |gold|.
pub fn recall_at_k_fraction(records: &[EvalRecord], k: usize) -> Result<f64> {
    non_empty(records)?;
    Ok(mean(records, |r| {
        let window = top(&r.retrieved, k);
        r.gold.iter().filter(|g| window.contains(g)).count() as f64 / r.gold.len() as f64
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetMetrics {
    pub strict_acc: f64,
    pub strict_acc_top_min: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
}

impl SetMetrics {
    /// Threshold-selection objective.
    pub fn product(&self) -> f64 {
        self.strict_acc * self.macro_f1 * self.micro_f1
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Exact-match accuracy plus macro and micro precision/recall/F1.
///
/// Macro F1 is the harmonic mean of the averaged precision and recall, not
/// the mean of per-mention F1. An empty predicted set counts as `{NULL}`.
/// The top-min accuracy predicts the |gold| best candidates of `reranked`
/// (falling back to `retrieved`).
pub fn set_metrics(records: &[EvalRecord]) -> Result<SetMetrics> {
    non_empty(records)?;
    let null: BTreeSet<String> = [crate::NULL_EVENT.to_string()].into_iter().collect();
    let n = records.len() as f64;
    let (mut exact, mut top_min) = (0.0, 0.0);
    let (mut map, mut mar) = (0.0, 0.0);
    let (mut overlap, mut predicted_total, mut gold_total) = (0usize, 0usize, 0usize);
    for r in records {
        let predicted = r.predicted.as_ref().ok_or_else(|| {
            Error::InvalidConfig(format!("record `{}` has no prediction", r.mention_id))
        })?;
        let predicted = if predicted.is_empty() { &null } else { predicted };
        let inter = predicted.intersection(&r.gold).count();
        exact += (predicted == &r.gold) as u8 as f64;
        map += inter as f64 / predicted.len() as f64;
        mar += inter as f64 / r.gold.len() as f64;
        overlap += inter;
        predicted_total += predicted.len();
        gold_total += r.gold.len();

        let ranking = r.reranked.as_ref().unwrap_or(&r.retrieved);
        let best: BTreeSet<&String> = top(ranking, r.gold.len()).iter().collect();
        top_min += (best.len() == r.gold.len() && r.gold.iter().all(|g| best.contains(g))) as u8 as f64;
    }
    let (map, mar) = (map / n, mar / n);
    let mip = overlap as f64 / predicted_total as f64;
    let mir = overlap as f64 / gold_total as f64;
    Ok(SetMetrics {
        strict_acc: exact / n,
        strict_acc_top_min: top_min / n,
        macro_precision: map,
        macro_recall: mar,
        macro_f1: harmonic(map, mar),
        micro_precision: mip,
        micro_recall: mir,
        micro_f1: harmonic(mip, mir),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: usize,
    pub recall: f64,
    pub recall_fraction: f64,
    pub recall_atomic: f64,
}

pub fn recall_curve(records: &[EvalRecord], ks: &[usize]) -> Result<Vec<CurvePoint>> {
    ks.iter()
        .map(|&k| {
            Ok(CurvePoint {
                k,
                recall: recall_at_k(records, k, false)?,
                recall_fraction: recall_at_k_fraction(records, k)?,
                recall_atomic: recall_at_k(records, k, true)?,
            })
        })
        .collect()
}

/// Recall@k of parent discovery.
///
/// Evaluated over the non-root events of `queries`. A query hits when its
/// gold parent is among the first `k` entries of its ranking; queries
/// without a ranking (no linked mentions) miss at every k. Returns 0 when
/// no query has a parent.
pub fn relext_recall_at_k(
    rankings: &BTreeMap<String, Vec<String>>,
    forest: &HierarchyForest,
    queries: &[String],
    k: usize,
) -> f64 {
    let mut total = 0usize;
    let mut hits = 0usize;
    for event in queries {
        let Some(parent) = forest.parent(event) else {
            continue;
        };
        total += 1;
        if let Some(ranking) = rankings.get(event) {
            if top(ranking, k).iter().any(|p| p == parent) {
                hits += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}
