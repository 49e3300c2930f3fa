//! Exact top-k inner-product retrieval over an encoded candidate pool.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::encoder::{dot, featurize_event, EncoderParams, FeaturizerConfig, LanguageMode, Tower};
use crate::error::{Error, Result};
use crate::kb::{Kb, ENGLISH};

pub const DEFAULT_RERANK_K: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub event: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub mention_id: String,
    pub candidates: Vec<Candidate>,
}

impl RetrievalResult {
    pub fn events(&self) -> impl Iterator<Item = &str> {
        self.candidates.iter().map(|c| c.event.as_str())
    }
}

/// Event encodings of the candidate pool, one row per event in id order.
///
/// Crosslingual indexes hold one English matrix. Multilingual indexes hold
/// one matrix per language given at build time; events lacking a label in
/// that language fall back to English.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateIndex {
    ids: Vec<String>,
    dim: usize,
    mode: LanguageMode,
    matrices: BTreeMap<String, Vec<f64>>,
}

impl CandidateIndex {
    pub fn build(
        params: &EncoderParams,
        kb: &Kb,
        pool: &BTreeSet<String>,
        mode: LanguageMode,
        languages: &[String],
        featurizer: &FeaturizerConfig,
    ) -> Result<Self> {
        let ids: Vec<String> = pool.iter().cloned().collect();
        let langs: BTreeSet<&str> = match mode {
            LanguageMode::Crosslingual => [ENGLISH].into_iter().collect(),
            LanguageMode::Multilingual => languages.iter().map(String::as_str).collect(),
        };
        let mut matrices = BTreeMap::new();
        for lang in langs {
            let mut rows = Vec::with_capacity(ids.len() * params.dim);
            for id in &ids {
                let fv = featurize_event(kb.event(id)?, lang, mode, featurizer)?;
                rows.extend(params.encode(&fv, Tower::Event)?);
            }
            matrices.insert(lang.to_string(), rows);
        }
        Ok(CandidateIndex {
            ids,
            dim: params.dim,
            mode,
            matrices,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn mode(&self) -> LanguageMode {
        self.mode
    }

    pub fn matrix(&self, language: &str) -> Result<&[f64]> {
        let key = match self.mode {
            LanguageMode::Crosslingual => ENGLISH,
            LanguageMode::Multilingual => language,
        };
        self.matrices
            .get(key)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::InvalidConfig(format!("index was not built for language `{key}`")))
    }

    pub fn row(&self, language: &str, i: usize) -> Result<&[f64]> {
        Ok(&self.matrix(language)?[i * self.dim..(i + 1) * self.dim])
    }

    /// Exact top-k by inner product; ties go to the smaller event id.
    pub fn topk(&self, query: &[f64], language: &str, k: usize) -> Result<Vec<Candidate>> {
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: query.len(),
            });
        }
        if k == 0 || k > self.ids.len() {
            return Err(Error::KTooLarge {
                k,
                pool: self.ids.len(),
            });
        }
        let matrix = self.matrix(language)?;
        let mut heap: BinaryHeap<Reverse<Ranked>> = BinaryHeap::with_capacity(k + 1);
        for (i, row) in matrix.chunks_exact(self.dim).enumerate() {
            heap.push(Reverse(Ranked {
                score: dot(query, row),
                index: i,
            }));
            if heap.len() > k {
                heap.pop();
            }
        }
        let mut best: Vec<Ranked> = heap.into_iter().map(|Reverse(r)| r).collect();
        best.sort_by(|a, b| b.cmp(a));
        Ok(best
            .into_iter()
            .map(|r| Candidate {
                event: self.ids[r.index].clone(),
                score: r.score,
            })
            .collect())
    }
}

/// Ordered so that "greater" means "ranks earlier".
#[derive(Debug, Clone, Copy)]
struct Ranked {
    score: f64,
    index: usize,
}

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked {}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.index.cmp(&self.index))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::Event;
    use proptest::prelude::*;

    fn index_from_rows(rows: Vec<Vec<f64>>) -> CandidateIndex {
        let dim = rows[0].len();
        let ids = (0..rows.len()).map(|i| format!("E{i:03}")).collect();
        let mut matrices = BTreeMap::new();
        matrices.insert(ENGLISH.to_string(), rows.concat());
        CandidateIndex {
            ids,
            dim,
            mode: LanguageMode::Crosslingual,
            matrices,
        }
    }

    #[test]
    fn full_ranking_when_k_is_pool_size() {
        let idx = index_from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]]);
        let out = idx.topk(&[1.0, 0.2], "en", 3).unwrap();
        let ids: Vec<&str> = out.iter().map(|c| c.event.as_str()).collect();
        assert_eq!(ids, vec!["E000", "E002", "E001"]);
        assert!(matches!(idx.topk(&[1.0, 0.2], "en", 4), Err(Error::KTooLarge { .. })));
        assert!(matches!(idx.topk(&[1.0, 0.2], "en", 0), Err(Error::KTooLarge { .. })));
    }

    #[test]
    fn dot_product_not_cosine() {
        let idx = index_from_rows(vec![vec![1.0, 0.0], vec![3.0, 0.5]]);
        // querying with row 0 ranks the longer row 1 first
        assert_eq!(idx.topk(&[1.0, 0.0], "en", 1).unwrap()[0].event, "E001");
        // equal norms: the row itself wins
        let idx = index_from_rows(vec![vec![1.0, 0.0], vec![0.6, 0.8]]);
        assert_eq!(idx.topk(&[0.6, 0.8], "en", 1).unwrap()[0].event, "E001");
    }

    #[test]
    fn ties_break_by_ascending_id() {
        let idx = index_from_rows(vec![vec![1.0], vec![2.0], vec![1.0], vec![1.0]]);
        let out = idx.topk(&[1.0], "en", 4).unwrap();
        let ids: Vec<&str> = out.iter().map(|c| c.event.as_str()).collect();
        assert_eq!(ids, vec!["E001", "E000", "E002", "E003"]);
    }

    #[test]
    fn built_index_is_deterministic_and_language_independent() {
        let events: Vec<Event> = (0..8)
            .map(|i| Event::new(format!("E{i}"), ENGLISH, &format!("event number {i}"), "desc"))
            .collect();
        let kb = Kb::new(events, vec![]).unwrap();
        let pool: BTreeSet<String> = kb.ids().map(str::to_string).collect();
        let cfg = FeaturizerConfig {
            features: 256,
            ..FeaturizerConfig::default()
        };
        use rand::SeedableRng;
        let params = EncoderParams::random(256, 4, 0.1, &mut rand_chacha::ChaCha8Rng::seed_from_u64(3));
        let a = CandidateIndex::build(&params, &kb, &pool, LanguageMode::Crosslingual, &[], &cfg).unwrap();
        let b = CandidateIndex::build(&params, &kb, &pool, LanguageMode::Crosslingual, &[], &cfg).unwrap();
        assert_eq!(a.len(), 8);
        assert_eq!(a, b);
        assert_eq!(a.matrix("de").unwrap(), a.matrix("en").unwrap());
        let ml = CandidateIndex::build(&params, &kb, &pool, LanguageMode::Multilingual, &["de".into()], &cfg).unwrap();
        assert!(ml.matrix("fr").is_err());
    }

    proptest! {
        #[test]
        fn topk_matches_brute_force_and_prefixes(
            rows in proptest::collection::vec(proptest::collection::vec(-3i32..3, 3), 1..40),
            q in proptest::collection::vec(-3i32..3, 3),
            k in 1usize..40,
        ) {
            let rows: Vec<Vec<f64>> = rows.into_iter().map(|r| r.into_iter().map(f64::from).collect()).collect();
            let q: Vec<f64> = q.into_iter().map(f64::from).collect();
            let idx = index_from_rows(rows.clone());
            let k = k.min(rows.len());
            let got = idx.topk(&q, "en", k).unwrap();
            let mut brute: Vec<(f64, String)> = rows
                .iter()
                .enumerate()
                .map(|(i, r)| (r.iter().zip(&q).map(|(a, b)| a * b).sum(), format!("E{i:03}")))
                .collect();
            brute.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let expected: Vec<&str> = brute.iter().take(k).map(|(_, id)| id.as_str()).collect();
            let got_ids: Vec<&str> = got.iter().map(|c| c.event.as_str()).collect();
            prop_assert_eq!(&got_ids, &expected);
            if k > 1 {
                let shorter = idx.topk(&q, "en", k - 1).unwrap();
                prop_assert_eq!(&shorter[..], &got[..k - 1]);
            }
        }
    }
}
