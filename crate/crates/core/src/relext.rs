//! Zero-shot parent discovery from retrieval overlap.
//!
//! Each event collects the mentions that retrieved it in their top-k. If
//! `e_j` is the parent of `e_i`, every mention linked to `e_i` should also
//! be linked to `e_j`, so `h(e_i, e_j) = |M_i ∩ M_j| / |M_i|` approaches 1.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::retrieval::RetrievalResult;

pub const DEFAULT_LIST_K: usize = 4;
pub const DEFAULT_RANKING_LEN: usize = 16;

/// Event id → ids of mentions whose top-k contains it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MentionLists {
    lists: BTreeMap<String, BTreeSet<String>>,
}

impl MentionLists {
    /// Empty for events never retrieved.
    pub fn mentions(&self, event: &str) -> Option<&BTreeSet<String>> {
        self.lists.get(event)
    }

    pub fn linked_events(&self) -> impl Iterator<Item = &str> {
        self.lists.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }
}

/// Inverted index over retrieval lists truncated to `k`.
pub fn build_mention_lists(retrievals: &[RetrievalResult], k: usize) -> MentionLists {
    let mut lists: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for r in retrievals {
        for event in r.events().take(k) {
            lists
                .entry(event.to_string())
                .or_default()
                .insert(r.mention_id.clone());
        }
    }
    MentionLists { lists }
}

/// `|M_child ∩ M_parent| / |M_child|`.
pub fn h_score(lists: &MentionLists, child: &str, parent: &str) -> Result<f64> {
    let own = lists
        .mentions(child)
        .filter(|m| !m.is_empty())
        .ok_or_else(|| Error::UndefinedScore(child.to_string()))?;
    let shared = match lists.mentions(parent) {
        Some(other) => own.intersection(other).count(),
        None => 0,
    };
    Ok(shared as f64 / own.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParentCandidate {
    pub parent: String,
    pub h: f64,
}

/// Every other pool event ranked as a candidate parent of `event`.
///
/// Order: descending h, then smaller mention list (an ancestor's list
/// contains its descendants', so the nearest ancestor comes first), then
/// ascending id.
pub fn rank_parents(
    lists: &MentionLists,
    event: &str,
    pool: &BTreeSet<String>,
) -> Result<Vec<ParentCandidate>> {
    if !pool.contains(event) {
        return Err(Error::UnknownEvent(event.to_string()));
    }
    let mut ranking = pool
        .iter()
        .filter(|c| c.as_str() != event)
        .map(|c| {
            Ok(ParentCandidate {
                parent: c.clone(),
                h: h_score(lists, event, c)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let size = |e: &str| lists.mentions(e).map_or(0, BTreeSet::len);
    // pool iteration is already id-ascending, and the sort is stable
    ranking.sort_by(|a, b| {
        b.h.total_cmp(&a.h)
            .then_with(|| size(&a.parent).cmp(&size(&b.parent)))
    });
    Ok(ranking)
}

/// One line of `parents.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParentRanking {
    pub event: String,
    pub ranking: Vec<ParentCandidate>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::Candidate;

    fn retrieval(mention: &str, events: &[&str]) -> RetrievalResult {
        RetrievalResult {
            mention_id: mention.into(),
            candidates: events
                .iter()
                .enumerate()
                .map(|(i, e)| Candidate {
                    event: e.to_string(),
                    score: -(i as f64),
                })
                .collect(),
        }
    }

    fn pool(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn lists_are_truncated_inverted_index() {
        let lists = build_mention_lists(&[retrieval("m1", &["A", "B", "C", "D", "E"])], 4);
        for e in ["A", "B", "C", "D"] {
            assert_eq!(lists.mentions(e).unwrap(), &pool(&["m1"]));
        }
        assert!(lists.mentions("E").is_none());
        let lists = build_mention_lists(
            &[retrieval("m1", &["A", "B"]), retrieval("m2", &["C", "A"])],
            4,
        );
        assert_eq!(lists.mentions("A").unwrap(), &pool(&["m1", "m2"]));
    }

    #[test]
    fn h_score_examples() {
        let lists = build_mention_lists(
            &[
                retrieval("m1", &["I", "J"]),
                retrieval("m2", &["I", "J"]),
                retrieval("m3", &["I", "K"]),
                retrieval("m4", &["I", "K"]),
                retrieval("m5", &["L"]),
            ],
            4,
        );
        assert_eq!(h_score(&lists, "I", "J").unwrap(), 0.5);
        assert_eq!(h_score(&lists, "J", "I").unwrap(), 1.0);
        assert_eq!(h_score(&lists, "J", "L").unwrap(), 0.0);
        assert_eq!(h_score(&lists, "I", "I").unwrap(), 1.0);
        assert!(matches!(h_score(&lists, "Z", "I"), Err(Error::UndefinedScore(_))));
    }

    #[test]
    fn ranking_order_and_ties() {
        let lists = build_mention_lists(
            &[
                retrieval("m1", &["E", "B", "C"]),
                retrieval("m2", &["E", "B", "A"]),
                retrieval("m3", &["E", "C", "A"]),
                retrieval("m4", &["E", "B", "C", "A"]),
            ],
            4,
        );
        // h(E,B)=3/4, h(E,C)=3/4, h(E,A)=3/4 → all tie; D unlinked gets 0
        let ranked = rank_parents(&lists, "E", &pool(&["A", "B", "C", "D", "E"])).unwrap();
        let ids: Vec<&str> = ranked.iter().map(|p| p.parent.as_str()).collect();
        assert_eq!(ids, vec!["A", "B", "C", "D"]);

        let lists = build_mention_lists(
            &[
                retrieval("m1", &["E", "B", "C"]),
                retrieval("m2", &["E", "B"]),
                retrieval("m3", &["E"]),
            ],
            4,
        );
        let ranked = rank_parents(&lists, "E", &pool(&["B", "C", "E"])).unwrap();
        let hs: Vec<f64> = ranked.iter().map(|p| p.h).collect();
        assert_eq!(hs, vec![2.0 / 3.0, 1.0 / 3.0]);
        assert!(matches!(
            rank_parents(&lists, "X", &pool(&["B", "C", "E", "X"])),
            Err(Error::UndefinedScore(_))
        ));
    }

    #[test]
    fn nearest_ancestor_wins_a_full_overlap_tie() {
        // chain C -> B -> A; B and A both cover every mention of C
        let lists = build_mention_lists(
            &[
                retrieval("m1", &["C", "B", "A"]),
                retrieval("m2", &["B", "A"]),
                retrieval("m3", &["A"]),
            ],
            4,
        );
        let ranked = rank_parents(&lists, "C", &pool(&["A", "B", "C"])).unwrap();
        assert_eq!(ranked[0].parent, "B");
        assert_eq!((ranked[0].h, ranked[1].h), (1.0, 1.0));
    }
}
