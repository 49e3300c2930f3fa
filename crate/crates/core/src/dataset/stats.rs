use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::GroundingInstance;
use crate::kb::HierarchyForest;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub mentions: usize,
    pub events: usize,
    pub trees: usize,
    /// Mean child count over events that have children.
    pub avg_children: f64,
    /// Mean over trees of the deepest anchor depth attested by a mention;
    /// a tree whose mentions all link to its root contributes 0.
    pub avg_effective_depth: f64,
}

pub fn corpus_stats(instances: &[GroundingInstance], forest: &HierarchyForest) -> CorpusStats {
    let children = forest.children_map();
    let avg_children = if children.is_empty() {
        0.0
    } else {
        children.values().map(Vec::len).sum::<usize>() as f64 / children.len() as f64
    };

    let mut deepest: BTreeMap<&str, usize> =
        forest.roots().iter().map(|r| (r.as_str(), 0)).collect();
    for inst in instances {
        let Ok(chain) = forest.ancestor_chain(&inst.atomic_event) else {
            continue;
        };
        if let Some(slot) = chain.last().and_then(|root| deepest.get_mut(root.as_str())) {
            *slot = (*slot).max(chain.len() - 1);
        }
    }
    let avg_effective_depth = if deepest.is_empty() {
        0.0
    } else {
        deepest.values().sum::<usize>() as f64 / deepest.len() as f64
    };

    CorpusStats {
        mentions: instances.len(),
        events: forest.nodes().len(),
        trees: forest.roots().len(),
        avg_children,
        avg_effective_depth,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{expand_gold, Mention};
    use crate::kb::{build_forest, Event, Property, RelationEdge, ENGLISH};

    fn inst(forest: &HierarchyForest, anchor: &str) -> GroundingInstance {
        let m = Mention {
            id: format!("m-{anchor}"),
            language: ENGLISH.into(),
            context: "x".into(),
            span_start: 0,
            span_end: 1,
            anchor_event: anchor.into(),
        };
        expand_gold(&m, forest).unwrap()
    }

    fn ab_forest() -> HierarchyForest {
        let mut events = vec![Event::new("A", ENGLISH, "a", ""), Event::new("B", ENGLISH, "b", "")];
        build_forest(&mut events, &[RelationEdge::new("A", Property::PartOf, "B")], 3).unwrap()
    }

    #[test]
    fn single_tree_counts() {
        let forest = ab_forest();
        let s = corpus_stats(&[inst(&forest, "A"), inst(&forest, "B")], &forest);
        assert_eq!((s.mentions, s.events, s.trees), (2, 2, 1));
        assert_eq!(s.avg_children, 1.0);
        assert_eq!(s.avg_effective_depth, 1.0);
    }

    #[test]
    fn root_only_mentions_give_zero_depth() {
        let forest = ab_forest();
        let s = corpus_stats(&[inst(&forest, "B")], &forest);
        assert_eq!(s.avg_effective_depth, 0.0);
    }

    #[test]
    fn empty_corpus_is_all_zero() {
        let mut events: Vec<Event> = Vec::new();
        let forest = build_forest(&mut events, &[], 3).unwrap();
        assert_eq!(corpus_stats(&[], &forest), CorpusStats::default());
    }
}
