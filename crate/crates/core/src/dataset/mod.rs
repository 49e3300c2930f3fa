//! Mentions, gold-set expansion, zero-shot splits, corpus statistics and
//! the synthetic corpus generator.

mod split;
mod stats;
mod synth;

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::kb::{build_forest, Event, HierarchyForest, Kb, RelationEdge};

pub use split::{split_components, Split, SplitAssignment, SplitRatios};
pub use stats::{corpus_stats, CorpusStats};
pub use synth::{generate_synthetic, SynthConfig, SyntheticCorpus};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub id: String,
    pub language: String,
    pub context: String,
    /// Character offset (not bytes), inclusive.
    pub span_start: usize,
    /// Character offset, exclusive.
    pub span_end: usize,
    pub anchor_event: String,
}

impl Mention {
    pub fn validate(&self) -> Result<()> {
        let len = self.context.chars().count();
        if self.span_start >= self.span_end || self.span_end > len {
            return Err(Error::InvalidMention {
                id: self.id.clone(),
                reason: format!(
                    "span [{}, {}) invalid for context of {len} chars",
                    self.span_start, self.span_end
                ),
            });
        }
        Ok(())
    }

    pub fn span_text(&self) -> String {
        self.context
            .chars()
            .skip(self.span_start)
            .take(self.span_end - self.span_start)
            .collect()
    }
}

/// A mention paired with its gold event set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundingInstance {
    pub mention: Mention,
    pub gold_set: BTreeSet<String>,
    pub atomic_event: String,
}

/// Gold set = the anchor's ancestor chain, as a set.
pub fn expand_gold(mention: &Mention, forest: &HierarchyForest) -> Result<GroundingInstance> {
    let chain = forest.ancestor_chain(&mention.anchor_event)?;
    Ok(GroundingInstance {
        mention: mention.clone(),
        gold_set: chain.into_iter().collect(),
        atomic_event: mention.anchor_event.clone(),
    })
}

pub fn load_mentions(path: &Path) -> Result<Vec<Mention>> {
    let mentions: Vec<Mention> = io::read_jsonl(path)?;
    let mut seen = BTreeSet::new();
    for m in &mentions {
        m.validate()?;
        if !seen.insert(m.id.as_str()) {
            return Err(Error::InvalidMention {
                id: m.id.clone(),
                reason: "duplicate id".into(),
            });
        }
    }
    Ok(mentions)
}

/// Validates anchors against the KB and expands every gold set.
pub fn build_instances(
    mentions: &[Mention],
    kb: &Kb,
    forest: &HierarchyForest,
) -> Result<Vec<GroundingInstance>> {
    mentions
        .iter()
        .map(|m| {
            kb.event(&m.anchor_event)?;
            expand_gold(m, forest)
        })
        .collect()
}

/// Keeps the instances whose anchor lies in `split`; the rest are dropped
/// and counted in the log.
pub fn instances_in_split(
    instances: &[GroundingInstance],
    assignment: &SplitAssignment,
    split: Split,
) -> Vec<GroundingInstance> {
    let mut dropped = 0usize;
    let kept: Vec<GroundingInstance> = instances
        .iter()
        .filter(|inst| {
            let keep = assignment.split_of(&inst.atomic_event) == Some(split);
            if !keep {
                dropped += 1;
            }
            keep
        })
        .cloned()
        .collect();
    log::info!(
        "{split}: kept {} mentions, dropped {dropped} anchored outside the split",
        kept.len()
    );
    kept
}

/// The forest over one split's events only, so training never sees the
/// hierarchy of held-out events. Components never straddle splits, hence
/// no edge is cut.
pub fn split_forest(
    kb: &Kb,
    assignment: &SplitAssignment,
    split: Split,
    max_height: usize,
) -> Result<HierarchyForest> {
    let inside = |id: &str| assignment.split_of(id) == Some(split);
    let mut events: Vec<Event> = kb.events().filter(|e| inside(&e.id)).cloned().collect();
    let edges: Vec<RelationEdge> = kb
        .edges()
        .iter()
        .filter(|e| inside(&e.subject) && inside(&e.object))
        .cloned()
        .collect();
    build_forest(&mut events, &edges, max_height)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolMode {
    Training,
    Inference,
}

/// Events presented as candidates.
///
/// Training uses only in-hierarchy events (restricted to `active` when
/// given); inference uses every event in the KB, singletons included.
pub fn candidate_pool(
    kb: &Kb,
    forest: &HierarchyForest,
    mode: PoolMode,
    active: Option<(&SplitAssignment, Split)>,
) -> BTreeSet<String> {
    match mode {
        PoolMode::Inference => kb.ids().map(str::to_string).collect(),
        PoolMode::Training => kb
            .ids()
            .filter(|id| forest.in_hierarchy(id))
            .filter(|id| match active {
                Some((assignment, split)) => assignment.split_of(id) == Some(split),
                None => true,
            })
            .map(str::to_string)
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::{build_forest, Event, Property, RelationEdge, ENGLISH};

    fn mention(id: &str, anchor: &str) -> Mention {
        Mention {
            id: id.into(),
            language: ENGLISH.into(),
            context: "the Falaise Gap closed".into(),
            span_start: 4,
            span_end: 15,
            anchor_event: anchor.into(),
        }
    }

    fn normandy() -> (Kb, HierarchyForest) {
        let events = ["Q602744", "Q8641370", "Q216184", "S1", "S2", "S3"]
            .iter()
            .map(|id| Event::new(*id, ENGLISH, id, ""))
            .collect();
        let edges = vec![
            RelationEdge::new("Q8641370", Property::PartOf, "Q216184"),
            RelationEdge::new("Q8641370", Property::HasPart, "Q602744"),
        ];
        let mut kb = Kb::new(events, edges).unwrap();
        let forest = kb.build_forest(3).unwrap();
        (kb, forest)
    }

    #[test]
    fn gold_set_is_ancestor_closure() {
        let (_, forest) = normandy();
        let g = expand_gold(&mention("m", "Q602744"), &forest).unwrap();
        assert_eq!(
            g.gold_set,
            ["Q602744", "Q8641370", "Q216184"].iter().map(|s| s.to_string()).collect()
        );
        assert_eq!(g.atomic_event, "Q602744");
        let g = expand_gold(&mention("m", "Q8641370"), &forest).unwrap();
        assert_eq!(
            g.gold_set,
            ["Q8641370", "Q216184"].iter().map(|s| s.to_string()).collect()
        );
        let g = expand_gold(&mention("m", "Q216184"), &forest).unwrap();
        assert_eq!(g.gold_set.len(), 1);
        assert!(matches!(
            expand_gold(&mention("m", "nope"), &forest),
            Err(Error::UnknownEvent(_))
        ));
    }

    #[test]
    fn span_validation_uses_characters() {
        let mut m = mention("m", "Q1");
        m.context = "Überfall".into();
        m.span_start = 0;
        m.span_end = 8;
        assert!(m.validate().is_ok());
        assert_eq!(m.span_text(), "Überfall");
        m.span_end = 9;
        assert!(m.validate().is_err());
        m.span_end = 0;
        assert!(m.validate().is_err());
    }

    #[test]
    fn pools_by_mode() {
        let mut events: Vec<Event> = (0..8)
            .map(|i| Event::new(format!("E{i}"), ENGLISH, "t", ""))
            .collect();
        let edges = vec![
            RelationEdge::new("E1", Property::PartOf, "E0"),
            RelationEdge::new("E2", Property::PartOf, "E0"),
            RelationEdge::new("E4", Property::PartOf, "E3"),
        ];
        build_forest(&mut events, &edges, 3).unwrap();
        let mut kb = Kb::new(events, edges).unwrap();
        let forest = kb.build_forest(3).unwrap();
        assert_eq!(candidate_pool(&kb, &forest, PoolMode::Inference, None).len(), 8);
        assert_eq!(candidate_pool(&kb, &forest, PoolMode::Training, None).len(), 5);
    }

    #[test]
    fn split_forest_keeps_only_that_split() {
        let (kb, _) = normandy();
        let assignment = split_components(&kb, SplitRatios::default(), 0).unwrap();
        let chain_split = assignment.split_of("Q602744").unwrap();
        let forest = split_forest(&kb, &assignment, chain_split, 3).unwrap();
        assert_eq!(forest.edge_count(), 2);
        for other in Split::ALL.into_iter().filter(|s| *s != chain_split) {
            let forest = split_forest(&kb, &assignment, other, 3).unwrap();
            assert_eq!(forest.edge_count(), 0);
            assert!(!forest.contains("Q602744"));
        }
    }
}
