//! Event knowledge base: events, typed relation edges, and the hierarchy
//! forest built from part-of / has-part edges.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

pub const ENGLISH: &str = "en";
pub const DEFAULT_MAX_HEIGHT: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Label {
    pub title: String,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub id: String,
    pub labels: BTreeMap<String, Label>,
    /// Set by [`build_forest`]; not part of the on-disk format.
    #[serde(skip)]
    pub in_hierarchy: bool,
}

impl Event {
    pub fn new(id: impl Into<String>, language: &str, title: &str, description: &str) -> Self {
        let mut labels = BTreeMap::new();
        labels.insert(
            language.to_string(),
            Label {
                title: title.to_string(),
                description: description.to_string(),
            },
        );
        Event {
            id: id.into(),
            labels,
            in_hierarchy: false,
        }
    }

    pub fn label(&self, language: &str) -> Option<&Label> {
        self.labels.get(language)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Property {
    #[serde(rename = "P527")]
    HasPart,
    #[serde(rename = "P361")]
    PartOf,
    #[serde(rename = "P155")]
    Follows,
    #[serde(rename = "P156")]
    FollowedBy,
}

impl Property {
    pub fn is_hierarchical(self) -> bool {
        matches!(self, Property::HasPart | Property::PartOf)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RelationEdge {
    pub subject: String,
    pub property: Property,
    pub object: String,
}

impl RelationEdge {
    pub fn new(subject: impl Into<String>, property: Property, object: impl Into<String>) -> Self {
        RelationEdge {
            subject: subject.into(),
            property,
            object: object.into(),
        }
    }

    /// `(child, parent)` for hierarchical edges, `None` for temporal ones.
    pub fn child_parent(&self) -> Option<(&str, &str)> {
        match self.property {
            Property::PartOf => Some((&self.subject, &self.object)),
            Property::HasPart => Some((&self.object, &self.subject)),
            Property::Follows | Property::FollowedBy => None,
        }
    }
}

/// Events plus every raw relation edge, as loaded from disk.
#[derive(Debug, Clone, Default)]
pub struct Kb {
    events: BTreeMap<String, Event>,
    edges: Vec<RelationEdge>,
}

impl Kb {
    pub fn new(events: Vec<Event>, edges: Vec<RelationEdge>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for event in events {
            validate_event(&event)?;
            let id = event.id.clone();
            if map.insert(id.clone(), event).is_some() {
                return Err(Error::InvalidEvent(format!("duplicate id `{id}`")));
            }
        }
        for edge in &edges {
            check_edge(&map, edge)?;
        }
        Ok(Kb { events: map, edges })
    }

    pub fn load(events_path: &Path, relations_path: &Path) -> Result<Self> {
        let events: Vec<Event> = io::read_jsonl(events_path)?;
        let edges: Vec<RelationEdge> = io::read_jsonl(relations_path)?;
        Kb::new(events, edges)
    }

    pub fn event(&self, id: &str) -> Result<&Event> {
        self.events
            .get(id)
            .ok_or_else(|| Error::UnknownEvent(id.to_string()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.events.contains_key(id)
    }

    /// Events in ascending id order.
    pub fn events(&self) -> impl Iterator<Item = &Event> {
        self.events.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.events.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn edges(&self) -> &[RelationEdge] {
        &self.edges
    }

    /// Builds the forest and marks `in_hierarchy` on the stored events.
    pub fn build_forest(&mut self, max_height: usize) -> Result<HierarchyForest> {
        let mut events: Vec<Event> = std::mem::take(&mut self.events).into_values().collect();
        let result = build_forest(&mut events, &self.edges, max_height);
        self.events = events.into_iter().map(|e| (e.id.clone(), e)).collect();
        result
    }
}

fn validate_event(event: &Event) -> Result<()> {
    if event.id.is_empty() {
        return Err(Error::InvalidEvent("empty id".into()));
    }
    if event.labels.is_empty() {
        return Err(Error::InvalidEvent(format!("`{}` has no labels", event.id)));
    }
    Ok(())
}

fn check_edge<V>(known: &BTreeMap<String, V>, edge: &RelationEdge) -> Result<()> {
    if edge.subject == edge.object {
        return Err(Error::SelfLoop(edge.subject.clone()));
    }
    for id in [&edge.subject, &edge.object] {
        if !known.contains_key(id) {
            return Err(Error::UnknownEvent(id.clone()));
        }
    }
    Ok(())
}

/// Child→parent tree structure over the events of a KB.
///
/// `roots` holds only roots of trees with height ≥ 1; events without any
/// hierarchical edge are kept separately in `singletons`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyForest {
    parent: BTreeMap<String, String>,
    children: BTreeMap<String, Vec<String>>,
    roots: BTreeSet<String>,
    singletons: BTreeSet<String>,
    max_height: usize,
}

/// Builds the hierarchy forest from `edges`.
///
/// `e1 HAS_PART e2` and `e2 PART_OF e1` both become the child edge
/// `e2 → e1`. Temporal edges are validated but otherwise ignored.
/// `in_hierarchy` is set on exactly the events that end up in a tree of
/// height ≥ 1.
pub fn build_forest(
    events: &mut [Event],
    edges: &[RelationEdge],
    max_height: usize,
) -> Result<HierarchyForest> {
    if max_height == 0 {
        return Err(Error::InvalidConfig("max_height must be positive".into()));
    }
    let mut known: BTreeMap<String, ()> = BTreeMap::new();
    for event in events.iter() {
        validate_event(event)?;
        if known.insert(event.id.clone(), ()).is_some() {
            return Err(Error::InvalidEvent(format!("duplicate id `{}`", event.id)));
        }
    }

    let mut pairs: BTreeSet<(&str, &str)> = BTreeSet::new();
    for edge in edges {
        check_edge(&known, edge)?;
        if let Some(pair) = edge.child_parent() {
            pairs.insert(pair);
        }
    }

    let mut parent: BTreeMap<String, String> = BTreeMap::new();
    for (child, par) in &pairs {
        if let Some(first) = parent.get(*child) {
            return Err(Error::MultipleParents {
                child: child.to_string(),
                first: first.clone(),
                second: par.to_string(),
            });
        }
        parent.insert(child.to_string(), par.to_string());
    }

    if let Some(cycle) = find_cycle(&parent) {
        return Err(Error::CycleDetected(cycle));
    }

    let mut children: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (child, par) in &parent {
        children.entry(par.clone()).or_default().push(child.clone());
    }
    for list in children.values_mut() {
        list.sort();
    }

    let roots: BTreeSet<String> = children
        .keys()
        .filter(|id| !parent.contains_key(*id))
        .cloned()
        .collect();
    let singletons: BTreeSet<String> = known
        .keys()
        .filter(|id| !parent.contains_key(*id) && !children.contains_key(*id))
        .cloned()
        .collect();

    let forest = HierarchyForest {
        parent,
        children,
        roots,
        singletons,
        max_height,
    };

    for id in forest.parent.keys() {
        let depth = forest.depth_unchecked(id);
        if depth > max_height {
            return Err(Error::HeightExceeded {
                event: id.clone(),
                depth,
                max_height,
            });
        }
    }

    for event in events.iter_mut() {
        event.in_hierarchy = forest.in_hierarchy(&event.id);
    }
    Ok(forest)
}

/// Walks parent pointers from every node in id order and returns the first
/// cycle encountered, listed in traversal order.
fn find_cycle(parent: &BTreeMap<String, String>) -> Option<Vec<String>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Active,
        Done,
    }
    let mut marks: BTreeMap<&str, Mark> = BTreeMap::new();
    for start in parent.keys() {
        if marks.contains_key(start.as_str()) {
            continue;
        }
        let mut path: Vec<&str> = Vec::new();
        let mut cur = Some(start.as_str());
        while let Some(node) = cur {
            match marks.get(node) {
                Some(Mark::Done) => break,
                Some(Mark::Active) => {
                    let pos = path.iter().position(|n| *n == node).unwrap_or(0);
                    return Some(path[pos..].iter().map(|s| s.to_string()).collect());
                }
                None => {
                    marks.insert(node, Mark::Active);
                    path.push(node);
                    cur = parent.get(node).map(String::as_str);
                }
            }
        }
        for node in path {
            marks.insert(node, Mark::Done);
        }
    }
    None
}

impl HierarchyForest {
    pub fn max_height(&self) -> usize {
        self.max_height
    }

    pub fn parent(&self, id: &str) -> Option<&str> {
        self.parent.get(id).map(String::as_str)
    }

    /// Children sorted by id; empty for leaves and unknown ids.
    pub fn children(&self, id: &str) -> &[String] {
        self.children.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn roots(&self) -> &BTreeSet<String> {
        &self.roots
    }

    pub fn singletons(&self) -> &BTreeSet<String> {
        &self.singletons
    }

    pub fn parent_map(&self) -> &BTreeMap<String, String> {
        &self.parent
    }

    pub fn children_map(&self) -> &BTreeMap<String, Vec<String>> {
        &self.children
    }

    pub fn contains(&self, id: &str) -> bool {
        self.parent.contains_key(id) || self.roots.contains(id) || self.singletons.contains(id)
    }

    pub fn in_hierarchy(&self, id: &str) -> bool {
        self.parent.contains_key(id) || self.roots.contains(id)
    }

    pub fn is_root(&self, id: &str) -> bool {
        self.roots.contains(id)
    }

    /// Number of child→parent edges.
    pub fn edge_count(&self) -> usize {
        self.parent.len()
    }

    /// `(child, parent)` pairs in child-id order.
    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.parent.iter().map(|(c, p)| (c.as_str(), p.as_str()))
    }

    /// All known event ids, sorted.
    pub fn nodes(&self) -> BTreeSet<&str> {
        self.parent
            .keys()
            .chain(self.roots.iter())
            .chain(self.singletons.iter())
            .map(String::as_str)
            .collect()
    }

    fn depth_unchecked(&self, id: &str) -> usize {
        let mut depth = 0;
        let mut cur = id;
        while let Some(p) = self.parent.get(cur) {
            depth += 1;
            cur = p;
        }
        depth
    }

    /// Edges between `id` and its root.
    pub fn depth(&self, id: &str) -> Result<usize> {
        if !self.contains(id) {
            return Err(Error::UnknownEvent(id.to_string()));
        }
        Ok(self.depth_unchecked(id))
    }

    /// `[id, parent(id), ..., root]`.
    pub fn ancestor_chain(&self, id: &str) -> Result<Vec<String>> {
        if !self.contains(id) {
            return Err(Error::UnknownEvent(id.to_string()));
        }
        let mut chain = vec![id.to_string()];
        let mut cur = id;
        while let Some(p) = self.parent.get(cur) {
            chain.push(p.clone());
            cur = p;
        }
        Ok(chain)
    }

    pub fn root_of(&self, id: &str) -> Result<String> {
        let chain = self.ancestor_chain(id)?;
        Ok(chain.last().cloned().unwrap_or_default())
    }

    /// Height of the tree rooted at `root` (0 for singletons).
    pub fn tree_height(&self, root: &str) -> usize {
        self.children(root)
            .iter()
            .map(|c| 1 + self.tree_height(c))
            .max()
            .unwrap_or(0)
    }

    /// Every node of the tree rooted at `root`, in pre-order.
    pub fn tree_nodes(&self, root: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut stack = vec![root.to_string()];
        while let Some(node) = stack.pop() {
            for child in self.children(&node).iter().rev() {
                stack.push(child.clone());
            }
            out.push(node);
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        io::read_json(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(id: &str) -> Event {
        Event::new(id, ENGLISH, id, "")
    }

    fn part_of(c: &str, p: &str) -> RelationEdge {
        RelationEdge::new(c, Property::PartOf, p)
    }

    fn normandy() -> (Vec<Event>, Vec<RelationEdge>) {
        let events = ["Q602744", "Q8641370", "Q216184", "Q1"]
            .iter()
            .map(|id| ev(id))
            .collect();
        let edges = vec![part_of("Q8641370", "Q216184"), part_of("Q602744", "Q8641370")];
        (events, edges)
    }

    #[test]
    fn part_of_chain_builds_single_tree() {
        let (mut events, edges) = normandy();
        let forest = build_forest(&mut events, &edges, 3).unwrap();
        assert_eq!(forest.parent("Q602744"), Some("Q8641370"));
        assert_eq!(forest.parent("Q8641370"), Some("Q216184"));
        assert_eq!(forest.roots().iter().collect::<Vec<_>>(), vec!["Q216184"]);
        assert_eq!(
            forest.ancestor_chain("Q602744").unwrap(),
            vec!["Q602744", "Q8641370", "Q216184"]
        );
        assert_eq!(forest.ancestor_chain("Q216184").unwrap(), vec!["Q216184"]);
        assert_eq!(forest.ancestor_chain("Q1").unwrap(), vec!["Q1"]);
        let flags: Vec<bool> = events.iter().map(|e| e.in_hierarchy).collect();
        assert_eq!(flags, vec![true, true, true, false]);
    }

    #[test]
    fn empty_edges_yield_singletons_only() {
        let (mut events, _) = normandy();
        let forest = build_forest(&mut events, &[], 3).unwrap();
        assert!(forest.parent_map().is_empty());
        assert!(forest.roots().is_empty());
        assert_eq!(forest.singletons().len(), 4);
        assert!(events.iter().all(|e| !e.in_hierarchy));
    }

    #[test]
    fn has_part_and_part_of_deduplicate() {
        let mut events = vec![ev("A"), ev("B")];
        let edges = vec![
            part_of("A", "B"),
            RelationEdge::new("B", Property::HasPart, "A"),
        ];
        let forest = build_forest(&mut events, &edges, 3).unwrap();
        assert_eq!(forest.edge_count(), 1);
        assert_eq!(forest.parent("A"), Some("B"));
        assert_eq!(forest.children("B"), &["A".to_string()]);
    }

    #[test]
    fn temporal_edges_are_ignored() {
        let mut events = vec![ev("A"), ev("B")];
        let edges = vec![RelationEdge::new("A", Property::Follows, "B")];
        let forest = build_forest(&mut events, &edges, 3).unwrap();
        assert_eq!(forest.edge_count(), 0);
        assert_eq!(forest.singletons().len(), 2);
    }

    #[test]
    fn cycle_is_reported() {
        let mut events = vec![ev("A"), ev("B"), ev("C")];
        let edges = vec![part_of("A", "B"), part_of("B", "C"), part_of("C", "A")];
        match build_forest(&mut events, &edges, 3) {
            Err(Error::CycleDetected(cycle)) => {
                assert_eq!(cycle, vec!["A", "B", "C"]);
            }
            other => panic!("expected cycle, got {other:?}"),
        }
    }

    #[test]
    fn multiple_parents_rejected() {
        let mut events = vec![ev("A"), ev("B"), ev("C")];
        let edges = vec![part_of("A", "C"), part_of("A", "B")];
        match build_forest(&mut events, &edges, 3) {
            Err(Error::MultipleParents {
                child,
                first,
                second,
            }) => {
                assert_eq!((child.as_str(), first.as_str(), second.as_str()), ("A", "B", "C"));
            }
            other => panic!("expected MultipleParents, got {other:?}"),
        }
    }

    #[test]
    fn height_limit_enforced() {
        let mut events: Vec<Event> = ["A", "B", "C", "D", "E"].iter().map(|i| ev(i)).collect();
        let edges = vec![
            part_of("A", "B"),
            part_of("B", "C"),
            part_of("C", "D"),
            part_of("D", "E"),
        ];
        assert!(matches!(
            build_forest(&mut events, &edges, 3),
            Err(Error::HeightExceeded { depth: 4, .. })
        ));
        assert!(build_forest(&mut events, &edges, 4).is_ok());
    }

    #[test]
    fn unknown_and_self_loop_edges_rejected() {
        let mut events = vec![ev("A")];
        assert!(matches!(
            build_forest(&mut events, &[part_of("A", "Z")], 3),
            Err(Error::UnknownEvent(id)) if id == "Z"
        ));
        assert!(matches!(
            build_forest(&mut events, &[part_of("A", "A")], 3),
            Err(Error::SelfLoop(_))
        ));
        let forest = build_forest(&mut events, &[], 3).unwrap();
        assert!(matches!(forest.ancestor_chain("nope"), Err(Error::UnknownEvent(_))));
    }

    #[test]
    fn forest_round_trips_through_json() {
        let (mut events, edges) = normandy();
        let forest = build_forest(&mut events, &edges, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("forest.json");
        forest.save(&path).unwrap();
        assert_eq!(HierarchyForest::load(&path).unwrap(), forest);
    }

    #[test]
    fn edge_json_uses_property_codes() {
        let edge: RelationEdge =
            serde_json::from_str(r#"{"subject":"Q1","property":"P527","object":"Q2"}"#).unwrap();
        assert_eq!(edge.child_parent(), Some(("Q2", "Q1")));
        let text = serde_json::to_string(&part_of("a", "b")).unwrap();
        assert_eq!(text, r#"{"subject":"a","property":"P361","object":"b"}"#);
    }

    /// Random forest edges: node i > 0 may attach to a parent with a smaller index.
    fn random_tree_edges() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
        (2usize..14).prop_flat_map(|n| {
            let parents = proptest::collection::vec(proptest::option::of(0usize..1000), n - 1);
            (Just(n), parents).prop_map(|(n, ps)| {
                let edges = ps
                    .into_iter()
                    .enumerate()
                    .filter_map(|(i, p)| p.map(|p| (i + 1, p % (i + 1))))
                    .collect::<Vec<_>>();
                (n, edges)
            })
        })
    }

    proptest! {
        #[test]
        fn chain_of_parent_is_tail_of_chain((n, edges) in random_tree_edges(), seed in any::<u64>()) {
            let mut events: Vec<Event> = (0..n).map(|i| ev(&format!("E{i:02}"))).collect();
            let mut rel: Vec<RelationEdge> = edges
                .iter()
                .map(|(c, p)| part_of(&format!("E{c:02}"), &format!("E{p:02}")))
                .collect();
            let forest = build_forest(&mut events, &rel, 64).unwrap();
            for (child, parent) in forest.edges() {
                let chain = forest.ancestor_chain(child).unwrap();
                prop_assert_eq!(&chain[1..], &forest.ancestor_chain(parent).unwrap()[..]);
            }
            for (parent, kids) in forest.children_map() {
                for kid in kids {
                    prop_assert_eq!(forest.parent(kid), Some(parent.as_str()));
                }
            }
            // order insensitivity
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            rel.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let again = build_forest(&mut events, &rel, 64).unwrap();
            prop_assert_eq!(again, forest);
        }
    }
}
