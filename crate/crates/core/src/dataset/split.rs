use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use petgraph::unionfind::UnionFind;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::kb::Kb;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidConfig(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.8,
            dev: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.dev, self.test];
        if parts.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::InvalidRatios(format!("{parts:?} must be non-negative")));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidRatios(format!("{parts:?} must sum to 1")));
        }
        Ok(())
    }

    fn get(&self, split: Split) -> f64 {
        match split {
            Split::Train => self.train,
            Split::Dev => self.dev,
            Split::Test => self.test,
        }
    }
}

/// Component membership of every event and the split of every component.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub components: BTreeMap<String, String>,
    pub splits: BTreeMap<String, Split>,
    pub seed: u64,
}

impl SplitAssignment {
    pub fn split_of(&self, event: &str) -> Option<Split> {
        self.components
            .get(event)
            .and_then(|c| self.splits.get(c))
            .copied()
    }

    pub fn events_in(&self, split: Split) -> impl Iterator<Item = &str> {
        self.components
            .iter()
            .filter(move |(_, c)| self.splits.get(*c) == Some(&split))
            .map(|(e, _)| e.as_str())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        io::read_json(path)
    }
}

/// Partitions events into train/dev/test so that no hierarchical or
/// temporal edge crosses a split.
///
/// Connected components come from union-find over all four edge
/// properties. Components are shuffled with the seed and handed, in that
/// order, to the split furthest below its event quota (train before dev
/// before test on ties).
pub fn split_components(kb: &Kb, ratios: SplitRatios, seed: u64) -> Result<SplitAssignment> {
    ratios.validate()?;
    if kb.is_empty() {
        return Err(Error::EmptyKb);
    }
    let ids: Vec<&str> = kb.ids().collect();
    let index: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();

    let mut uf = UnionFind::<usize>::new(ids.len());
    for edge in kb.edges() {
        let a = index[edge.subject.as_str()];
        let b = index[edge.object.as_str()];
        uf.union(a, b);
    }

    // Components numbered by their smallest member id.
    let mut comp_of_rep: BTreeMap<usize, usize> = BTreeMap::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    for i in 0..ids.len() {
        let rep = uf.find(i);
        let next = members.len();
        let c = *comp_of_rep.entry(rep).or_insert(next);
        if c == members.len() {
            members.push(Vec::new());
        }
        members[c].push(i);
    }
    let comp_name = |c: usize| format!("C{c:05}");

    let mut order: Vec<usize> = (0..members.len()).collect();
    order.shuffle(&mut rng::substream(seed, rng::SPLIT));

    let total = ids.len() as f64;
    let quota = Split::ALL.map(|s| ratios.get(s) * total);
    let mut counts = [0usize; 3];
    let mut splits = BTreeMap::new();
    for c in order {
        let slot = (0..3)
            .max_by(|&a, &b| {
                let da = quota[a] - counts[a] as f64;
                let db = quota[b] - counts[b] as f64;
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .unwrap_or(0);
        counts[slot] += members[c].len();
        splits.insert(comp_name(c), Split::ALL[slot]);
    }

    let mut components = BTreeMap::new();
    for (c, list) in members.iter().enumerate() {
        for &i in list {
            components.insert(ids[i].to_string(), comp_name(c));
        }
    }
    log::info!(
        "split {} events in {} components: train={} dev={} test={}",
        ids.len(),
        members.len(),
        counts[0],
        counts[1],
        counts[2]
    );
    Ok(SplitAssignment {
        components,
        splits,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::{Event, Property, RelationEdge, ENGLISH};

    fn kb(n: usize, edges: &[(usize, Property, usize)]) -> Kb {
        let events = (0..n)
            .map(|i| Event::new(format!("E{i:02}"), ENGLISH, "t", ""))
            .collect();
        let edges = edges
            .iter()
            .map(|(a, p, b)| RelationEdge::new(format!("E{a:02}"), *p, format!("E{b:02}")))
            .collect();
        Kb::new(events, edges).unwrap()
    }

    #[test]
    fn singletons_fill_quotas_exactly() {
        let kb = kb(10, &[]);
        let a = split_components(&kb, SplitRatios::default(), 0).unwrap();
        assert_eq!(a.splits.len(), 10);
        let count = |s| a.splits.values().filter(|v| **v == s).count();
        assert_eq!((count(Split::Train), count(Split::Dev), count(Split::Test)), (8, 1, 1));
    }

    #[test]
    fn temporal_edges_join_trees() {
        // Two trees (0<-1,0<-2) and (3<-4) joined by 3 follows 0.
        let kb = kb(
            6,
            &[
                (1, Property::PartOf, 0),
                (0, Property::HasPart, 2),
                (4, Property::PartOf, 3),
                (3, Property::Follows, 0),
            ],
        );
        let a = split_components(&kb, SplitRatios::default(), 3).unwrap();
        let c0 = &a.components["E00"];
        for i in 1..5 {
            assert_eq!(&a.components[&format!("E{i:02}")], c0);
        }
        assert_ne!(&a.components["E05"], c0);
        assert_eq!(a.splits.len(), 2);
    }

    #[test]
    fn ratios_and_empty_kb_validated() {
        let bad = SplitRatios {
            train: 0.5,
            dev: 0.1,
            test: 0.1,
        };
        assert!(matches!(
            split_components(&kb(3, &[]), bad, 0),
            Err(Error::InvalidRatios(_))
        ));
        assert!(matches!(
            split_components(&kb(0, &[]), SplitRatios::default(), 0),
            Err(Error::EmptyKb)
        ));
    }

    #[test]
    fn assignment_is_seed_deterministic_and_json_stable() {
        let kb = kb(20, &[(1, Property::PartOf, 0), (2, Property::FollowedBy, 1)]);
        let a = split_components(&kb, SplitRatios::default(), 9).unwrap();
        let b = split_components(&kb, SplitRatios::default(), 9).unwrap();
        assert_eq!(a, b);
        let json = serde_json::to_value(&a).unwrap();
        assert_eq!(json["seed"], 9);
        assert_eq!(json["components"]["E00"], json["components"]["E02"]);
        assert!(json["splits"]["C00000"].is_string());
    }
}
