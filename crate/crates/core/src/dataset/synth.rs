//! Synthetic corpora with planted hierarchy structure.
//!
//! Every event owns a handful of generated words: two form its title, the
//! rest its description. A mention's span is (part of) its anchor's title;
//! the surrounding context mixes filler words, a few words of the anchor
//! and of each ancestor, and, at the noise rate, words of sibling events.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Mention;
use crate::error::{Error, Result};
use crate::io;
use crate::kb::{Event, Property, RelationEdge, DEFAULT_MAX_HEIGHT, ENGLISH};
use crate::rng;

const WORDS_PER_EVENT: usize = 5;
const FILLER_WORDS: usize = 64;
const NOISE_SLOTS: usize = 4;
const ONSETS: &[&str] = &[
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "dr", "gl", "kr",
    "pl", "st", "tr", "sk",
];
const NUCLEI: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou", "ei"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_trees: usize,
    pub branching: usize,
    pub height: usize,
    pub mentions_per_event: usize,
    /// Size of the generated word list.
    pub vocab: usize,
    /// Probability that each noise slot receives a sibling's word.
    pub noise: f64,
    pub seed: u64,
    /// Extra events outside any hierarchy.
    pub singletons: usize,
    /// Probability that a child's description repeats its parent's title.
    pub parent_overlap: f64,
    /// Link the roots of consecutive tree pairs with follows edges.
    pub temporal_pairs: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_trees: 10,
            branching: 2,
            height: 2,
            mentions_per_event: 8,
            vocab: 4096,
            noise: 0.1,
            seed: 0,
            singletons: 0,
            parent_overlap: 0.0,
            temporal_pairs: false,
        }
    }
}

impl SynthConfig {
    pub fn event_count(&self) -> usize {
        let per_tree: usize = (0..=self.height).map(|l| self.branching.pow(l as u32)).sum();
        self.n_trees * per_tree + self.singletons
    }

    fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidConfig(m));
        if self.height > DEFAULT_MAX_HEIGHT {
            return fail(format!("height {} exceeds {DEFAULT_MAX_HEIGHT}", self.height));
        }
        if self.height > 0 && self.branching == 0 {
            return fail("branching must be positive when height > 0".into());
        }
        if !(0.0..=1.0).contains(&self.noise) || !(0.0..=1.0).contains(&self.parent_overlap) {
            return fail("noise and parent_overlap must lie in [0, 1]".into());
        }
        let needed = FILLER_WORDS + WORDS_PER_EVENT * self.event_count();
        if self.vocab < needed {
            return fail(format!("vocab {} too small, need at least {needed}", self.vocab));
        }
        if self.event_count() == 0 {
            return fail("corpus would contain no events".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub events: Vec<Event>,
    pub edges: Vec<RelationEdge>,
    pub mentions: Vec<Mention>,
}

impl SyntheticCorpus {
    pub fn write(&self, dir: &Path) -> Result<()> {
        io::write_jsonl(&dir.join("events.jsonl"), &self.events)?;
        io::write_jsonl(&dir.join("relations.jsonl"), &self.edges)?;
        io::write_jsonl(&dir.join("mentions.jsonl"), &self.mentions)
    }
}

struct Node {
    id: String,
    parent: Option<usize>,
    words: Vec<String>,
}

fn make_vocab(n: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut words = Vec::with_capacity(n);
    while words.len() < n {
        let syllables = rng.gen_range(2..=3);
        let word: String = (0..syllables)
            .map(|_| {
                let onset = ONSETS[rng.gen_range(0..ONSETS.len())];
                let nucleus = NUCLEI[rng.gen_range(0..NUCLEI.len())];
                format!("{onset}{nucleus}")
            })
            .collect();
        if seen.insert(word.clone()) {
            words.push(word);
        }
    }
    words
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn title_of(node: &Node) -> String {
    format!("{} {}", capitalize(&node.words[0]), capitalize(&node.words[1]))
}

pub fn generate_synthetic(config: &SynthConfig) -> Result<SyntheticCorpus> {
    config.validate()?;
    let mut rng = rng::substream(config.seed, rng::SYNTH);
    let mut vocab = make_vocab(config.vocab, &mut rng);
    let filler: Vec<String> = vocab.drain(..FILLER_WORDS).collect();
    vocab.shuffle(&mut rng);
    let mut pool = vocab.into_iter();
    let mut take_words = || -> Vec<String> { pool.by_ref().take(WORDS_PER_EVENT).collect() };

    let mut nodes: Vec<Node> = Vec::new();
    let mut roots = Vec::new();
    for t in 0..config.n_trees {
        let root = nodes.len();
        roots.push(root);
        nodes.push(Node {
            id: format!("T{t:03}"),
            parent: None,
            words: take_words(),
        });
        let mut frontier = vec![root];
        for _ in 0..config.height {
            let mut next = Vec::new();
            for &p in &frontier {
                for b in 0..config.branching {
                    let id = format!("{}.{}", nodes[p].id, b + 1);
                    nodes.push(Node {
                        id,
                        parent: Some(p),
                        words: take_words(),
                    });
                    next.push(nodes.len() - 1);
                }
            }
            frontier = next;
        }
    }
    for s in 0..config.singletons {
        nodes.push(Node {
            id: format!("S{s:03}"),
            parent: None,
            words: take_words(),
        });
    }

    let mut events = Vec::with_capacity(nodes.len());
    let mut edges = Vec::new();
    for (i, node) in nodes.iter().enumerate() {
        let mut description = node.words[2..].join(" ");
        if let Some(p) = node.parent {
            if rng.gen_bool(config.parent_overlap) {
                description = format!("{description} of {}", title_of(&nodes[p]).to_lowercase());
            }
            // Alternate the two equivalent encodings of a child edge.
            let edge = if i % 2 == 0 {
                RelationEdge::new(node.id.clone(), Property::PartOf, nodes[p].id.clone())
            } else {
                RelationEdge::new(nodes[p].id.clone(), Property::HasPart, node.id.clone())
            };
            edges.push(edge);
        }
        events.push(Event::new(node.id.clone(), ENGLISH, &title_of(node), &description));
    }
    if config.temporal_pairs {
        for pair in roots.chunks(2) {
            if let [a, b] = pair {
                edges.push(RelationEdge::new(
                    nodes[*b].id.clone(),
                    Property::Follows,
                    nodes[*a].id.clone(),
                ));
            }
        }
    }

    let siblings = |i: usize| -> Vec<usize> {
        (0..nodes.len())
            .filter(|&j| j != i && nodes[j].parent == nodes[i].parent)
            .collect()
    };

    let mut mentions = Vec::new();
    for (i, node) in nodes.iter().enumerate() {
        let sibs = siblings(i);
        for _ in 0..config.mentions_per_event {
            let mut words: Vec<String> = (0..rng.gen_range(5..=9))
                .map(|_| filler[rng.gen_range(0..filler.len())].clone())
                .collect();
            words.push(node.words[rng.gen_range(2..WORDS_PER_EVENT)].clone());
            let mut up = node.parent;
            while let Some(p) = up {
                let k = rng.gen_range(1..=2);
                words.extend(nodes[p].words.choose_multiple(&mut rng, k).cloned());
                up = nodes[p].parent;
            }
            for _ in 0..NOISE_SLOTS {
                if !sibs.is_empty() && rng.gen_bool(config.noise) {
                    let s = sibs[rng.gen_range(0..sibs.len())];
                    words.push(nodes[s].words[rng.gen_range(0..WORDS_PER_EVENT)].clone());
                }
            }
            words.shuffle(&mut rng);

            let span = if rng.gen_bool(0.5) {
                title_of(node)
            } else {
                capitalize(&node.words[rng.gen_range(0..2)])
            };
            let at = rng.gen_range(0..=words.len());
            let before = words[..at].join(" ");
            let after = words[at..].join(" ");
            let mut context = before.clone();
            if !context.is_empty() {
                context.push(' ');
            }
            let span_start = context.chars().count();
            context.push_str(&span);
            let span_end = context.chars().count();
            if !after.is_empty() {
                context.push(' ');
                context.push_str(&after);
            }
            mentions.push(Mention {
                id: format!("M{:06}", mentions.len()),
                language: ENGLISH.into(),
                context,
                span_start,
                span_end,
                anchor_event: node.id.clone(),
            });
        }
    }

    Ok(SyntheticCorpus {
        events,
        edges,
        mentions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::build_forest;

    #[test]
    fn two_binary_trees_of_height_two() {
        let cfg = SynthConfig {
            n_trees: 2,
            branching: 2,
            height: 2,
            ..SynthConfig::default()
        };
        let mut corpus = generate_synthetic(&cfg).unwrap();
        assert_eq!(corpus.events.len(), 14);
        assert_eq!(corpus.edges.len(), 12);
        let forest = build_forest(&mut corpus.events, &corpus.edges, 3).unwrap();
        assert_eq!(forest.roots().len(), 2);
        assert_eq!(corpus.mentions.len(), 14 * cfg.mentions_per_event);
        for m in &corpus.mentions {
            m.validate().unwrap();
        }
    }

    #[test]
    fn zero_mentions_per_event() {
        let cfg = SynthConfig {
            mentions_per_event: 0,
            ..SynthConfig::default()
        };
        let corpus = generate_synthetic(&cfg).unwrap();
        assert!(corpus.mentions.is_empty());
        assert_eq!(corpus.events.len(), 70);
    }

    #[test]
    fn fixed_seed_is_byte_identical() {
        let cfg = SynthConfig::default();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        generate_synthetic(&cfg).unwrap().write(a.path()).unwrap();
        generate_synthetic(&cfg).unwrap().write(b.path()).unwrap();
        for name in ["events.jsonl", "relations.jsonl", "mentions.jsonl"] {
            let x = std::fs::read(a.path().join(name)).unwrap();
            let y = std::fs::read(b.path().join(name)).unwrap();
            assert_eq!(x, y, "{name}");
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let tall = SynthConfig {
            height: 4,
            ..SynthConfig::default()
        };
        assert!(matches!(generate_synthetic(&tall), Err(Error::InvalidConfig(_))));
        let tiny = SynthConfig {
            vocab: 10,
            ..SynthConfig::default()
        };
        assert!(matches!(generate_synthetic(&tiny), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn mention_spans_cover_anchor_title_words() {
        let corpus = generate_synthetic(&SynthConfig::default()).unwrap();
        for m in corpus.mentions.iter().take(40) {
            let event = corpus.events.iter().find(|e| e.id == m.anchor_event).unwrap();
            let title = &event.label(ENGLISH).unwrap().title;
            assert!(title.contains(&m.span_text()));
        }
    }
}
