//! Bi-encoder training with the optional hierarchy-aware loss.

mod checkpoint;
mod complex;
mod gradcheck;
mod loss;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::GroundingInstance;
use crate::encoder::{
    featurize_event, featurize_mention, EncoderParams, FeatureVector, FeaturizerConfig,
    LanguageMode, DEFAULT_DIM,
};
use crate::error::{Error, Result};
use crate::io;
use crate::kb::{HierarchyForest, Kb, ENGLISH};
use crate::rng;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointHeader, CHECKPOINT_VERSION};
pub use complex::{complex_score, score_projected, ComplExHead, Projection};
pub use gradcheck::{gradient_check, GradCheckReport, LossKind, ProbeConfig};
pub use loss::{
    bce_with_logit, hierarchy_loss, linking_loss, sigmoid, BatchEvent, BatchMention, EncoderGrad,
    HierarchyLoss, HierarchyPair, LinkingBatch, LinkingLoss, TowerGrad,
};

pub const INIT_SCALE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Strategy {
    /// Linking loss only.
    Baseline,
    /// Hierarchy-loss pretraining, then linking loss.
    Hp,
    /// Linking plus weighted hierarchy loss at every step.
    Hjl,
    /// Hierarchy-loss pretraining, then joint training.
    HpHjl,
}

impl Strategy {
    pub fn uses_hierarchy(self) -> bool {
        self != Strategy::Baseline
    }

    fn pretrains(self) -> bool {
        matches!(self, Strategy::Hp | Strategy::HpHjl)
    }

    fn joint(self) -> bool {
        matches!(self, Strategy::Hjl | Strategy::HpHjl)
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace(['-', '+'], "_").as_str() {
            "BASELINE" => Ok(Strategy::Baseline),
            "HP" => Ok(Strategy::Hp),
            "HJL" => Ok(Strategy::Hjl),
            "HP_HJL" => Ok(Strategy::HpHjl),
            _ => Err(Error::InvalidConfig(format!("unknown strategy `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub strategy: Strategy,
    pub learning_rate: f64,
    /// Epochs with the linking loss (joint for HJL / HP_HJL), after any pretraining.
    pub epochs: usize,
    /// Mention–event pairs per linking step.
    pub batch_size: usize,
    /// Parent–child pairs per hierarchy step (`N_h`).
    pub hier_batch_size: usize,
    pub hier_loss_weight: f64,
    /// Hierarchy-only epochs run first by HP and HP_HJL.
    pub pretrain_epochs: usize,
    pub seed: u64,
    pub dim: usize,
    pub mode: LanguageMode,
    pub featurizer: FeaturizerConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            strategy: Strategy::Baseline,
            learning_rate: 40.0,
            epochs: 30,
            batch_size: 64,
            hier_batch_size: 128,
            hier_loss_weight: 0.01,
            pretrain_epochs: 1,
            seed: 0,
            dim: DEFAULT_DIM,
            mode: LanguageMode::Crosslingual,
            featurizer: FeaturizerConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive");
        }
        if self.batch_size == 0 || self.hier_batch_size == 0 || self.dim == 0 {
            return fail("batch sizes and dim must be positive");
        }
        if !(self.hier_loss_weight >= 0.0 && self.hier_loss_weight.is_finite()) {
            return fail("hier_loss_weight must be non-negative");
        }
        if self.featurizer.features == 0 {
            return fail("feature dimension must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// `None` during hierarchy-only pretraining.
    pub linking_loss: Option<f64>,
    pub hierarchy_loss: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    /// Linking loss of every linking step, in order.
    pub step_linking_losses: Vec<f64>,
    pub degenerate_batches: usize,
}

impl TrainLog {
    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_jsonl(path, &self.epochs)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub params: EncoderParams,
    pub head: ComplExHead,
    pub log: TrainLog,
}

/// Memoized event features keyed by (event id, label language).
pub struct EventFeatures<'a> {
    kb: &'a Kb,
    mode: LanguageMode,
    config: FeaturizerConfig,
    cache: BTreeMap<(String, String), FeatureVector>,
}

impl<'a> EventFeatures<'a> {
    pub fn new(kb: &'a Kb, mode: LanguageMode, config: FeaturizerConfig) -> Self {
        EventFeatures {
            kb,
            mode,
            config,
            cache: BTreeMap::new(),
        }
    }

    pub fn get(&mut self, id: &str, language: &str) -> Result<FeatureVector> {
        let lang = match self.mode {
            LanguageMode::Crosslingual => ENGLISH,
            LanguageMode::Multilingual => language,
        };
        let key = (id.to_string(), lang.to_string());
        if let Some(fv) = self.cache.get(&key) {
            return Ok(fv.clone());
        }
        let fv = featurize_event(self.kb.event(id)?, lang, self.mode, &self.config)?;
        self.cache.insert(key, fv.clone());
        Ok(fv)
    }
}

fn apply_tower(w: &mut [f64], dim: usize, grad: &TowerGrad, lr: f64) {
    for (row, g) in &grad.rows {
        let slot = &mut w[*row as usize * dim..(*row as usize + 1) * dim];
        for (x, gk) in slot.iter_mut().zip(g) {
            *x -= lr * gk;
        }
    }
}

fn apply_head(head: &mut ComplExHead, grad: &ComplExHead, scale: f64) {
    for (p, g) in head.blocks_mut().into_iter().zip(grad.blocks()) {
        for (x, gk) in p.iter_mut().zip(g.1) {
            *x -= scale * gk;
        }
    }
}

/// Adds `weight * extra` into `base`, row by row.
fn merge_tower(base: &mut TowerGrad, extra: &TowerGrad, weight: f64) {
    for (row, g) in &extra.rows {
        let slot = base.rows.entry(*row).or_insert_with(|| vec![0.0; g.len()]);
        for (x, gk) in slot.iter_mut().zip(g) {
            *x += weight * gk;
        }
    }
}

struct Trainer<'a> {
    config: &'a TrainConfig,
    params: EncoderParams,
    head: ComplExHead,
    edges: Vec<(String, String)>,
    mention_fvs: Vec<FeatureVector>,
    instances: &'a [GroundingInstance],
    events: EventFeatures<'a>,
    batching: rand_chacha::ChaCha8Rng,
    hierarchy: rand_chacha::ChaCha8Rng,
    log: TrainLog,
}

impl Trainer<'_> {
    fn hierarchy_pairs(&mut self, edges: &[(String, String)]) -> Result<Vec<HierarchyPair>> {
        edges
            .iter()
            .map(|(child, parent)| {
                Ok(HierarchyPair {
                    parent_id: parent.clone(),
                    parent: self.events.get(parent, ENGLISH)?,
                    child_id: child.clone(),
                    child: self.events.get(child, ENGLISH)?,
                })
            })
            .collect()
    }

    fn sample_hierarchy_batch(&mut self) -> Result<Vec<HierarchyPair>> {
        let n = self.config.hier_batch_size.min(self.edges.len());
        let sample: Vec<(String, String)> = self
            .edges
            .choose_multiple(&mut self.hierarchy, n)
            .cloned()
            .collect();
        self.hierarchy_pairs(&sample)
    }

    fn pretrain_epoch(&mut self, epoch: usize) -> Result<()> {
        let mut order = self.edges.clone();
        order.shuffle(&mut self.hierarchy);
        let mut total = 0.0;
        let mut steps = 0usize;
        for chunk in order.chunks(self.config.hier_batch_size) {
            let pairs = self.hierarchy_pairs(chunk)?;
            let out = hierarchy_loss(&self.params, &self.head, &pairs)?;
            if !out.loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            if out.degenerate {
                self.log.degenerate_batches += 1;
            }
            let lr = self.config.learning_rate;
            apply_tower(&mut self.params.event, self.params.dim, &out.grad.event, lr);
            apply_head(&mut self.head, &out.head_grad, lr);
            total += out.loss;
            steps += 1;
        }
        self.log.epochs.push(EpochLog {
            epoch,
            linking_loss: None,
            hierarchy_loss: Some(total / steps.max(1) as f64),
        });
        Ok(())
    }

    fn linking_batch(&mut self, pairs: &[(usize, String)]) -> Result<LinkingBatch> {
        let mut seen = BTreeSet::new();
        let mut mentions = Vec::new();
        let mut events = Vec::new();
        for (idx, event_id) in pairs {
            let inst = &self.instances[*idx];
            if seen.insert(*idx) {
                mentions.push(BatchMention {
                    features: self.mention_fvs[*idx].clone(),
                    gold: inst.gold_set.clone(),
                });
            }
            events.push(BatchEvent {
                id: event_id.clone(),
                features: self.events.get(event_id, &inst.mention.language)?,
            });
        }
        Ok(LinkingBatch::new(mentions, events))
    }

    fn linking_epoch(&mut self, epoch: usize, joint: bool) -> Result<()> {
        let mut pairs: Vec<(usize, String)> = self
            .instances
            .iter()
            .enumerate()
            .flat_map(|(i, inst)| inst.gold_set.iter().map(move |e| (i, e.clone())))
            .collect();
        pairs.shuffle(&mut self.batching);

        let lr = self.config.learning_rate;
        let weight = self.config.hier_loss_weight;
        let (mut link_total, mut hier_total, mut steps) = (0.0, 0.0, 0usize);
        for chunk in pairs.chunks(self.config.batch_size) {
            let batch = self.linking_batch(chunk)?;
            let mut out = linking_loss(&self.params, &batch)?;
            if !out.loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            if out.degenerate {
                self.log.degenerate_batches += 1;
            }
            self.log.step_linking_losses.push(out.loss);
            link_total += out.loss;
            if joint {
                let hier_pairs = self.sample_hierarchy_batch()?;
                let hier = hierarchy_loss(&self.params, &self.head, &hier_pairs)?;
                merge_tower(&mut out.grad.event, &hier.grad.event, weight);
                apply_head(&mut self.head, &hier.head_grad, lr * weight);
                hier_total += hier.loss;
            }
            apply_tower(&mut self.params.mention, self.params.dim, &out.grad.mention, lr);
            apply_tower(&mut self.params.event, self.params.dim, &out.grad.event, lr);
            steps += 1;
        }
        let steps = steps.max(1) as f64;
        self.log.epochs.push(EpochLog {
            epoch,
            linking_loss: Some(link_total / steps),
            hierarchy_loss: joint.then_some(hier_total / steps),
        });
        Ok(())
    }
}

/// Trains the bi-encoder (and, for hierarchy strategies, the ComplEx head).
///
/// Randomness comes from named substreams of `config.seed`: weights from
/// `init`, linking batches from `batching`, hierarchy batches from
/// `hierarchy`. HP with zero pretraining epochs therefore replays BASELINE
/// exactly, and HJL with weight 0 leaves the linking trajectory unchanged.
pub fn train(
    kb: &Kb,
    instances: &[GroundingInstance],
    forest: &HierarchyForest,
    config: &TrainConfig,
) -> Result<TrainedModel> {
    config.validate()?;
    if instances.is_empty() {
        return Err(Error::EmptyTrainSplit);
    }
    if config.strategy.uses_hierarchy() && forest.edge_count() == 0 {
        return Err(Error::NoHierarchyEdges);
    }

    let features = config.featurizer.features;
    let mut init = rng::substream(config.seed, rng::INIT);
    let params = EncoderParams::random(features, config.dim, INIT_SCALE, &mut init);
    let head = ComplExHead::random(config.dim, INIT_SCALE, &mut init);

    let mention_fvs = instances
        .iter()
        .map(|inst| featurize_mention(&inst.mention, &config.featurizer))
        .collect();
    let edges: Vec<(String, String)> = forest
        .edges()
        .map(|(c, p)| (c.to_string(), p.to_string()))
        .collect();

    let mut trainer = Trainer {
        config,
        params,
        head,
        edges,
        mention_fvs,
        instances,
        events: EventFeatures::new(kb, config.mode, config.featurizer),
        batching: rng::substream(config.seed, rng::BATCHING),
        hierarchy: rng::substream(config.seed, rng::HIERARCHY),
        log: TrainLog::default(),
    };

    let mut epoch = 0;
    if config.strategy.pretrains() {
        for _ in 0..config.pretrain_epochs {
            trainer.pretrain_epoch(epoch)?;
            epoch += 1;
        }
    }
    for _ in 0..config.epochs {
        trainer.linking_epoch(epoch, config.strategy.joint())?;
        epoch += 1;
    }
    for e in &trainer.log.epochs {
        log::info!(
            "epoch {}: linking={:?} hierarchy={:?}",
            e.epoch,
            e.linking_loss,
            e.hierarchy_loss
        );
    }

    Ok(TrainedModel {
        params: trainer.params,
        head: trainer.head,
        log: trainer.log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{build_instances, generate_synthetic, SynthConfig};

    fn tiny_setup() -> (Kb, HierarchyForest, Vec<GroundingInstance>) {
        let corpus = generate_synthetic(&SynthConfig {
            n_trees: 2,
            branching: 2,
            height: 1,
            mentions_per_event: 3,
            ..SynthConfig::default()
        })
        .unwrap();
        let mut kb = Kb::new(corpus.events, corpus.edges).unwrap();
        let forest = kb.build_forest(3).unwrap();
        let instances = build_instances(&corpus.mentions, &kb, &forest).unwrap();
        (kb, forest, instances)
    }

    fn small_config(strategy: Strategy) -> TrainConfig {
        TrainConfig {
            strategy,
            epochs: 2,
            featurizer: FeaturizerConfig {
                features: 1 << 10,
                ..FeaturizerConfig::default()
            },
            dim: 8,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn baseline_leaves_head_at_initialization() {
        let (kb, forest, instances) = tiny_setup();
        let config = small_config(Strategy::Baseline);
        let model = train(&kb, &instances[..1], &forest, &config).unwrap();
        let mut init = rng::substream(config.seed, rng::INIT);
        let _ = EncoderParams::random(1 << 10, 8, INIT_SCALE, &mut init);
        let head = ComplExHead::random(8, INIT_SCALE, &mut init);
        assert_eq!(model.head, head);
    }

    #[test]
    fn pretraining_only_touches_event_tower() {
        let (kb, forest, instances) = tiny_setup();
        let config = TrainConfig {
            epochs: 0,
            pretrain_epochs: 2,
            ..small_config(Strategy::Hp)
        };
        let model = train(&kb, &instances, &forest, &config).unwrap();
        let base = train(
            &kb,
            &instances,
            &forest,
            &TrainConfig {
                epochs: 0,
                ..small_config(Strategy::Baseline)
            },
        )
        .unwrap();
        assert_eq!(model.params.mention, base.params.mention);
        assert_ne!(model.params.event, base.params.event);
        assert_ne!(model.head, base.head);
        assert_eq!(model.log.epochs.len(), 2);
        assert!(model.log.epochs[0].linking_loss.is_none());
    }

    #[test]
    fn errors_for_empty_split_and_missing_edges() {
        let (kb, forest, instances) = tiny_setup();
        assert!(matches!(
            train(&kb, &[], &forest, &small_config(Strategy::Baseline)),
            Err(Error::EmptyTrainSplit)
        ));
        let mut flat = Kb::new(kb.events().cloned().collect(), vec![]).unwrap();
        let flat_forest = flat.build_forest(3).unwrap();
        let flat_instances = build_instances(
            &instances.iter().map(|i| i.mention.clone()).collect::<Vec<_>>(),
            &flat,
            &flat_forest,
        )
        .unwrap();
        assert!(matches!(
            train(&flat, &flat_instances, &flat_forest, &small_config(Strategy::Hjl)),
            Err(Error::NoHierarchyEdges)
        ));
    }

    #[test]
    fn strategy_names_parse() {
        assert_eq!("hp+hjl".parse::<Strategy>().unwrap(), Strategy::HpHjl);
        assert_eq!("BASELINE".parse::<Strategy>().unwrap(), Strategy::Baseline);
        assert!("nope".parse::<Strategy>().is_err());
        assert_eq!(serde_json::to_string(&Strategy::HpHjl).unwrap(), "\"HP_HJL\"");
    }
}
