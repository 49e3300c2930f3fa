//! Experiment configuration and the command implementations behind the CLI.
//!
//! Settings resolve in increasing precedence: built-in defaults, the TOML
//! config file, the `EVENTGROUND_OUTPUT_DIR` environment variable (output
//! directory only), then command-line flags. Every command that writes
//! artifacts also writes the resolved `config.toml` and updates
//! `manifest.json` in the output directory.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dataset::{
    build_instances, candidate_pool, corpus_stats, generate_synthetic, instances_in_split,
    load_mentions, split_components, split_forest, GroundingInstance, PoolMode, Split, SplitAssignment,
    SplitRatios, SynthConfig,
};
use crate::encoder::{featurize_mention, LanguageMode, Tower};
use crate::error::{Error, Result};
use crate::io;
use crate::kb::{HierarchyForest, Kb, DEFAULT_MAX_HEIGHT};
use crate::metrics::{
    recall_at_k, recall_at_k_fraction, recall_at_min, recall_curve, relext_recall_at_k,
    set_metrics, EvalRecord,
};
use crate::relext::{build_mention_lists, rank_parents, ParentRanking, DEFAULT_LIST_K, DEFAULT_RANKING_LEN};
use crate::rerank::{
    predict_set, rerank_order, score_candidates, train_reranker, PredictionRecord, RerankConfig,
    RerankerParams,
};
use crate::retrieval::{Candidate, CandidateIndex, RetrievalResult};
use crate::training::{
    gradient_check, load_checkpoint, save_checkpoint, train, LossKind, ProbeConfig, Strategy,
    TrainConfig,
};

pub const OUTPUT_DIR_ENV: &str = "EVENTGROUND_OUTPUT_DIR";
pub const MANIFEST_VERSION: u32 = 1;
pub const GRAD_CHECK_TOLERANCE: f64 = 1e-4;

pub const CONFIG_FILE: &str = "config.toml";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const RELATIONS_FILE: &str = "relations.jsonl";
pub const MENTIONS_FILE: &str = "mentions.jsonl";
pub const FOREST_FILE: &str = "forest.json";
pub const STATS_FILE: &str = "stats.json";
pub const SPLITS_FILE: &str = "splits.json";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";
pub const RERANKER_FILE: &str = "reranker.json";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const PARENTS_FILE: &str = "parents.jsonl";
pub const RELEXT_FILE: &str = "relext.json";

pub fn retrievals_file(split: Split) -> String {
    format!("retrievals_{split}.jsonl")
}

pub fn curve_file(split: Split) -> String {
    format!("recall_{split}.tsv")
}

/// Input and output locations. Unset inputs default to files of the same
/// name inside the output directory, which is where `synth` writes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub events: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relations: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mentions: Option<PathBuf>,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    /// Length of stored retrieval lists (clamped to the pool size).
    pub retrieve_k: usize,
    /// Cut-offs for the Recall@k curve.
    pub ks: Vec<usize>,
    /// Top-k used to build mention lists for parent discovery.
    pub relext_list_k: usize,
    pub relext_ks: Vec<usize>,
    /// Stored length of each parent ranking.
    pub ranking_len: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            retrieve_k: 64,
            ks: vec![1, 2, 4, 8, 16, 32, 64],
            relext_list_k: DEFAULT_LIST_K,
            relext_ks: vec![1, 2, 4, 8, 16],
            ranking_len: DEFAULT_RANKING_LEN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub mode: LanguageMode,
    pub max_height: usize,
    pub paths: Paths,
    pub ratios: SplitRatios,
    pub train: TrainConfig,
    pub rerank: RerankConfig,
    pub metrics: MetricsConfig,
    pub synth: SynthConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            mode: LanguageMode::Crosslingual,
            max_height: DEFAULT_MAX_HEIGHT,
            paths: Paths {
                output_dir: PathBuf::from("out"),
                ..Paths::default()
            },
            ratios: SplitRatios::default(),
            train: TrainConfig::default(),
            rerank: RerankConfig::default(),
            metrics: MetricsConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

/// Values given on the command line; `None` keeps the configured value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub output_dir: Option<PathBuf>,
    pub events: Option<PathBuf>,
    pub relations: Option<PathBuf>,
    pub mentions: Option<PathBuf>,
    pub seed: Option<u64>,
    pub mode: Option<LanguageMode>,
    pub strategy: Option<Strategy>,
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub features: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("read {}", path.display()), e))?;
        Self::from_toml(&text)
    }

    /// Layers the config file, environment and flags over the defaults, then
    /// propagates the experiment seed and mode into every sub-config.
    pub fn resolve(
        file: Option<&Path>,
        env_output_dir: Option<PathBuf>,
        overrides: &Overrides,
    ) -> Result<Self> {
        let mut config = match file {
            Some(path) => Self::load(path)?,
            None => Self::default(),
        };
        if let Some(dir) = env_output_dir {
            config.paths.output_dir = dir;
        }
        let o = overrides.clone();
        if let Some(v) = o.output_dir {
            config.paths.output_dir = v;
        }
        if o.events.is_some() {
            config.paths.events = o.events;
        }
        if o.relations.is_some() {
            config.paths.relations = o.relations;
        }
        if o.mentions.is_some() {
            config.paths.mentions = o.mentions;
        }
        if let Some(v) = o.seed {
            config.seed = v;
        }
        if let Some(v) = o.mode {
            config.mode = v;
        }
        if let Some(v) = o.strategy {
            config.train.strategy = v;
        }
        if let Some(v) = o.epochs {
            config.train.epochs = v;
        }
        if let Some(v) = o.learning_rate {
            config.train.learning_rate = v;
        }
        if let Some(v) = o.features {
            config.train.featurizer.features = v;
        }
        config.propagate();
        config.validate()?;
        Ok(config)
    }

    /// Copies the experiment-level seed and mode into the sub-configs.
    pub fn propagate(&mut self) {
        self.train.seed = self.seed;
        self.train.mode = self.mode;
        self.rerank.seed = self.seed;
        self.synth.seed = self.seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.ratios.validate()?;
        self.train.validate()?;
        self.rerank.validate()?;
        let m = &self.metrics;
        if m.retrieve_k < self.rerank.k {
            return Err(Error::InvalidConfig(format!(
                "metrics.retrieve_k ({}) must be at least rerank.k ({})",
                m.retrieve_k, self.rerank.k
            )));
        }
        if m.ks.contains(&0) || m.relext_ks.contains(&0) || m.relext_list_k == 0 {
            return Err(Error::InvalidConfig("metric cut-offs must be positive".into()));
        }
        Ok(())
    }

    pub fn output_dir(&self) -> &Path {
        &self.paths.output_dir
    }

    fn input(&self, given: &Option<PathBuf>, default: &str) -> PathBuf {
        given
            .clone()
            .unwrap_or_else(|| self.paths.output_dir.join(default))
    }

    pub fn events_path(&self) -> PathBuf {
        self.input(&self.paths.events, EVENTS_FILE)
    }

    pub fn relations_path(&self) -> PathBuf {
        self.input(&self.paths.relations, RELATIONS_FILE)
    }

    pub fn mentions_path(&self) -> PathBuf {
        self.input(&self.paths.mentions, MENTIONS_FILE)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Ingest,
    Split,
    Synth,
    Train,
    Retrieve { split: Split },
    RerankTrain,
    Evaluate { split: Split, atomic_only: bool },
    Relext { split: Split },
    GradCheck,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Split => "split",
            Command::Synth => "synth",
            Command::Train => "train",
            Command::Retrieve { .. } => "retrieve",
            Command::RerankTrain => "rerank-train",
            Command::Evaluate { .. } => "evaluate",
            Command::Relext { .. } => "relext",
            Command::GradCheck => "grad-check",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub tool: String,
    pub version: String,
    /// Artifact file name → command that produced it.
    pub artifacts: BTreeMap<String, String>,
}

/// Runs one command and returns a JSON summary for stdout.
pub fn run(command: Command, config: &ExperimentConfig) -> Result<Value> {
    if command == Command::GradCheck {
        return grad_check();
    }
    let out = config.output_dir();
    std::fs::create_dir_all(out).map_err(|e| Error::io(format!("create {}", out.display()), e))?;
    let mut run = Run {
        config,
        out: out.to_path_buf(),
        written: Vec::new(),
    };
    let summary = match command {
        Command::Synth => run.synth()?,
        Command::Ingest => run.ingest()?,
        Command::Split => run.split()?,
        Command::Train => run.train()?,
        Command::Retrieve { split } => run.retrieve(split)?,
        Command::RerankTrain => run.rerank_train()?,
        Command::Evaluate { split, atomic_only } => run.evaluate(split, atomic_only)?,
        Command::Relext { split } => run.relext(split)?,
        Command::GradCheck => unreachable!("handled above"),
    };
    run.finish(command)?;
    Ok(summary)
}

fn grad_check() -> Result<Value> {
    let mut reports = Vec::new();
    for kind in [LossKind::Linking, LossKind::Hierarchy] {
        let report = gradient_check(kind, &ProbeConfig::default())?;
        println!("{}", serde_json::to_string(&report)?);
        if !(report.max_rel_error <= GRAD_CHECK_TOLERANCE && report.gradients_finite) {
            return Err(Error::GradientMismatch {
                loss: format!("{kind:?}").to_lowercase(),
                error: report.max_rel_error,
                tolerance: GRAD_CHECK_TOLERANCE,
            });
        }
        reports.push(report);
    }
    Ok(json!({
        "linking_max_rel_error": reports[0].max_rel_error,
        "hierarchy_max_rel_error": reports[1].max_rel_error,
    }))
}

struct Corpus {
    kb: Kb,
    forest: HierarchyForest,
    instances: Vec<GroundingInstance>,
}

struct Run<'a> {
    config: &'a ExperimentConfig,
    out: PathBuf,
    written: Vec<String>,
}

impl Run<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn wrote(&mut self, name: impl Into<String>) {
        self.written.push(name.into());
    }

    fn finish(&mut self, command: Command) -> Result<()> {
        std::fs::write(self.path(CONFIG_FILE), self.config.to_toml()?)
            .map_err(|e| Error::io(format!("write {}", CONFIG_FILE), e))?;
        let manifest_path = self.path(MANIFEST_FILE);
        let mut manifest: Manifest = if manifest_path.exists() {
            io::read_json(&manifest_path)?
        } else {
            Manifest::default()
        };
        manifest.format_version = MANIFEST_VERSION;
        manifest.tool = env!("CARGO_PKG_NAME").to_string();
        manifest.version = env!("CARGO_PKG_VERSION").to_string();
        manifest
            .artifacts
            .insert(CONFIG_FILE.to_string(), command.name().to_string());
        for name in self.written.drain(..) {
            manifest.artifacts.insert(name, command.name().to_string());
        }
        io::write_json(&manifest_path, &manifest)
    }

    fn load_corpus(&self) -> Result<Corpus> {
        let mut kb = Kb::load(&self.config.events_path(), &self.config.relations_path())?;
        let forest = kb.build_forest(self.config.max_height)?;
        let mentions = load_mentions(&self.config.mentions_path())?;
        let instances = build_instances(&mentions, &kb, &forest)?;
        Ok(Corpus {
            kb,
            forest,
            instances,
        })
    }

    /// Reuses `splits.json` when present so every command sees one split.
    fn assignment(&mut self, kb: &Kb) -> Result<SplitAssignment> {
        let path = self.path(SPLITS_FILE);
        if path.exists() {
            return SplitAssignment::load(&path);
        }
        let assignment = split_components(kb, self.config.ratios, self.config.seed)?;
        assignment.save(&path)?;
        self.wrote(SPLITS_FILE);
        Ok(assignment)
    }

    fn synth(&mut self) -> Result<Value> {
        let corpus = generate_synthetic(&self.config.synth)?;
        corpus.write(&self.out)?;
        for name in [EVENTS_FILE, RELATIONS_FILE, MENTIONS_FILE] {
            self.wrote(name);
        }
        Ok(json!({
            "events": corpus.events.len(),
            "relations": corpus.edges.len(),
            "mentions": corpus.mentions.len(),
        }))
    }

    fn ingest(&mut self) -> Result<Value> {
        let corpus = self.load_corpus()?;
        corpus.forest.save(&self.path(FOREST_FILE))?;
        let stats = corpus_stats(&corpus.instances, &corpus.forest);
        io::write_json(&self.path(STATS_FILE), &stats)?;
        self.wrote(FOREST_FILE);
        self.wrote(STATS_FILE);
        Ok(serde_json::to_value(stats)?)
    }

    fn split(&mut self) -> Result<Value> {
        let corpus = self.load_corpus()?;
        let assignment = split_components(&corpus.kb, self.config.ratios, self.config.seed)?;
        assignment.save(&self.path(SPLITS_FILE))?;
        self.wrote(SPLITS_FILE);
        let mut counts = BTreeMap::new();
        for split in Split::ALL {
            counts.insert(split.as_str(), assignment.events_in(split).count());
        }
        Ok(json!({ "events": counts, "components": assignment.splits.len() }))
    }

    fn train(&mut self) -> Result<Value> {
        let corpus = self.load_corpus()?;
        let assignment = self.assignment(&corpus.kb)?;
        let train_set = instances_in_split(&corpus.instances, &assignment, Split::Train);
        let forest = split_forest(&corpus.kb, &assignment, Split::Train, self.config.max_height)?;
        let model = train(&corpus.kb, &train_set, &forest, &self.config.train)?;
        save_checkpoint(&self.path(CHECKPOINT_FILE), &model.params, &model.head)?;
        model.log.save(&self.path(TRAIN_LOG_FILE))?;
        self.wrote(CHECKPOINT_FILE);
        self.wrote(TRAIN_LOG_FILE);
        let last = model.log.epochs.last();
        Ok(json!({
            "strategy": self.config.train.strategy,
            "mentions": train_set.len(),
            "epochs": model.log.epochs.len(),
            "final_linking_loss": last.and_then(|e| e.linking_loss),
            "final_hierarchy_loss": last.and_then(|e| e.hierarchy_loss),
            "degenerate_batches": model.log.degenerate_batches,
        }))
    }

    fn compute_retrievals(&self, corpus: &Corpus, split_set: &[GroundingInstance]) -> Result<Vec<RetrievalResult>> {
        let (params, _) = load_checkpoint(&self.path(CHECKPOINT_FILE))?;
        let featurizer = &self.config.train.featurizer;
        if params.features != featurizer.features {
            return Err(Error::DimensionMismatch {
                expected: featurizer.features,
                actual: params.features,
            });
        }
        let pool = candidate_pool(&corpus.kb, &corpus.forest, PoolMode::Inference, None);
        let languages: Vec<String> = split_set
            .iter()
            .map(|i| i.mention.language.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let index = CandidateIndex::build(&params, &corpus.kb, &pool, self.config.mode, &languages, featurizer)?;
        let k = self.config.metrics.retrieve_k.min(index.len());
        split_set
            .iter()
            .map(|inst| {
                let fv = featurize_mention(&inst.mention, featurizer);
                let query = params.encode(&fv, Tower::Mention)?;
                Ok(RetrievalResult {
                    mention_id: inst.mention.id.clone(),
                    candidates: index.topk(&query, &inst.mention.language, k)?,
                })
            })
            .collect()
    }

    /// Loads `retrievals_{split}.jsonl`, computing and writing it if absent.
    fn retrievals(&mut self, corpus: &Corpus, split: Split) -> Result<(Vec<GroundingInstance>, Vec<RetrievalResult>)> {
        let assignment = self.assignment(&corpus.kb)?;
        let split_set = instances_in_split(&corpus.instances, &assignment, split);
        let name = retrievals_file(split);
        let path = self.path(&name);
        let results = if path.exists() {
            io::read_jsonl(&path)?
        } else {
            let results = self.compute_retrievals(corpus, &split_set)?;
            io::write_jsonl(&path, &results)?;
            self.wrote(name);
            results
        };
        Ok((split_set, results))
    }

    fn retrieve(&mut self, split: Split) -> Result<Value> {
        let corpus = self.load_corpus()?;
        let assignment = self.assignment(&corpus.kb)?;
        let split_set = instances_in_split(&corpus.instances, &assignment, split);
        let results = self.compute_retrievals(&corpus, &split_set)?;
        let name = retrievals_file(split);
        io::write_jsonl(&self.path(&name), &results)?;
        self.wrote(name);
        Ok(json!({ "split": split, "mentions": results.len() }))
    }

    fn rerank_train(&mut self) -> Result<Value> {
        let corpus = self.load_corpus()?;
        let (train_set, train_ret) = self.retrievals(&corpus, Split::Train)?;
        let (dev_set, dev_ret) = self.retrievals(&corpus, Split::Dev)?;
        let train_pairs = pair_up(train_set, train_ret)?;
        let dev_pairs = pair_up(dev_set, dev_ret)?;
        let reranker = train_reranker(&corpus.kb, &train_pairs, &dev_pairs, self.config.mode, &self.config.rerank)?;
        reranker.save(&self.path(RERANKER_FILE))?;
        self.wrote(RERANKER_FILE);
        Ok(json!({
            "train_mentions": train_pairs.len(),
            "dev_mentions": dev_pairs.len(),
            "threshold": reranker.threshold,
        }))
    }

    fn evaluate(&mut self, split: Split, atomic_only: bool) -> Result<Value> {
        let corpus = self.load_corpus()?;
        let (split_set, results) = self.retrievals(&corpus, split)?;
        let pairs = pair_up(split_set, results)?;
        let reranker_path = self.path(RERANKER_FILE);
        let reranker = if reranker_path.exists() {
            Some(RerankerParams::load(&reranker_path)?)
        } else {
            log::warn!("no {RERANKER_FILE}; reporting retrieval metrics only");
            None
        };

        let mut records = Vec::with_capacity(pairs.len());
        let mut predictions = Vec::new();
        for (inst, retrieval) in &pairs {
            let mut record = EvalRecord {
                mention_id: inst.mention.id.clone(),
                gold: inst.gold_set.clone(),
                atomic: inst.atomic_event.clone(),
                retrieved: retrieval.events().map(str::to_string).collect(),
                predicted: None,
                reranked: None,
            };
            if let Some(reranker) = &reranker {
                let top: Vec<Candidate> = retrieval
                    .candidates
                    .iter()
                    .take(self.config.rerank.k)
                    .cloned()
                    .collect();
                let scored = score_candidates(reranker, &corpus.kb, &inst.mention, &top)?;
                let predicted = predict_set(&scored, reranker.threshold);
                predictions.push(PredictionRecord {
                    mention_id: inst.mention.id.clone(),
                    predicted: predicted.iter().cloned().collect(),
                });
                record.predicted = Some(predicted);
                record.reranked = Some(rerank_order(&scored));
            }
            records.push(record);
        }

        let longest = records.iter().map(|r| r.retrieved.len()).min().unwrap_or(0);
        let ks: Vec<usize> = self
            .config
            .metrics
            .ks
            .iter()
            .copied()
            .filter(|k| *k <= longest)
            .collect();
        let mut report = serde_json::Map::new();
        report.insert("mentions".into(), json!(records.len()));
        report.insert("recall@min".into(), json!(recall_at_min(&records)?));
        for &k in &ks {
            report.insert(format!("recall@{k}"), json!(recall_at_k(&records, k, false)?));
            report.insert(format!("recall_fraction@{k}"), json!(recall_at_k_fraction(&records, k)?));
            if atomic_only {
                report.insert(format!("recall_atomic@{k}"), json!(recall_at_k(&records, k, true)?));
            }
        }
        if let Some(reranker) = &reranker {
            let m = set_metrics(&records)?;
            for (name, value) in [
                ("strict_acc", m.strict_acc),
                ("strict_acc_top_min", m.strict_acc_top_min),
                ("macro_precision", m.macro_precision),
                ("macro_recall", m.macro_recall),
                ("macro_f1", m.macro_f1),
                ("micro_precision", m.micro_precision),
                ("micro_recall", m.micro_recall),
                ("micro_f1", m.micro_f1),
                ("threshold", reranker.threshold),
            ] {
                report.insert(name.into(), json!(value));
            }
            io::write_jsonl(&self.path(PREDICTIONS_FILE), &predictions)?;
            self.wrote(PREDICTIONS_FILE);
        }
        report.insert(
            "config".into(),
            json!({ "split": split, "atomic_only": atomic_only, "experiment": self.config }),
        );
        io::write_json(&self.path(REPORT_FILE), &report)?;
        self.wrote(REPORT_FILE);

        let mut tsv = String::from(if atomic_only {
            "k\trecall\trecall_fraction\trecall_atomic\n"
        } else {
            "k\trecall\trecall_fraction\n"
        });
        for point in recall_curve(&records, &ks)? {
            tsv.push_str(&format!("{}\t{}\t{}", point.k, point.recall, point.recall_fraction));
            if atomic_only {
                tsv.push_str(&format!("\t{}", point.recall_atomic));
            }
            tsv.push('\n');
        }
        let curve = curve_file(split);
        std::fs::write(self.path(&curve), tsv).map_err(|e| Error::io(format!("write {curve}"), e))?;
        self.wrote(curve);

        report.remove("config");
        Ok(Value::Object(report))
    }

    fn relext(&mut self, split: Split) -> Result<Value> {
        let corpus = self.load_corpus()?;
        let assignment = self.assignment(&corpus.kb)?;
        let (_, results) = self.retrievals(&corpus, split)?;
        let m = &self.config.metrics;
        let lists = build_mention_lists(&results, m.relext_list_k);
        let pool = candidate_pool(&corpus.kb, &corpus.forest, PoolMode::Inference, None);

        let queries: Vec<String> = assignment.events_in(split).map(str::to_string).collect();
        let mut rankings = BTreeMap::new();
        let mut records = Vec::new();
        let mut unlinked = 0usize;
        for event in &queries {
            match rank_parents(&lists, event, &pool) {
                Ok(mut ranking) => {
                    ranking.truncate(m.ranking_len);
                    rankings.insert(
                        event.clone(),
                        ranking.iter().map(|p| p.parent.clone()).collect::<Vec<_>>(),
                    );
                    records.push(ParentRanking {
                        event: event.clone(),
                        ranking,
                    });
                }
                Err(Error::UndefinedScore(_)) => unlinked += 1,
                Err(e) => return Err(e),
            }
        }
        if unlinked > 0 {
            log::info!("{unlinked} {split} events have no linked mentions and count as misses");
        }
        io::write_jsonl(&self.path(PARENTS_FILE), &records)?;
        self.wrote(PARENTS_FILE);

        let mut summary = serde_json::Map::new();
        summary.insert("split".into(), json!(split));
        summary.insert(
            "queries".into(),
            json!(queries.iter().filter(|e| corpus.forest.parent(e).is_some()).count()),
        );
        summary.insert("unlinked".into(), json!(unlinked));
        for &k in &m.relext_ks {
            summary.insert(
                format!("relext_recall@{k}"),
                json!(relext_recall_at_k(&rankings, &corpus.forest, &queries, k)),
            );
        }
        io::write_json(&self.path(RELEXT_FILE), &summary)?;
        self.wrote(RELEXT_FILE);
        Ok(Value::Object(summary))
    }
}

/// Joins instances to their retrievals by mention id.
fn pair_up(
    instances: Vec<GroundingInstance>,
    results: Vec<RetrievalResult>,
) -> Result<Vec<(GroundingInstance, RetrievalResult)>> {
    let mut by_id: BTreeMap<String, RetrievalResult> = results
        .into_iter()
        .map(|r| (r.mention_id.clone(), r))
        .collect();
    instances
        .into_iter()
        .map(|inst| {
            let r = by_id.remove(&inst.mention.id).ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "no retrieval for mention `{}`; rerun `retrieve`",
                    inst.mention.id
                ))
            })?;
            Ok((inst, r))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let config = ExperimentConfig::default();
        let text = config.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), config);
    }

    #[test]
    fn precedence_flags_over_env_over_file() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("exp.toml");
        std::fs::write(
            &file,
            "seed = 7\n[paths]\noutput_dir = \"from-file\"\n[train]\nepochs = 3\n",
        )
        .unwrap();
        let none = Overrides::default();
        let c = ExperimentConfig::resolve(Some(&file), None, &none).unwrap();
        assert_eq!(c.paths.output_dir, PathBuf::from("from-file"));
        assert_eq!((c.seed, c.train.seed, c.rerank.seed, c.train.epochs), (7, 7, 7, 3));

        let c = ExperimentConfig::resolve(Some(&file), Some("from-env".into()), &none).unwrap();
        assert_eq!(c.paths.output_dir, PathBuf::from("from-env"));

        let flags = Overrides {
            output_dir: Some("from-flag".into()),
            epochs: Some(5),
            ..Overrides::default()
        };
        let c = ExperimentConfig::resolve(Some(&file), Some("from-env".into()), &flags).unwrap();
        assert_eq!(c.paths.output_dir, PathBuf::from("from-flag"));
        assert_eq!(c.train.epochs, 5);
        assert_eq!(c.events_path(), PathBuf::from("from-flag").join(EVENTS_FILE));
    }

    #[test]
    fn malformed_config_is_a_config_error() {
        let err = ExperimentConfig::from_toml("seed = \"x\"").unwrap_err();
        assert_eq!(err.kind(), "ConfigError");
        let mut c = ExperimentConfig::default();
        c.metrics.retrieve_k = 2;
        assert!(c.validate().is_err());
    }
}
