//! Finite-difference verification of the analytic loss gradients.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::complex::ComplExHead;
use super::loss::{
    hierarchy_loss, linking_loss, BatchEvent, BatchMention, HierarchyPair, LinkingBatch, TowerGrad,
};
use crate::encoder::{EncoderParams, FeatureVector};
use crate::error::{Error, Result};
use crate::rng;

pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Linking,
    Hierarchy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    pub features: usize,
    pub dim: usize,
    pub mentions: usize,
    pub events: usize,
    pub seed: u64,
    /// Uniform(-scale, scale) for every parameter.
    pub param_scale: f64,
    /// Zero every parameter instead of drawing them.
    pub zero_params: bool,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            features: 32,
            dim: 4,
            mentions: 3,
            events: 4,
            seed: 0,
            param_scale: 0.5,
            zero_params: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub loss: LossKind,
    pub value: f64,
    pub max_rel_error: f64,
    pub parameters: usize,
    pub gradients_finite: bool,
}

fn random_fv(rng: &mut ChaCha8Rng, dim: usize) -> FeatureVector {
    let mut counts = BTreeMap::new();
    for _ in 0..6 {
        counts.insert(rng.gen_range(0..dim as u32), rng.gen_range(0.1..1.0));
    }
    FeatureVector::normalized(dim, counts)
}

enum Probe {
    Linking(LinkingBatch),
    Hierarchy(Vec<HierarchyPair>),
}

impl Probe {
    fn build(kind: LossKind, cfg: &ProbeConfig, rng: &mut ChaCha8Rng) -> Self {
        let f = cfg.features;
        match kind {
            LossKind::Linking => {
                let events: Vec<BatchEvent> = (0..cfg.events)
                    .map(|j| BatchEvent {
                        id: format!("E{j}"),
                        features: random_fv(rng, f),
                    })
                    .collect();
                let mentions = (0..cfg.mentions)
                    .map(|i| {
                        let mut gold = BTreeSet::new();
                        gold.insert(format!("E{}", i % cfg.events));
                        for j in 0..cfg.events {
                            if rng.gen_bool(0.3) {
                                gold.insert(format!("E{j}"));
                            }
                        }
                        BatchMention {
                            features: random_fv(rng, f),
                            gold,
                        }
                    })
                    .collect();
                Probe::Linking(LinkingBatch::new(mentions, events))
            }
            LossKind::Hierarchy => {
                // parents P0..; child j belongs to parent j / 2
                let n_parents = cfg.events.div_ceil(2).max(1);
                let parents: Vec<FeatureVector> = (0..n_parents).map(|_| random_fv(rng, f)).collect();
                let pairs = (0..cfg.events.max(1))
                    .map(|j| HierarchyPair {
                        parent_id: format!("P{}", j / 2),
                        parent: parents[j / 2].clone(),
                        child_id: format!("C{j}"),
                        child: random_fv(rng, f),
                    })
                    .collect();
                Probe::Hierarchy(pairs)
            }
        }
    }

    fn eval(&self, params: &EncoderParams, head: &ComplExHead) -> Result<f64> {
        match self {
            Probe::Linking(batch) => Ok(linking_loss(params, batch)?.loss),
            Probe::Hierarchy(pairs) => Ok(hierarchy_loss(params, head, pairs)?.loss),
        }
    }

    /// Analytic gradient flattened in `blocks` order.
    fn analytic(&self, params: &EncoderParams, head: &ComplExHead) -> Result<(f64, Vec<Vec<f64>>)> {
        let dense = |g: &TowerGrad| {
            let mut out = vec![0.0; params.features * params.dim];
            for (row, vals) in &g.rows {
                let at = *row as usize * params.dim;
                out[at..at + params.dim].copy_from_slice(vals);
            }
            out
        };
        let (value, grad, head_grad) = match self {
            Probe::Linking(batch) => {
                let out = linking_loss(params, batch)?;
                (out.loss, out.grad, ComplExHead::zeros(params.dim))
            }
            Probe::Hierarchy(pairs) => {
                let out = hierarchy_loss(params, head, pairs)?;
                (out.loss, out.grad, out.head_grad)
            }
        };
        let mut blocks = vec![dense(&grad.mention), dense(&grad.event)];
        blocks.extend(head_grad.blocks().iter().map(|(_, b)| b.to_vec()));
        Ok((value, blocks))
    }
}

fn param_mut<'a>(params: &'a mut EncoderParams, head: &'a mut ComplExHead, block: usize) -> &'a mut Vec<f64> {
    match block {
        0 => &mut params.mention,
        1 => &mut params.event,
        b => head.blocks_mut().into_iter().nth(b - 2).expect("block index"),
    }
}

/// Compares analytic gradients of `kind` with central differences over
/// every parameter. Relative error uses `max(|a|, |f|, 1e-8)` as the
/// denominator.
pub fn gradient_check(kind: LossKind, cfg: &ProbeConfig) -> Result<GradCheckReport> {
    if cfg.features == 0 || cfg.dim == 0 || cfg.mentions == 0 || cfg.events == 0 {
        return Err(Error::InvalidConfig("probe dimensions must be positive".into()));
    }
    let mut rng = rng::substream(cfg.seed, "gradcheck");
    let (mut params, mut head) = if cfg.zero_params {
        (EncoderParams::zeros(cfg.features, cfg.dim), ComplExHead::zeros(cfg.dim))
    } else {
        let params = EncoderParams::random(cfg.features, cfg.dim, cfg.param_scale, &mut rng);
        let mut head = ComplExHead::random(cfg.dim, cfg.param_scale, &mut rng);
        for b in head.b_re.iter_mut().chain(head.b_im.iter_mut()) {
            *b = rng.gen_range(-cfg.param_scale..cfg.param_scale);
        }
        (params, head)
    };
    let probe = Probe::build(kind, cfg, &mut rng);
    let (value, analytic) = probe.analytic(&params, &head)?;
    let gradients_finite = analytic.iter().flatten().all(|g| g.is_finite());

    let mut max_rel: f64 = 0.0;
    let mut count = 0;
    for (block, grads) in analytic.iter().enumerate() {
        for (i, a) in grads.iter().enumerate() {
            let original = param_mut(&mut params, &mut head, block)[i];
            param_mut(&mut params, &mut head, block)[i] = original + FD_STEP;
            let plus = probe.eval(&params, &head)?;
            param_mut(&mut params, &mut head, block)[i] = original - FD_STEP;
            let minus = probe.eval(&params, &head)?;
            param_mut(&mut params, &mut head, block)[i] = original;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            max_rel = max_rel.max((a - numeric).abs() / denom);
            count += 1;
        }
    }
    Ok(GradCheckReport {
        loss: kind,
        value,
        max_rel_error: max_rel,
        parameters: count,
        gradients_finite,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linking_gradients_match_finite_differences() {
        let report = gradient_check(LossKind::Linking, &ProbeConfig::default()).unwrap();
        assert!(report.max_rel_error <= 1e-4, "{report:?}");
        assert_eq!(report.parameters, 2 * 32 * 4 + 2 * 16 + 3 * 4);
    }

    #[test]
    fn hierarchy_gradients_match_finite_differences() {
        let report = gradient_check(LossKind::Hierarchy, &ProbeConfig::default()).unwrap();
        assert!(report.max_rel_error <= 1e-4, "{report:?}");
    }

    #[test]
    fn zero_parameter_probe_is_finite() {
        for kind in [LossKind::Linking, LossKind::Hierarchy] {
            let cfg = ProbeConfig {
                zero_params: true,
                ..ProbeConfig::default()
            };
            let report = gradient_check(kind, &cfg).unwrap();
            assert!(report.value.is_finite());
            assert!(report.gradients_finite);
        }
    }
}
