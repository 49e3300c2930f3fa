//! In-batch BCE losses with analytic gradients.

use std::collections::{BTreeMap, BTreeSet};

use super::complex::{score_projected, ComplExHead, Projection};
use crate::encoder::{dot, EncoderParams, FeatureVector, Tower};
use crate::error::{Error, Result};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-[y ln σ(s) + (1-y) ln(1-σ(s))]`, evaluated without overflow.
pub fn bce_with_logit(score: f64, positive: bool) -> f64 {
    let softplus = score.max(0.0) + (-score.abs()).exp().ln_1p();
    if positive {
        softplus - score
    } else {
        softplus
    }
}

/// Sparse gradient of one `F x d` tower: only touched rows are stored.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TowerGrad {
    pub rows: BTreeMap<u32, Vec<f64>>,
}

impl TowerGrad {
    /// Adds `fv ⊗ g`.
    pub fn add_outer(&mut self, fv: &FeatureVector, g: &[f64]) {
        for &(i, v) in fv.entries() {
            let row = self.rows.entry(i).or_insert_with(|| vec![0.0; g.len()]);
            for (r, gk) in row.iter_mut().zip(g) {
                *r += v * gk;
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.rows.values().all(|r| r.iter().all(|v| *v == 0.0))
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.rows
            .get(&(row as u32))
            .map(|r| r[col])
            .unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EncoderGrad {
    pub mention: TowerGrad,
    pub event: TowerGrad,
}

impl EncoderGrad {
    pub fn tower(&self, tower: Tower) -> &TowerGrad {
        match tower {
            Tower::Mention => &self.mention,
            Tower::Event => &self.event,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatchMention {
    pub features: FeatureVector,
    pub gold: BTreeSet<String>,
}

#[derive(Debug, Clone)]
pub struct BatchEvent {
    pub id: String,
    pub features: FeatureVector,
}

/// Mentions with their gold sets and the in-batch events, deduplicated by id.
#[derive(Debug, Clone)]
pub struct LinkingBatch {
    pub mentions: Vec<BatchMention>,
    pub events: Vec<BatchEvent>,
}

impl LinkingBatch {
    /// Keeps the first occurrence of every event id.
    pub fn new(mentions: Vec<BatchMention>, events: Vec<BatchEvent>) -> Self {
        let mut seen = BTreeSet::new();
        let events = events
            .into_iter()
            .filter(|e| seen.insert(e.id.clone()))
            .collect();
        LinkingBatch { mentions, events }
    }
}

#[derive(Debug, Clone)]
pub struct LinkingLoss {
    pub loss: f64,
    /// Every label in the batch was identical.
    pub degenerate: bool,
    pub grad: EncoderGrad,
}

/// Mean BCE over every (mention, in-batch event) pair.
///
/// An event is a positive for a mention iff its id is in the mention's
/// gold set; all other in-batch events, including other mentions' golds,
/// are negatives.
pub fn linking_loss(params: &EncoderParams, batch: &LinkingBatch) -> Result<LinkingLoss> {
    if batch.mentions.is_empty() || batch.events.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let m_enc = batch
        .mentions
        .iter()
        .map(|m| params.encode(&m.features, Tower::Mention))
        .collect::<Result<Vec<_>>>()?;
    let e_enc = batch
        .events
        .iter()
        .map(|e| params.encode(&e.features, Tower::Event))
        .collect::<Result<Vec<_>>>()?;

    let d = params.dim;
    let n_pairs = (batch.mentions.len() * batch.events.len()) as f64;
    let mut loss = 0.0;
    let mut positives = 0usize;
    let mut g_m = vec![vec![0.0; d]; m_enc.len()];
    let mut g_e = vec![vec![0.0; d]; e_enc.len()];
    for (i, mention) in batch.mentions.iter().enumerate() {
        for (j, event) in batch.events.iter().enumerate() {
            let label = mention.gold.contains(&event.id);
            positives += label as usize;
            let s = dot(&m_enc[i], &e_enc[j]);
            loss += bce_with_logit(s, label);
            let g = (sigmoid(s) - label as u8 as f64) / n_pairs;
            for k in 0..d {
                g_m[i][k] += g * e_enc[j][k];
                g_e[j][k] += g * m_enc[i][k];
            }
        }
    }

    let mut grad = EncoderGrad::default();
    for (m, g) in batch.mentions.iter().zip(&g_m) {
        grad.mention.add_outer(&m.features, g);
    }
    for (e, g) in batch.events.iter().zip(&g_e) {
        grad.event.add_outer(&e.features, g);
    }
    Ok(LinkingLoss {
        loss: loss / n_pairs,
        degenerate: positives == 0 || positives as f64 == n_pairs,
        grad,
    })
}

/// One sampled parent–child edge with featurized endpoints.
#[derive(Debug, Clone)]
pub struct HierarchyPair {
    pub parent_id: String,
    pub parent: FeatureVector,
    pub child_id: String,
    pub child: FeatureVector,
}

#[derive(Debug, Clone)]
pub struct HierarchyLoss {
    pub loss: f64,
    pub degenerate: bool,
    pub grad: EncoderGrad,
    pub head_grad: ComplExHead,
}

/// In-batch BCE over parent–child pairs.
///
/// Every pair's parent is scored against every distinct in-batch child.
/// Children of that parent are positives (`-ln σ(s)`), all others are
/// negatives (`-ln(1-σ(s))`). Per-parent sums are averaged over the `N_h`
/// pairs.
pub fn hierarchy_loss(
    params: &EncoderParams,
    head: &ComplExHead,
    pairs: &[HierarchyPair],
) -> Result<HierarchyLoss> {
    if pairs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if head.dim != params.dim {
        return Err(Error::DimensionMismatch {
            expected: params.dim,
            actual: head.dim,
        });
    }
    let d = params.dim;

    // distinct children, each with its own parent id
    let mut seen = BTreeSet::new();
    let children: Vec<&HierarchyPair> = pairs.iter().filter(|p| seen.insert(&p.child_id)).collect();

    let p_enc = pairs
        .iter()
        .map(|p| params.encode(&p.parent, Tower::Event))
        .collect::<Result<Vec<_>>>()?;
    let c_enc = children
        .iter()
        .map(|c| params.encode(&c.child, Tower::Event))
        .collect::<Result<Vec<_>>>()?;
    let p_proj = p_enc.iter().map(|e| head.project(e)).collect::<Result<Vec<Projection>>>()?;
    let c_proj = c_enc.iter().map(|e| head.project(e)).collect::<Result<Vec<Projection>>>()?;

    let n = pairs.len() as f64;
    let mut loss = 0.0;
    let mut positives = 0usize;
    let mut head_grad = ComplExHead::zeros(d);
    let zero = || Projection {
        re: vec![0.0; d],
        im: vec![0.0; d],
    };
    let mut gp: Vec<Projection> = (0..pairs.len()).map(|_| zero()).collect();
    let mut gc: Vec<Projection> = (0..children.len()).map(|_| zero()).collect();

    for (i, pair) in pairs.iter().enumerate() {
        for (j, child) in children.iter().enumerate() {
            let label = child.parent_id == pair.parent_id;
            positives += label as usize;
            let s = score_projected(&p_proj[i], &c_proj[j], &head.r);
            loss += bce_with_logit(s, label);
            let g = (sigmoid(s) - label as u8 as f64) / n;
            let (p, c) = (&p_proj[i], &c_proj[j]);
            for k in 0..d {
                let rk = head.r[k];
                gp[i].im[k] += g * rk * c.re[k];
                gp[i].re[k] -= g * rk * c.im[k];
                gc[j].re[k] += g * rk * p.im[k];
                gc[j].im[k] -= g * rk * p.re[k];
                head_grad.r[k] += g * (p.im[k] * c.re[k] - p.re[k] * c.im[k]);
            }
        }
    }

    let mut grad = EncoderGrad::default();
    let mut backprop = |enc: &[f64], fv: &FeatureVector, g: &Projection| {
        ComplExHead::accumulate_param_grad(&mut head_grad, enc, &g.re, &g.im);
        let mut g_enc = vec![0.0; d];
        head.backprop_encoding(&g.re, &g.im, &mut g_enc);
        grad.event.add_outer(fv, &g_enc);
    };
    for (i, pair) in pairs.iter().enumerate() {
        backprop(&p_enc[i], &pair.parent, &gp[i]);
    }
    for (j, child) in children.iter().enumerate() {
        backprop(&c_enc[j], &child.child, &gc[j]);
    }

    let total = pairs.len() * children.len();
    Ok(HierarchyLoss {
        loss: loss / n,
        degenerate: positives == 0 || positives == total,
        grad,
        head_grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(dim: usize, i: u32) -> FeatureVector {
        FeatureVector::from_entries(dim, vec![(i, 1.0)]).unwrap()
    }

    /// F = 2, d = 1 params whose mention/event encodings are set directly.
    fn scalar_params(mention: [f64; 2], event: [f64; 2]) -> EncoderParams {
        EncoderParams {
            features: 2,
            dim: 1,
            mention: mention.to_vec(),
            event: event.to_vec(),
        }
    }

    fn gold(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn bce_is_stable() {
        assert!((bce_with_logit(0.0, true) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(bce_with_logit(800.0, true) < 1e-300);
        assert!((bce_with_logit(800.0, false) - 800.0).abs() < 1e-9);
        assert!((sigmoid(-800.0)).abs() < 1e-300);
    }

    #[test]
    fn single_pair_at_zero_score_is_ln2() {
        let params = scalar_params([0.0, 0.0], [1.0, 1.0]);
        let batch = LinkingBatch::new(
            vec![BatchMention {
                features: unit(2, 0),
                gold: gold(&["A"]),
            }],
            vec![BatchEvent {
                id: "A".into(),
                features: unit(2, 0),
            }],
        );
        let out = linking_loss(&params, &batch).unwrap();
        assert!((out.loss - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(out.degenerate);
    }

    #[test]
    fn saturated_scores_give_vanishing_loss() {
        // mention encodings m0=4, m1=-4; events e0=5, e1=-5 → scores ±20
        let params = scalar_params([4.0, -4.0], [5.0, -5.0]);
        let batch = LinkingBatch::new(
            vec![
                BatchMention {
                    features: unit(2, 0),
                    gold: gold(&["A"]),
                },
                BatchMention {
                    features: unit(2, 1),
                    gold: gold(&["B"]),
                },
            ],
            vec![
                BatchEvent {
                    id: "A".into(),
                    features: unit(2, 0),
                },
                BatchEvent {
                    id: "B".into(),
                    features: unit(2, 1),
                },
            ],
        );
        let out = linking_loss(&params, &batch).unwrap();
        assert!(out.loss < 1e-8);
        assert!(!out.degenerate);
    }

    #[test]
    fn two_by_two_linking_loss_by_hand() {
        // m0=1, m1=2; e0=0.5, e1=-1 → scores [[0.5,-1],[1,-2]]
        // labels: m0 gold {A}, m1 gold {A,B}
        let params = scalar_params([1.0, 2.0], [0.5, -1.0]);
        let batch = LinkingBatch::new(
            vec![
                BatchMention {
                    features: unit(2, 0),
                    gold: gold(&["A"]),
                },
                BatchMention {
                    features: unit(2, 1),
                    gold: gold(&["A", "B"]),
                },
            ],
            vec![
                BatchEvent {
                    id: "A".into(),
                    features: unit(2, 0),
                },
                BatchEvent {
                    id: "B".into(),
                    features: unit(2, 1),
                },
                // duplicate id is dropped
                BatchEvent {
                    id: "A".into(),
                    features: unit(2, 1),
                },
            ],
        );
        assert_eq!(batch.events.len(), 2);
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let expected = (-(sig(0.5)).ln() - (1.0 - sig(-1.0)).ln() - sig(1.0).ln() - sig(-2.0).ln()) / 4.0;
        let out = linking_loss(&params, &batch).unwrap();
        assert!((out.loss - expected).abs() < 1e-12, "{} vs {expected}", out.loss);
    }

    #[test]
    fn empty_batch_rejected() {
        let params = scalar_params([0.0; 2], [0.0; 2]);
        assert!(matches!(
            linking_loss(&params, &LinkingBatch::new(vec![], vec![])),
            Err(Error::EmptyBatch)
        ));
        let head = ComplExHead::zeros(1);
        assert!(matches!(hierarchy_loss(&params, &head, &[]), Err(Error::EmptyBatch)));
    }

    fn scalar_head(r: f64) -> ComplExHead {
        // Re(e) = e, Im(e) = 1 so s(p, c) = r·(c − p)
        ComplExHead {
            dim: 1,
            w_re: vec![1.0],
            w_im: vec![0.0],
            b_re: vec![0.0],
            b_im: vec![1.0],
            r: vec![r],
        }
    }

    fn pair(parent: &str, pf: u32, child: &str, cf: u32, dim: usize) -> HierarchyPair {
        HierarchyPair {
            parent_id: parent.into(),
            parent: unit(dim, pf),
            child_id: child.into(),
            child: unit(dim, cf),
        }
    }

    #[test]
    fn single_hierarchy_pair_at_zero_is_ln2() {
        let params = scalar_params([0.0; 2], [0.0, 0.0]);
        let out = hierarchy_loss(&params, &scalar_head(1.0), &[pair("P", 0, "C", 1, 2)]).unwrap();
        assert!((out.loss - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(out.degenerate);
    }

    #[test]
    fn saturated_hierarchy_loss_vanishes() {
        // Re(e) = e, Im(e) = (-e1, e0), r = (1, 1) → s(p, c) = 2·cross(p, c).
        let head = ComplExHead {
            dim: 2,
            w_re: vec![1.0, 0.0, 0.0, 1.0],
            w_im: vec![0.0, -1.0, 1.0, 0.0],
            b_re: vec![0.0; 2],
            b_im: vec![0.0; 2],
            r: vec![1.0, 1.0],
        };
        // rows: P1=(1,0), C1=(10,10), P2=(0,1), C2=(-10,-10)
        let params = EncoderParams {
            features: 4,
            dim: 2,
            mention: vec![0.0; 8],
            event: vec![1.0, 0.0, 10.0, 10.0, 0.0, 1.0, -10.0, -10.0],
        };
        let pairs = [pair("P1", 0, "C1", 1, 4), pair("P2", 2, "C2", 3, 4)];
        let out = hierarchy_loss(&params, &head, &pairs).unwrap();
        assert!(out.loss < 1e-8, "{}", out.loss);
        assert!(!out.degenerate);
    }

    #[test]
    fn two_pair_hierarchy_loss_by_hand() {
        // s(p, c) = c − p with p1=0, c1=1, p2=2, c2=-1
        let params = EncoderParams {
            features: 4,
            dim: 1,
            mention: vec![0.0; 4],
            event: vec![0.0, 1.0, 2.0, -1.0],
        };
        let pairs = [pair("P1", 0, "C1", 1, 4), pair("P2", 2, "C2", 3, 4)];
        let out = hierarchy_loss(&params, &scalar_head(1.0), &pairs).unwrap();
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        // parent 1: C1 positive (s=1), C2 negative (s=-1)
        // parent 2: C1 negative (s=-1), C2 positive (s=-3)
        let expected = (-(sig(1.0)).ln() - (1.0 - sig(-1.0)).ln() - (1.0 - sig(-1.0)).ln() - sig(-3.0).ln()) / 2.0;
        assert!((out.loss - expected).abs() < 1e-12);
        assert!(out.grad.mention.is_zero());
    }
}
