//! Combined scoring and the relevance-network training objective.
//!
//! `Score(x) = sum_m s_m(x) * p_m(x)`. Feedback enters through a hinge loss
//! against the instance ranked at the `tau` quantile: labeled anomalies
//! should score above it, labeled nominals below. The full objective adds
//! `lambda` times the mean prior cross-entropy over the whole dataset.

use std::collections::HashSet;

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::error::{GladError, Result};
use crate::fssn::{prior_term, prior_term_grad, Activations, Adam, FssnGrad, FssnParams, TrainConfig};
use crate::loda::row_slice;
use crate::rng;

#[inline]
pub fn glad_score(member_scores: &[f64], relevance: &[f64]) -> f64 {
    member_scores.iter().zip(relevance).map(|(s, p)| s * p).sum()
}

/// Features together with their precomputed member scores.
#[derive(Debug, Clone, Copy)]
pub struct ScoredData<'a> {
    pub features: &'a Array2<f64>,
    pub member_scores: &'a Array2<f64>,
}

impl<'a> ScoredData<'a> {
    pub fn new(features: &'a Array2<f64>, member_scores: &'a Array2<f64>) -> Result<Self> {
        if features.nrows() != member_scores.nrows() {
            return Err(GladError::DimensionMismatch {
                expected: features.nrows(),
                got: member_scores.nrows(),
            });
        }
        Ok(Self {
            features,
            member_scores,
        })
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    fn check(&self, params: &FssnParams) -> Result<()> {
        if params.outputs != self.member_scores.ncols() {
            return Err(GladError::DimensionMismatch {
                expected: self.member_scores.ncols(),
                got: params.outputs,
            });
        }
        if params.input_dim != self.features.ncols() {
            return Err(GladError::DimensionMismatch {
                expected: self.features.ncols(),
                got: params.input_dim,
            });
        }
        Ok(())
    }

    /// Combined score of every instance under `params`.
    pub fn scores(&self, params: &FssnParams) -> Result<Vec<f64>> {
        self.check(params)?;
        let mut act = Activations::new(params);
        Ok((0..self.n()).map(|i| self.score_with(params, i, &mut act)).collect())
    }

    fn score_with(&self, params: &FssnParams, i: usize, act: &mut Activations) -> f64 {
        let row = self.features.row(i);
        params.forward_into(row_slice(&row).as_ref(), act);
        let srow = self.member_scores.row(i);
        glad_score(row_slice(&srow).as_ref(), &act.out)
    }
}

/// Indices sorted by descending score; equal scores keep ascending index order.
pub fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauAnchor {
    pub index: usize,
    pub score: f64,
    pub tau: f64,
    /// 1-based rank of the anchor, `ceil(tau * n)`.
    pub rank: usize,
}

pub fn anchor_rank(n: usize, tau: f64) -> usize {
    // The small offset keeps exact products such as 0.2 * 5 at rank 1.
    ((tau * n as f64 - 1e-9).ceil() as usize).clamp(1, n.max(1))
}

/// The anchor score is the score at rank `ceil(tau * n)`; the anchor
/// instance is the lowest-index instance holding that score.
pub fn compute_tau_anchor(scores: &[f64], tau: f64) -> TauAnchor {
    assert!(!scores.is_empty(), "anchor needs at least one score");
    let order = ranking(scores);
    let rank = anchor_rank(scores.len(), tau);
    let score = scores[order[rank - 1]];
    let index = scores
        .iter()
        .position(|s| s.to_bits() == score.to_bits())
        .expect("anchor score present");
    TauAnchor {
        index,
        score,
        tau,
        rank,
    }
}

#[inline]
pub fn hinge_loss(q: f64, score: f64, y: Label) -> f64 {
    (y.sign() * (q - score)).max(0.0)
}

/// Hinge against the frozen anchor score plus hinge against the anchor
/// instance re-scored under the current parameters.
#[inline]
pub fn aad_loss(anchor_score: f64, rescored_anchor: f64, x_score: f64, y: Label) -> f64 {
    hinge_loss(anchor_score, x_score, y) + hinge_loss(rescored_anchor, x_score, y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub lambda: f64,
    pub tau: f64,
    pub b: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            tau: 0.03,
            b: 0.5,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(GladError::InvalidConfig("lambda must be non-negative".into()));
        }
        if !(self.tau > 0.0 && self.tau < 0.5) {
            return Err(GladError::InvalidConfig(format!(
                "tau must be in (0, 0.5), got {}",
                self.tau
            )));
        }
        if !(self.b > 0.0 && self.b < 1.0) {
            return Err(GladError::InvalidConfig(format!(
                "bias probability b must be in (0, 1), got {}",
                self.b
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledEntry {
    pub index: usize,
    pub label: Label,
    pub iteration: usize,
}

/// Analyst feedback history. Each instance is labeled at most once.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<LabeledEntry>", into = "Vec<LabeledEntry>")]
pub struct LabeledSet {
    entries: Vec<LabeledEntry>,
    seen: HashSet<usize>,
}

impl PartialEq for LabeledSet {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl TryFrom<Vec<LabeledEntry>> for LabeledSet {
    type Error = GladError;

    fn try_from(entries: Vec<LabeledEntry>) -> Result<Self> {
        Self::from_entries(entries)
    }
}

impl From<LabeledSet> for Vec<LabeledEntry> {
    fn from(set: LabeledSet) -> Self {
        set.entries
    }
}

impl LabeledSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: Vec<LabeledEntry>) -> Result<Self> {
        let mut set = Self::new();
        for e in entries {
            set.insert(e.index, e.label, e.iteration)?;
        }
        Ok(set)
    }

    pub fn insert(&mut self, index: usize, label: Label, iteration: usize) -> Result<()> {
        if self.contains(index) {
            return Err(GladError::InvalidConfig(format!(
                "instance {index} is already labeled"
            )));
        }
        self.seen.insert(index);
        self.entries.push(LabeledEntry {
            index,
            label,
            iteration,
        });
        Ok(())
    }

    pub fn contains(&self, index: usize) -> bool {
        self.seen.contains(&index)
    }

    pub fn entries(&self) -> &[LabeledEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn n_anomalies(&self) -> usize {
        self.entries.iter().filter(|e| e.label.is_anomaly()).count()
    }

    pub fn mask(&self, n: usize) -> Vec<bool> {
        let mut mask = vec![false; n];
        for e in &self.entries {
            if e.index < n {
                mask[e.index] = true;
            }
        }
        mask
    }

    pub fn pairs(&self) -> Vec<(usize, Label)> {
        self.entries.iter().map(|e| (e.index, e.label)).collect()
    }
}

/// Loss value split into its two terms (the prior part already scaled by lambda).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub aad: f64,
    pub prior: f64,
}

impl LossParts {
    pub fn total(&self) -> f64 {
        self.aad + self.prior
    }
}

/// Loss and gradient over one batch: mean AAD loss over `labeled` plus
/// `lambda` times the mean prior loss over `prior_rows`. Either set may be
/// empty, in which case its term is zero.
pub fn batch_loss_and_grad(
    params: &FssnParams,
    data: &ScoredData<'_>,
    prior_rows: &[usize],
    labeled: &[(usize, Label)],
    anchor: &TauAnchor,
    cfg: &LossConfig,
) -> (LossParts, FssnGrad) {
    let mut grad = FssnGrad::zeros_like(params);
    let mut act = Activations::new(params);
    let mut og = vec![0.0; params.outputs];

    let mut prior = 0.0;
    if !prior_rows.is_empty() && cfg.lambda > 0.0 {
        let scale = cfg.lambda / prior_rows.len() as f64;
        for &i in prior_rows {
            let row = data.features.row(i);
            let x = row_slice(&row);
            params.forward_into(x.as_ref(), &mut act);
            prior += prior_term(&act.out, cfg.b);
            prior_term_grad(&act.out, cfg.b, &mut og);
            og.iter_mut().for_each(|g| *g *= scale);
            params.backward_accumulate(x.as_ref(), &act, &og, &mut grad);
        }
        prior *= scale;
    }

    let mut aad = 0.0;
    if !labeled.is_empty() {
        let scale = 1.0 / labeled.len() as f64;
        let anchor_row = data.features.row(anchor.index);
        let anchor_x = row_slice(&anchor_row);
        let anchor_s_row = data.member_scores.row(anchor.index);
        let anchor_s = row_slice(&anchor_s_row);
        let mut anchor_act = Activations::new(params);
        params.forward_into(anchor_x.as_ref(), &mut anchor_act);
        let rescored = glad_score(anchor_s.as_ref(), &anchor_act.out);

        // Accumulated derivative of the loss with respect to Score(x_tau).
        let mut anchor_coef = 0.0;
        for &(i, y) in labeled {
            let row = data.features.row(i);
            let x = row_slice(&row);
            let srow = data.member_scores.row(i);
            let s = row_slice(&srow);
            params.forward_into(x.as_ref(), &mut act);
            let score = glad_score(s.as_ref(), &act.out);
            let ys = y.sign();
            let mut coef = 0.0;
            let t1 = ys * (anchor.score - score);
            if t1 > 0.0 {
                aad += t1;
                coef -= ys;
            }
            let t2 = ys * (rescored - score);
            if t2 > 0.0 {
                aad += t2;
                coef -= ys;
                anchor_coef += ys * scale;
            }
            if coef != 0.0 {
                for (g, sm) in og.iter_mut().zip(s.iter()) {
                    *g = coef * scale * sm;
                }
                params.backward_accumulate(x.as_ref(), &act, &og, &mut grad);
            }
        }
        aad *= scale;
        if anchor_coef != 0.0 {
            for (g, sm) in og.iter_mut().zip(anchor_s.iter()) {
                *g = anchor_coef * sm;
            }
            params.backward_accumulate(anchor_x.as_ref(), &anchor_act, &og, &mut grad);
        }
    }
    (LossParts { aad, prior }, grad)
}

/// Full-batch objective: mean AAD loss over the labeled set plus `lambda`
/// times the mean prior loss over every instance.
pub fn fssn_loss_and_grad(
    params: &FssnParams,
    data: &ScoredData<'_>,
    labeled: &LabeledSet,
    anchor: &TauAnchor,
    cfg: &LossConfig,
) -> Result<(LossParts, FssnGrad)> {
    data.check(params)?;
    let rows: Vec<usize> = (0..data.n()).collect();
    Ok(batch_loss_and_grad(params, data, &rows, &labeled.pairs(), anchor, cfg))
}

pub fn fssn_loss(
    params: &FssnParams,
    data: &ScoredData<'_>,
    labeled: &LabeledSet,
    anchor: &TauAnchor,
    cfg: &LossConfig,
) -> Result<LossParts> {
    Ok(fssn_loss_and_grad(params, data, labeled, anchor, cfg)?.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateReport {
    pub anchor: TauAnchor,
    pub steps: usize,
    /// Labeled samples (after upsampling) seen during the pass.
    pub labeled_samples: usize,
    /// Mean batch loss over the pass.
    pub mean_batch_loss: f64,
    /// Set when the pass was aborted and the incoming parameters restored.
    pub aborted: Option<String>,
}

/// One retraining pass.
///
/// The anchor is computed from the incoming parameters and frozen. The
/// dataset is shuffled into mini-batches for the prior term; the labeled
/// set, replicated `upsample_factor` times and shuffled, is dealt
/// round-robin across the same batches for the AAD term.
pub fn update_model(
    params: &mut FssnParams,
    data: &ScoredData<'_>,
    labeled: &LabeledSet,
    loss_cfg: &LossConfig,
    train_cfg: &TrainConfig,
    pass_index: u64,
) -> Result<UpdateReport> {
    data.check(params)?;
    loss_cfg.validate()?;
    train_cfg.validate()?;
    let scores = data.scores(params)?;
    let anchor = compute_tau_anchor(&scores, loss_cfg.tau);

    let mut rng = rng::rng_for(train_cfg.seed, rng::stream::UPDATE, pass_index);
    let mut order: Vec<usize> = (0..data.n()).collect();
    order.shuffle(&mut rng);
    let mut stream: Vec<(usize, Label)> = labeled
        .pairs()
        .into_iter()
        .flat_map(|p| std::iter::repeat_n(p, train_cfg.upsample_factor))
        .collect();
    stream.shuffle(&mut rng);

    let batches: Vec<&[usize]> = order.chunks(train_cfg.batch_size).collect();
    let n_batches = batches.len();
    let mut labeled_batches: Vec<Vec<(usize, Label)>> = vec![Vec::new(); n_batches];
    for (j, item) in stream.iter().enumerate() {
        labeled_batches[j % n_batches].push(*item);
    }

    let incoming = params.clone();
    let mut adam = Adam::new(params, train_cfg);
    let mut total = 0.0;
    for (rows, lab) in batches.iter().zip(&labeled_batches) {
        let (parts, grad) = batch_loss_and_grad(params, data, rows, lab, &anchor, loss_cfg);
        let abort = |params: &mut FssnParams, why: &str| {
            *params = incoming.clone();
            tracing::warn!(pass = pass_index, "{why}; restoring incoming parameters");
        };
        if !parts.total().is_finite() {
            abort(params, "non-finite loss");
            return Ok(UpdateReport {
                anchor,
                steps: adam.steps() as usize,
                labeled_samples: stream.len(),
                mean_batch_loss: f64::NAN,
                aborted: Some(GladError::NonFiniteLoss.to_string()),
            });
        }
        if let Err(e) = adam.step(params, &grad) {
            abort(params, "non-finite gradient");
            return Ok(UpdateReport {
                anchor,
                steps: adam.steps() as usize,
                labeled_samples: stream.len(),
                mean_batch_loss: f64::NAN,
                aborted: Some(e.to_string()),
            });
        }
        total += parts.total();
    }
    Ok(UpdateReport {
        anchor,
        steps: adam.steps() as usize,
        labeled_samples: stream.len(),
        mean_batch_loss: total / n_batches as f64,
        aborted: None,
    })
}
