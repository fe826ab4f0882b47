//! Comparison methods for discovery benchmarks.
//!
//! - Unweighted LODA: a fixed ranking by mean member score.
//! - LODA-AAD: one global weight per member, refit after every label with
//!   the same quantile-anchored hinge loss the relevance network uses.
//! - Random querying: a floor that ignores the detectors entirely.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::active::{select_query, Analyst, Trace, TraceRecord};
use crate::data::Label;
use crate::error::{GladError, Result};
use crate::loda::{baseline_scores, row_slice};
use crate::objective::{compute_tau_anchor, hinge_loss, LabeledSet};
use crate::rng;

fn ask<A: Analyst + ?Sized>(analyst: &mut A, index: usize) -> Result<Label> {
    let mut last = String::new();
    for _ in 0..crate::active::ANALYST_ATTEMPTS {
        match analyst.label(index) {
            Ok(l) => return Ok(l),
            Err(e) => last = e.to_string(),
        }
    }
    Err(GladError::AnalystUnavailable {
        attempts: crate::active::ANALYST_ATTEMPTS,
        message: last,
    })
}

/// Query in order of a score vector that never changes.
fn run_static<A: Analyst + ?Sized>(scores: &[f64], budget: usize, analyst: &mut A) -> Result<Trace> {
    let mut mask = vec![false; scores.len()];
    let mut trace = Vec::with_capacity(budget);
    let mut found = 0;
    for t in 1..=budget {
        let Some(q) = select_query(scores, &mask) else { break };
        let label = ask(analyst, q)?;
        mask[q] = true;
        found += usize::from(label.is_anomaly());
        trace.push(TraceRecord {
            iteration: t,
            queried_index: q,
            label,
            cumulative_anomalies: found,
            loss: None,
        });
    }
    Ok(trace)
}

/// Baseline LODA: rank by mean member score, learn nothing.
pub fn run_unweighted_session<A: Analyst + ?Sized>(
    member_scores: &Array2<f64>,
    budget: usize,
    analyst: &mut A,
) -> Result<Trace> {
    run_static(&baseline_scores(member_scores), budget, analyst)
}

/// Uniformly random queries without replacement.
pub fn run_random_session<A: Analyst + ?Sized>(
    n: usize,
    budget: usize,
    seed: u64,
    analyst: &mut A,
) -> Result<Trace> {
    let mut rng = rng::rng_for(seed, rng::stream::RANDOM_QUERY, 0);
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut trace = Vec::with_capacity(budget);
    let mut found = 0;
    for t in 1..=budget {
        if remaining.is_empty() {
            break;
        }
        let q = remaining.swap_remove(rng.random_range(0..remaining.len()));
        let label = ask(analyst, q)?;
        found += usize::from(label.is_anomaly());
        trace.push(TraceRecord {
            iteration: t,
            queried_index: q,
            label,
            cumulative_anomalies: found,
            loss: None,
        });
    }
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LodaAadConfig {
    pub tau: f64,
    /// Weight of `||w - w_uniform||^2`.
    pub regularizer: f64,
    pub step_size: f64,
    /// Gradient steps per refit.
    pub steps: usize,
}

impl Default for LodaAadConfig {
    fn default() -> Self {
        Self {
            tau: 0.03,
            regularizer: 1.0,
            step_size: 0.01,
            steps: 100,
        }
    }
}

/// Global member weights, initialized to `1 / sqrt(M)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalWeights {
    pub w: Vec<f64>,
}

impl GlobalWeights {
    pub fn uniform(m: usize) -> Self {
        Self {
            w: vec![1.0 / (m as f64).sqrt(); m],
        }
    }

    pub fn scores(&self, member_scores: &Array2<f64>) -> Vec<f64> {
        member_scores
            .rows()
            .into_iter()
            .map(|r| r.iter().zip(&self.w).map(|(s, w)| s * w).sum())
            .collect()
    }

    fn score_row(&self, member_scores: &Array2<f64>, i: usize) -> f64 {
        let row = member_scores.row(i);
        row_slice(&row).iter().zip(&self.w).map(|(s, w)| s * w).sum()
    }
}

/// Mean AAD hinge loss of a global weight vector over the labeled set,
/// against an anchor frozen from `anchor_index` / `anchor_score`.
pub fn loda_aad_loss(
    weights: &GlobalWeights,
    member_scores: &Array2<f64>,
    labeled: &LabeledSet,
    anchor_index: usize,
    anchor_score: f64,
) -> f64 {
    if labeled.is_empty() {
        return 0.0;
    }
    let rescored = weights.score_row(member_scores, anchor_index);
    labeled
        .entries()
        .iter()
        .map(|e| {
            let s = weights.score_row(member_scores, e.index);
            hinge_loss(anchor_score, s, e.label) + hinge_loss(rescored, s, e.label)
        })
        .sum::<f64>()
        / labeled.len() as f64
}

/// Refit the weights on the labeled set.
///
/// Proximal gradient descent: a subgradient step on the hinge term, then the
/// closed-form proximal map of `regularizer * ||w - w_uniform||^2`. The
/// proximal form stays stable for any regularizer weight and reduces to
/// `w_uniform` as the weight grows. Returns the final hinge loss.
pub fn refit_global_weights(
    weights: &mut GlobalWeights,
    member_scores: &Array2<f64>,
    labeled: &LabeledSet,
    cfg: &LodaAadConfig,
) -> f64 {
    let m = weights.w.len();
    let uniform = GlobalWeights::uniform(m);
    let anchor = compute_tau_anchor(&weights.scores(member_scores), cfg.tau);
    if labeled.is_empty() {
        return 0.0;
    }
    let scale = 1.0 / labeled.len() as f64;
    let shrink = 1.0 / (1.0 + 2.0 * cfg.step_size * cfg.regularizer);
    let mut grad = vec![0.0; m];
    for _ in 0..cfg.steps {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let rescored = weights.score_row(member_scores, anchor.index);
        let anchor_row = member_scores.row(anchor.index);
        for e in labeled.entries() {
            let row = member_scores.row(e.index);
            let s = weights.score_row(member_scores, e.index);
            let y = e.label.sign();
            if y * (anchor.score - s) > 0.0 {
                for (g, sm) in grad.iter_mut().zip(row.iter()) {
                    *g -= y * sm * scale;
                }
            }
            if y * (rescored - s) > 0.0 {
                for ((g, sm), am) in grad.iter_mut().zip(row.iter()).zip(anchor_row.iter()) {
                    *g += y * (am - sm) * scale;
                }
            }
        }
        for ((w, g), u) in weights.w.iter_mut().zip(&grad).zip(&uniform.w) {
            let v = *w - cfg.step_size * g;
            *w = (v + 2.0 * cfg.step_size * cfg.regularizer * u) * shrink;
        }
    }
    loda_aad_loss(weights, member_scores, labeled, anchor.index, anchor.score)
}

/// LODA-AAD: globally weighted LODA refit after every label.
pub fn run_loda_aad_session<A: Analyst + ?Sized>(
    member_scores: &Array2<f64>,
    budget: usize,
    analyst: &mut A,
    cfg: &LodaAadConfig,
) -> Result<(Trace, GlobalWeights)> {
    let n = member_scores.nrows();
    let mut weights = GlobalWeights::uniform(member_scores.ncols());
    let mut labeled = LabeledSet::new();
    let mut trace = Vec::with_capacity(budget);
    for t in 1..=budget {
        let scores = weights.scores(member_scores);
        let Some(q) = select_query(&scores, &labeled.mask(n)) else { break };
        let label = ask(analyst, q)?;
        labeled.insert(q, label, t)?;
        let loss = refit_global_weights(&mut weights, member_scores, &labeled, cfg);
        if weights.w.iter().any(|w| !w.is_finite()) {
            return Err(GladError::NonFiniteLoss);
        }
        trace.push(TraceRecord {
            iteration: t,
            queried_index: q,
            label,
            cumulative_anomalies: labeled.n_anomalies(),
            loss: Some(loss),
        });
    }
    Ok((trace, weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::active::{validate_trace, OracleAnalyst};
    use crate::data::{make_toy, standardize};
    use crate::loda::LodaEnsemble;
    use crate::objective::ranking;

    fn toy_scores(seed: u64) -> (Array2<f64>, Vec<Label>) {
        let toy = make_toy(seed, 500, 15).unwrap();
        let (std_toy, _) = standardize(&toy);
        let e = LodaEnsemble::build(&std_toy.features, 4, seed).unwrap();
        (e.score_matrix(&std_toy.features).unwrap(), toy.labels)
    }

    #[test]
    fn unweighted_follows_descending_baseline() {
        let (s, labels) = toy_scores(1);
        let trace = run_unweighted_session(&s, 30, &mut OracleAnalyst::new(&labels)).unwrap();
        let order = ranking(&baseline_scores(&s));
        let queried: Vec<usize> = trace.iter().map(|r| r.queried_index).collect();
        assert_eq!(queried, order[..30].to_vec());
        validate_trace(&trace).unwrap();
        assert!(trace.last().unwrap().cumulative_anomalies >= 1);
        let again = run_unweighted_session(&s, 30, &mut OracleAnalyst::new(&labels)).unwrap();
        assert_eq!(trace, again);
    }

    #[test]
    fn random_queries_are_distinct_and_seeded() {
        let (s, labels) = toy_scores(2);
        let a = run_random_session(s.nrows(), 40, 7, &mut OracleAnalyst::new(&labels)).unwrap();
        let b = run_random_session(s.nrows(), 40, 7, &mut OracleAnalyst::new(&labels)).unwrap();
        let c = run_random_session(s.nrows(), 40, 8, &mut OracleAnalyst::new(&labels)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        validate_trace(&a).unwrap();
    }

    #[test]
    fn empty_feedback_keeps_uniform_weights() {
        let (s, _) = toy_scores(3);
        let mut w = GlobalWeights::uniform(4);
        refit_global_weights(&mut w, &s, &LabeledSet::new(), &LodaAadConfig::default());
        assert_eq!(w, GlobalWeights::uniform(4));
        assert_eq!(ranking(&w.scores(&s)), ranking(&baseline_scores(&s)));
    }

    #[test]
    fn refit_raises_labeled_anomaly_below_anchor() {
        let (s, labels) = toy_scores(4);
        let mut w = GlobalWeights::uniform(4);
        let before = w.scores(&s);
        let anchor = compute_tau_anchor(&before, 0.03);
        let target = (0..s.nrows())
            .find(|&i| labels[i].is_anomaly() && before[i] < anchor.score)
            .expect("an anomaly below the anchor");
        let mut set = LabeledSet::new();
        set.insert(target, Label::Anomaly, 1).unwrap();
        refit_global_weights(&mut w, &s, &set, &LodaAadConfig::default());
        assert!(w.scores(&s)[target] > before[target]);
    }

    #[test]
    fn huge_regularizer_degenerates_to_baseline() {
        let (s, labels) = toy_scores(5);
        let cfg = LodaAadConfig {
            regularizer: 1e12,
            ..LodaAadConfig::default()
        };
        let (trace, w) = run_loda_aad_session(&s, 25, &mut OracleAnalyst::new(&labels), &cfg).unwrap();
        let base = run_unweighted_session(&s, 25, &mut OracleAnalyst::new(&labels)).unwrap();
        let q = |t: &Trace| t.iter().map(|r| r.queried_index).collect::<Vec<_>>();
        assert_eq!(q(&trace), q(&base));
        assert!(w.w.iter().all(|v| (v - 0.5).abs() < 1e-9));
        validate_trace(&trace).unwrap();
    }
}
