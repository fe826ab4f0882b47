//! The budgeted feedback loop.
//!
//! A [`Session`] owns everything one analyst interaction needs: features,
//! the LODA ensemble, the relevance network and the label history. It is
//! re-entrant. [`Session::pending`] exposes the outstanding query and
//! [`Session::submit`] applies one iteration: record the label, retrain,
//! re-rank and pick the next query. [`run_session`] drives the loop to
//! completion against an [`Analyst`].

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::error::{GladError, Result};
use crate::fssn::{self, FssnParams, PrimingReport, TrainConfig};
use crate::loda::{self, LodaEnsemble};
use crate::objective::{
    compute_tau_anchor, fssn_loss, update_model, LabeledSet, LossConfig, ScoredData,
};
use crate::rng;

/// Argmax over unlabeled instances; ties go to the lowest index.
pub fn select_query(scores: &[f64], labeled: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if labeled.get(i).copied().unwrap_or(false) {
            continue;
        }
        match best {
            Some(b) if scores[b] >= s => {}
            _ => best = Some(i),
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub ensemble_size: usize,
    pub budget: usize,
    pub loss: LossConfig,
    pub train: TrainConfig,
    pub seed: u64,
    /// Z-normalize member scores before combining (ablation switch).
    #[serde(default)]
    pub normalize_scores: bool,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            ensemble_size: 15,
            budget: 60,
            loss: LossConfig::default(),
            train: TrainConfig::default(),
            seed: 0,
            normalize_scores: false,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ensemble_size == 0 || self.ensemble_size > loda::MAX_MEMBERS {
            return Err(GladError::InvalidConfig(format!(
                "ensemble size must be in 1..={}",
                loda::MAX_MEMBERS
            )));
        }
        self.loss.validate()?;
        self.train.validate()
    }
}

/// One feedback iteration as recorded in a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// 1-based iteration number.
    pub iteration: usize,
    pub queried_index: usize,
    pub label: Label,
    pub cumulative_anomalies: usize,
    /// Training loss after the update; absent for methods that do not learn.
    pub loss: Option<f64>,
}

pub type Trace = Vec<TraceRecord>;

/// Check the invariants every trace must satisfy: sequential iterations,
/// no repeated query and a discovery counter that increments exactly on
/// anomaly labels.
pub fn validate_trace(trace: &[TraceRecord]) -> std::result::Result<(), String> {
    let mut seen = std::collections::HashSet::new();
    let mut found = 0;
    for (k, r) in trace.iter().enumerate() {
        if r.iteration != k + 1 {
            return Err(format!("record {k} has iteration {}", r.iteration));
        }
        if !seen.insert(r.queried_index) {
            return Err(format!("instance {} queried twice", r.queried_index));
        }
        if r.label.is_anomaly() {
            found += 1;
        }
        if r.cumulative_anomalies != found {
            return Err(format!(
                "iteration {}: counter {} but {} anomalies labeled",
                r.iteration, r.cumulative_anomalies, found
            ));
        }
    }
    Ok(())
}

pub fn write_trace_csv<W: std::io::Write>(trace: &[TraceRecord], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["iteration", "queried_index", "label", "cumulative_anomalies", "loss"])?;
    for r in trace {
        wtr.write_record([
            r.iteration.to_string(),
            r.queried_index.to_string(),
            (r.label.sign() as i8).to_string(),
            r.cumulative_anomalies.to_string(),
            r.loss.map(|l| l.to_string()).unwrap_or_default(),
        ])?;
    }
    wtr.flush().map_err(|e| GladError::io("<trace writer>", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalystError {
    /// The analyst has not answered yet (human mode).
    #[error("label deferred")]
    Deferred,
    #[error("analyst unavailable: {0}")]
    Unavailable(String),
}

pub trait Analyst {
    fn label(&mut self, index: usize) -> std::result::Result<Label, AnalystError>;
}

/// Answers from ground truth.
#[derive(Debug, Clone, Copy)]
pub struct OracleAnalyst<'a> {
    truth: &'a [Label],
}

impl<'a> OracleAnalyst<'a> {
    pub fn new(truth: &'a [Label]) -> Self {
        Self { truth }
    }
}

impl Analyst for OracleAnalyst<'_> {
    fn label(&mut self, index: usize) -> std::result::Result<Label, AnalystError> {
        self.truth
            .get(index)
            .copied()
            .ok_or_else(|| AnalystError::Unavailable(format!("no ground truth for {index}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StepOutcome {
    /// The next query to show the analyst.
    Next(usize),
    /// Budget used up, or every instance labeled.
    Exhausted,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Session {
    config: SessionConfig,
    /// Model-space features (standardized if the caller standardized).
    features: Array2<f64>,
    ensemble: LodaEnsemble,
    params: FssnParams,
    labeled: LabeledSet,
    trace: Trace,
    pending: Option<usize>,
    priming: PrimingReport,
    #[serde(skip)]
    member_scores: Array2<f64>,
}

/// The network a session starts from, before priming.
pub fn initial_params(input_dim: usize, n_members: usize, config: &SessionConfig) -> Result<FssnParams> {
    FssnParams::init(
        input_dim,
        n_members,
        rng::derive_seed(config.seed, rng::stream::NETWORK_INIT, 0),
    )
}

impl PartialEq for Session {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.features == other.features
            && self.ensemble == other.ensemble
            && self.params == other.params
            && self.labeled == other.labeled
            && self.trace == other.trace
            && self.pending == other.pending
            && self.priming == other.priming
    }
}

impl Session {
    /// Build the ensemble from `config.seed`, prime the network and pick the
    /// first query.
    pub fn new(features: Array2<f64>, config: SessionConfig) -> Result<Self> {
        config.validate()?;
        let ensemble = LodaEnsemble::build(&features, config.ensemble_size, config.seed)?;
        Self::with_ensemble(features, ensemble, config)
    }

    pub fn with_ensemble(
        features: Array2<f64>,
        ensemble: LodaEnsemble,
        mut config: SessionConfig,
    ) -> Result<Self> {
        config.ensemble_size = ensemble.len();
        config.validate()?;
        if features.nrows() < 2 {
            return Err(GladError::EmptyDataset);
        }
        let mut params = initial_params(features.ncols(), ensemble.len(), &config)?;
        let prime_cfg = TrainConfig {
            seed: rng::derive_seed(config.seed ^ config.train.seed, rng::stream::PRIMING, 0),
            ..config.train.clone()
        };
        let priming = fssn::prime(&mut params, &features, config.loss.b, &prime_cfg)?;
        let mut session = Self {
            config,
            features,
            ensemble,
            params,
            labeled: LabeledSet::new(),
            trace: Vec::new(),
            pending: None,
            priming,
            member_scores: Array2::zeros((0, 0)),
        };
        session.refresh_member_scores()?;
        session.pending = session.next_query()?;
        Ok(session)
    }

    /// Recompute cached member scores, e.g. after deserialization.
    pub fn refresh_member_scores(&mut self) -> Result<()> {
        let mut s = self.ensemble.score_matrix(&self.features)?;
        if self.config.normalize_scores {
            loda::zscore_columns(&mut s);
        }
        self.member_scores = s;
        Ok(())
    }

    pub(crate) fn ensure_cache(&mut self) -> Result<()> {
        if self.member_scores.nrows() != self.features.nrows() {
            self.refresh_member_scores()?;
        }
        Ok(())
    }

    fn data(&self) -> Result<ScoredData<'_>> {
        ScoredData::new(&self.features, &self.member_scores)
    }

    fn next_query(&self) -> Result<Option<usize>> {
        if self.trace.len() >= self.config.budget {
            return Ok(None);
        }
        let scores = self.scores()?;
        Ok(select_query(&scores, &self.labeled.mask(self.n())))
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn ensemble(&self) -> &LodaEnsemble {
        &self.ensemble
    }

    pub fn params(&self) -> &FssnParams {
        &self.params
    }

    pub fn member_scores(&self) -> &Array2<f64> {
        &self.member_scores
    }

    pub fn labeled(&self) -> &LabeledSet {
        &self.labeled
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn priming(&self) -> &PrimingReport {
        &self.priming
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn iterations(&self) -> usize {
        self.trace.len()
    }

    pub fn budget(&self) -> usize {
        self.config.budget
    }

    pub fn anomalies_found(&self) -> usize {
        self.labeled.n_anomalies()
    }

    pub fn pending(&self) -> Option<usize> {
        self.pending
    }

    pub fn is_exhausted(&self) -> bool {
        self.pending.is_none()
    }

    /// Combined scores of every instance under the current network.
    pub fn scores(&self) -> Result<Vec<f64>> {
        self.data()?.scores(&self.params)
    }

    /// Apply the analyst's label for the pending query and return what to
    /// ask next.
    pub fn submit(&mut self, index: usize, label: Label) -> Result<StepOutcome> {
        self.ensure_cache()?;
        let pending = match self.pending {
            Some(p) => p,
            None if self.trace.len() >= self.config.budget => {
                return Err(GladError::BudgetExhausted)
            }
            None => return Err(GladError::NoPendingQuery),
        };
        if index != pending {
            return Err(GladError::QueryMismatch {
                expected: pending,
                got: index,
            });
        }
        let t = self.trace.len() + 1;
        self.labeled.insert(index, label, t)?;

        let mut params = self.params.clone();
        let data = ScoredData::new(&self.features, &self.member_scores)?;
        let report = update_model(
            &mut params,
            &data,
            &self.labeled,
            &self.config.loss,
            &self.config.train,
            rng::derive_seed(self.config.seed, rng::stream::UPDATE, t as u64),
        )?;
        if let Some(why) = &report.aborted {
            tracing::warn!(iteration = t, "update aborted: {why}");
        }
        let anchor = compute_tau_anchor(&data.scores(&params)?, self.config.loss.tau);
        let loss = fssn_loss(&params, &data, &self.labeled, &anchor, &self.config.loss)?.total();
        self.params = params;
        self.trace.push(TraceRecord {
            iteration: t,
            queried_index: index,
            label,
            cumulative_anomalies: self.labeled.n_anomalies(),
            loss: Some(loss),
        });
        self.pending = self.next_query()?;
        Ok(match self.pending {
            Some(q) => StepOutcome::Next(q),
            None => StepOutcome::Exhausted,
        })
    }

    /// Label the pending query, whatever it is.
    pub fn submit_pending(&mut self, label: Label) -> Result<StepOutcome> {
        let q = self.pending.ok_or(if self.trace.len() >= self.config.budget {
            GladError::BudgetExhausted
        } else {
            GladError::SessionExhausted
        })?;
        self.submit(q, label)
    }
}

/// Attempts per query before a failing analyst pauses the session.
pub const ANALYST_ATTEMPTS: usize = 3;

/// Drive `session` until its budget is used up. If the analyst keeps
/// failing the session is left at the unanswered query and an error is
/// returned; no query is ever skipped.
pub fn run_session<A: Analyst + ?Sized>(session: &mut Session, analyst: &mut A) -> Result<()> {
    while let Some(q) = session.pending() {
        let mut last = None;
        let mut label = None;
        for _ in 0..ANALYST_ATTEMPTS {
            match analyst.label(q) {
                Ok(l) => {
                    label = Some(l);
                    break;
                }
                Err(e) => last = Some(e),
            }
        }
        let Some(label) = label else {
            return Err(GladError::AnalystUnavailable {
                attempts: ANALYST_ATTEMPTS,
                message: last.map(|e| e.to_string()).unwrap_or_default(),
            });
        };
        session.submit(q, label)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_toy, standardize, Dataset};

    fn toy(seed: u64) -> Dataset {
        standardize(&make_toy(seed, 500, 15).unwrap()).0
    }

    fn toy_config(seed: u64, budget: usize) -> SessionConfig {
        SessionConfig {
            ensemble_size: 4,
            budget,
            seed,
            ..SessionConfig::default()
        }
    }

    #[test]
    fn select_query_examples() {
        assert_eq!(select_query(&[0.1, 0.9, 0.5], &[false; 3]), Some(1));
        assert_eq!(select_query(&[0.1, 0.9, 0.5], &[false, true, false]), Some(2));
        assert_eq!(select_query(&[0.3; 4], &[false; 4]), Some(0));
        assert_eq!(select_query(&[0.3; 2], &[true; 2]), None);
    }

    #[test]
    fn zero_budget_session_is_primed_but_idle() {
        let ds = toy(1);
        let mut s = Session::new(ds.features.clone(), toy_config(1, 0)).unwrap();
        assert!(s.pending().is_none());
        assert!(s.priming().converged);
        assert!(matches!(s.submit(0, Label::Anomaly), Err(GladError::BudgetExhausted)));
        let params = s.params().clone();
        run_session(&mut s, &mut OracleAnalyst::new(&ds.labels)).unwrap();
        assert_eq!(s.params(), &params);
        assert!(s.trace().is_empty());
    }

    #[test]
    fn step_guards_and_trace_growth() {
        let ds = toy(2);
        let mut s = Session::new(ds.features.clone(), toy_config(2, 2)).unwrap();
        let q = s.pending().unwrap();
        let wrong = (q + 1) % s.n();
        assert!(matches!(
            s.submit(wrong, Label::Nominal),
            Err(GladError::QueryMismatch { .. })
        ));
        assert!(s.trace().is_empty());
        let out = s.submit(q, ds.labels[q]).unwrap();
        assert_eq!(s.trace().len(), 1);
        let StepOutcome::Next(q2) = out else { panic!("expected a next query") };
        assert_ne!(q2, q);
        assert_eq!(s.submit(q2, ds.labels[q2]).unwrap(), StepOutcome::Exhausted);
        assert!(matches!(s.submit_pending(Label::Nominal), Err(GladError::BudgetExhausted)));
        validate_trace(s.trace()).unwrap();
    }

    #[test]
    fn oracle_sessions_are_deterministic_and_valid() {
        let ds = toy(3);
        let run = || {
            let mut s = Session::new(ds.features.clone(), toy_config(3, 12)).unwrap();
            run_session(&mut s, &mut OracleAnalyst::new(&ds.labels)).unwrap();
            s
        };
        let a = run();
        let b = run();
        assert_eq!(a.trace().len(), 12);
        assert_eq!(a.trace(), b.trace());
        assert_eq!(a.params(), b.params());
        validate_trace(a.trace()).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(a.trace(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iteration,queried_index,label,cumulative_anomalies,loss\n"));
        assert_eq!(text.lines().count(), 13);
    }

    struct Flaky {
        failures_left: usize,
        truth: Vec<Label>,
    }

    impl Analyst for Flaky {
        fn label(&mut self, index: usize) -> std::result::Result<Label, AnalystError> {
            if self.failures_left > 0 {
                self.failures_left -= 1;
                return Err(AnalystError::Unavailable("timeout".into()));
            }
            Ok(self.truth[index])
        }
    }

    #[test]
    fn failing_analyst_pauses_without_skipping() {
        let ds = toy(4);
        let mut s = Session::new(ds.features.clone(), toy_config(4, 3)).unwrap();
        let first = s.pending().unwrap();
        let mut analyst = Flaky {
            failures_left: 10,
            truth: ds.labels.clone(),
        };
        let err = run_session(&mut s, &mut analyst).unwrap_err();
        assert!(matches!(err, GladError::AnalystUnavailable { attempts: 3, .. }));
        assert_eq!(s.pending(), Some(first));
        assert!(s.trace().is_empty());

        // Transient failures are retried.
        let mut analyst = Flaky {
            failures_left: 2,
            truth: ds.labels.clone(),
        };
        run_session(&mut s, &mut analyst).unwrap();
        assert_eq!(s.trace().len(), 3);
        assert_eq!(s.trace()[0].queried_index, first);
    }

    #[test]
    fn validate_trace_catches_violations() {
        let rec = |it, idx, label: Label, c| TraceRecord {
            iteration: it,
            queried_index: idx,
            label,
            cumulative_anomalies: c,
            loss: None,
        };
        assert!(validate_trace(&[rec(1, 0, Label::Anomaly, 1), rec(2, 1, Label::Nominal, 1)]).is_ok());
        assert!(validate_trace(&[rec(1, 0, Label::Anomaly, 1), rec(2, 0, Label::Nominal, 1)]).is_err());
        assert!(validate_trace(&[rec(1, 0, Label::Nominal, 1)]).is_err());
        assert!(validate_trace(&[rec(2, 0, Label::Nominal, 0)]).is_err());
    }
}
