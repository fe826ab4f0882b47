//! The 2-D toy walkthrough: relevance surfaces before priming, after
//! priming and after a run of oracle feedback, plus the member regions.

use serde::{Deserialize, Serialize};

use crate::active::{initial_params, run_session, OracleAnalyst, Session, SessionConfig, TraceRecord};
use crate::data::{make_toy, standardize, Dataset, StandardizationStats};
use crate::error::Result;
use crate::explain::{member_regions, MemberRegions, RelevanceAssignment, TreeConfig};
use crate::grid::{bounding_box, Grid, DEFAULT_RESOLUTION};
use crate::loda::LodaEnsemble;
use crate::objective::LossConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyDemoConfig {
    pub seed: u64,
    pub n_nominal: usize,
    pub n_anomaly: usize,
    pub members: usize,
    pub budget: usize,
    pub loss: LossConfig,
    pub resolution: usize,
    pub tree: TreeConfig,
}

impl Default for ToyDemoConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_nominal: 500,
            n_anomaly: 15,
            members: 4,
            budget: 30,
            loss: LossConfig::default(),
            resolution: DEFAULT_RESOLUTION,
            tree: TreeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToyDemo {
    pub dataset: Dataset,
    pub stats: StandardizationStats,
    pub session: Session,
    pub initial: Grid,
    pub primed: Grid,
    pub feedback: Grid,
    /// Rules in raw units, from the post-feedback network.
    pub regions: Vec<MemberRegions>,
}

impl ToyDemo {
    pub fn trace(&self) -> &[TraceRecord] {
        self.session.trace()
    }
}

/// Build the toy data, run the session with an oracle and record the grids.
pub fn run_toy_demo(cfg: &ToyDemoConfig) -> Result<ToyDemo> {
    let dataset = make_toy(cfg.seed, cfg.n_nominal, cfg.n_anomaly)?;
    let (model_data, stats) = standardize(&dataset);
    let bounds = bounding_box(&dataset.features)?;
    let session_cfg = SessionConfig {
        ensemble_size: cfg.members,
        budget: cfg.budget,
        loss: cfg.loss.clone(),
        seed: cfg.seed,
        ..SessionConfig::default()
    };
    let ensemble = LodaEnsemble::build(&model_data.features, cfg.members, cfg.seed)?;
    let unprimed = initial_params(model_data.d(), ensemble.len(), &session_cfg)?;
    let initial = Grid::compute(&ensemble, &unprimed, Some(&stats), bounds, cfg.resolution)?;

    let mut session = Session::with_ensemble(model_data.features.clone(), ensemble, session_cfg)?;
    let primed = Grid::compute(session.ensemble(), session.params(), Some(&stats), bounds, cfg.resolution)?;
    run_session(&mut session, &mut OracleAnalyst::new(&dataset.labels))?;
    let feedback = Grid::compute(session.ensemble(), session.params(), Some(&stats), bounds, cfg.resolution)?;

    let assignment = RelevanceAssignment::compute(session.params(), &model_data.features)?;
    let regions = member_regions(&assignment, &model_data.features, &cfg.tree)?
        .into_iter()
        .map(|mut r| {
            r.rules = r.rules.iter().map(|rule| rule.destandardize(&stats)).collect();
            r
        })
        .collect();
    Ok(ToyDemo {
        dataset,
        stats,
        session,
        initial,
        primed,
        feedback,
        regions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_budget_leaves_primed_grid() {
        let cfg = ToyDemoConfig {
            budget: 0,
            resolution: 10,
            ..ToyDemoConfig::default()
        };
        let demo = run_toy_demo(&cfg).unwrap();
        assert_eq!(demo.primed, demo.feedback);
        assert!(demo.trace().is_empty());
        assert_eq!(demo.regions.len(), 4);
    }

    #[test]
    fn primed_grid_is_near_bias() {
        let cfg = ToyDemoConfig {
            budget: 0,
            ..ToyDemoConfig::default()
        };
        let demo = run_toy_demo(&cfg).unwrap();
        let (lo, hi) = demo.primed.relevance_range();
        assert!(lo >= 0.45 && hi <= 0.55, "{lo} {hi}");
    }
}
