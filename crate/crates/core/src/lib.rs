//! Glocalized anomaly detection.
//!
//! A LODA ensemble of global detectors is combined with a small neural
//! network that learns where in feature space each detector is relevant.
//! The network starts out primed to a uniform relevance and is tuned from
//! analyst labels gathered in a budgeted active-learning loop.
//!
//! Module map:
//! - [`data`]: CSV ingestion, standardization and the 2-D toy generator.
//! - [`loda`]: sparse random projections with histogram densities.
//! - [`fssn`]: the relevance network, its backpropagation and optimizer.
//! - [`objective`]: combined scores, the quantile anchor and the training loss.
//! - [`active`]: the query loop, analysts and session traces.
//! - [`baselines`]: unweighted LODA, globally weighted LODA-AAD and random querying.
//! - [`explain`]: relevance regions via decision trees and local surrogates.
//! - [`snapshot`]: versioned JSON persistence of sessions.
//! - [`bench`]: seeded discovery-curve benchmarks.
//! - [`grid`] and [`demo`]: contour grids and the toy walkthrough.

pub mod active;
pub mod baselines;
pub mod bench;
pub mod data;
pub mod demo;
pub mod error;
pub mod explain;
pub mod fssn;
pub mod grid;
pub mod loda;
pub mod objective;
pub mod rng;
pub mod snapshot;

pub use active::{
    Analyst, AnalystError, OracleAnalyst, Session, SessionConfig, StepOutcome, TraceRecord,
};
pub use data::{Dataset, Label, StandardizationStats};
pub use error::{GladError, Result};
pub use fssn::{FssnGrad, FssnParams, TrainConfig};
pub use loda::{Histogram, LodaEnsemble, Projection};
pub use objective::{LabeledSet, LossConfig, TauAnchor};
