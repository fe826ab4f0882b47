//! Seeded discovery-curve benchmarks.
//!
//! Every (method, seed) run owns its state; seeds run in parallel. Within a
//! seed all methods share one ensemble so they differ only in how they use it.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::active::{run_session, validate_trace, write_trace_csv, OracleAnalyst, Session, SessionConfig, Trace};
use crate::baselines::{run_loda_aad_session, run_random_session, run_unweighted_session, LodaAadConfig};
use crate::data::{standardize, Dataset};
use crate::error::{GladError, Result};
use crate::fssn::TrainConfig;
use crate::loda::LodaEnsemble;
use crate::objective::LossConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Glad,
    Loda,
    LodaAad,
    Random,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Glad, Method::Loda, Method::LodaAad, Method::Random];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Glad => "glad",
            Method::Loda => "loda",
            Method::LodaAad => "loda-aad",
            Method::Random => "random",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = GladError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| GladError::InvalidConfig(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub methods: Vec<Method>,
    pub members: usize,
    pub budget: usize,
    pub loss: LossConfig,
    pub train: TrainConfig,
    pub loda_aad: LodaAadConfig,
    pub seeds: Vec<u64>,
    pub standardize: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            members: 15,
            budget: 60,
            loss: LossConfig::default(),
            train: TrainConfig::default(),
            loda_aad: LodaAadConfig::default(),
            seeds: (0..10).collect(),
            standardize: true,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(GladError::InvalidConfig("no methods selected".into()));
        }
        if self.seeds.is_empty() {
            return Err(GladError::InvalidConfig("no seeds selected".into()));
        }
        self.session_config(0).validate()
    }

    fn session_config(&self, seed: u64) -> SessionConfig {
        SessionConfig {
            ensemble_size: self.members,
            budget: self.budget,
            loss: self.loss.clone(),
            train: self.train.clone(),
            seed,
            normalize_scores: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub method: Method,
    pub seed: u64,
    /// The trace, or why the run failed.
    pub outcome: std::result::Result<Trace, String>,
}

impl RunResult {
    pub fn anomalies_found(&self) -> Option<usize> {
        self.outcome
            .as_ref()
            .ok()
            .map(|t| t.last().map_or(0, |r| r.cumulative_anomalies))
    }
}

/// Mean and standard deviation of cumulative discoveries per iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub method: Method,
    pub mean: Vec<f64>,
    /// Sample standard deviation; zero with a single run.
    pub std: Vec<f64>,
    pub runs: usize,
}

impl Curve {
    /// Traces shorter than `budget` (dataset exhausted) hold their last value.
    pub fn from_traces(method: Method, traces: &[&Trace], budget: usize) -> Self {
        let k = traces.len();
        let mut mean = vec![0.0; budget];
        let mut std = vec![0.0; budget];
        for t in 0..budget {
            let vals: Vec<f64> = traces
                .iter()
                .map(|tr| {
                    tr.get(t)
                        .or(tr.last())
                        .map_or(0.0, |r| r.cumulative_anomalies as f64)
                })
                .collect();
            if k == 0 {
                continue;
            }
            let m = vals.iter().sum::<f64>() / k as f64;
            mean[t] = m;
            if k > 1 {
                std[t] = (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (k - 1) as f64).sqrt();
            }
        }
        Self {
            method,
            mean,
            std,
            runs: k,
        }
    }

    pub fn final_mean(&self) -> f64 {
        self.mean.last().copied().unwrap_or(0.0)
    }

    pub fn final_std(&self) -> f64 {
        self.std.last().copied().unwrap_or(0.0)
    }

    /// Columns `iteration,mean,std,runs`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["iteration", "mean", "std", "runs"])?;
        for (t, (m, s)) in self.mean.iter().zip(&self.std).enumerate() {
            w.write_record([(t + 1).to_string(), m.to_string(), s.to_string(), self.runs.to_string()])?;
        }
        w.flush().map_err(|e| GladError::io("<curve writer>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub dataset: String,
    pub n: usize,
    pub d: usize,
    pub anomalies: usize,
    pub runs: Vec<RunResult>,
    pub curves: Vec<Curve>,
}

impl DatasetReport {
    pub fn curve(&self, method: Method) -> Option<&Curve> {
        self.curves.iter().find(|c| c.method == method)
    }

    pub fn failures(&self) -> impl Iterator<Item = &RunResult> {
        self.runs.iter().filter(|r| r.outcome.is_err())
    }

    /// Runs whose trace breaks a trace invariant, with the reason.
    pub fn invariant_violations(&self) -> Vec<(Method, u64, String)> {
        self.runs
            .iter()
            .filter_map(|r| match &r.outcome {
                Ok(t) => validate_trace(t).err().map(|e| (r.method, r.seed, e)),
                Err(_) => None,
            })
            .collect()
    }

    /// Write `curves_{method}.csv` and `trace_{method}_{seed}.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| GladError::io(dir, e))?;
        for c in &self.curves {
            let path = dir.join(format!("curves_{}.csv", c.method));
            let f = fs::File::create(&path).map_err(|e| GladError::io(&path, e))?;
            c.write_csv(f)?;
        }
        for r in &self.runs {
            if let Ok(trace) = &r.outcome {
                let path = dir.join(format!("trace_{}_{}.csv", r.method, r.seed));
                let f = fs::File::create(&path).map_err(|e| GladError::io(&path, e))?;
                write_trace_csv(trace, f)?;
            }
        }
        Ok(())
    }

    pub fn summary(&self) -> String {
        let mut out = format!(
            "{} (n={}, d={}, anomalies={})\n",
            self.dataset, self.n, self.d, self.anomalies
        );
        for c in &self.curves {
            let failed = self.failures().filter(|r| r.method == c.method).count();
            out.push_str(&format!(
                "  {:<9} {:>7.2} +/- {:<6.2} over {} runs",
                c.method.as_str(),
                c.final_mean(),
                c.final_std(),
                c.runs
            ));
            if failed > 0 {
                out.push_str(&format!(" ({failed} failed)"));
            }
            out.push('\n');
        }
        out
    }
}

fn run_one(
    method: Method,
    seed: u64,
    ds: &Dataset,
    ensemble: &LodaEnsemble,
    member_scores: &ndarray::Array2<f64>,
    cfg: &BenchConfig,
) -> Result<Trace> {
    let mut oracle = OracleAnalyst::new(&ds.labels);
    match method {
        Method::Glad => {
            let mut s = Session::with_ensemble(ds.features.clone(), ensemble.clone(), cfg.session_config(seed))?;
            run_session(&mut s, &mut oracle)?;
            Ok(s.trace().to_vec())
        }
        Method::Loda => run_unweighted_session(member_scores, cfg.budget, &mut oracle),
        Method::LodaAad => {
            let aad = LodaAadConfig {
                tau: cfg.loss.tau,
                ..cfg.loda_aad.clone()
            };
            Ok(run_loda_aad_session(member_scores, cfg.budget, &mut oracle, &aad)?.0)
        }
        Method::Random => run_random_session(ds.n(), cfg.budget, seed, &mut oracle),
    }
}

/// Run every method for every seed on one dataset. Failing runs are
/// recorded and do not stop the others.
pub fn run_benchmark(dataset: &Dataset, cfg: &BenchConfig) -> Result<DatasetReport> {
    cfg.validate()?;
    let ds = if cfg.standardize {
        standardize(dataset).0
    } else {
        dataset.clone()
    };
    let per_seed: Vec<Vec<RunResult>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let shared = LodaEnsemble::build(&ds.features, cfg.members, seed)
                .and_then(|e| e.score_matrix(&ds.features).map(|s| (e, s)));
            cfg.methods
                .iter()
                .map(|&method| {
                    let outcome = match &shared {
                        Ok((e, s)) => run_one(method, seed, &ds, e, s, cfg).map_err(|err| err.to_string()),
                        Err(err) => Err(err.to_string()),
                    };
                    if let Err(msg) = &outcome {
                        tracing::warn!(dataset = %ds.name, %method, seed, "run failed: {msg}");
                    }
                    RunResult { method, seed, outcome }
                })
                .collect()
        })
        .collect();
    let runs: Vec<RunResult> = per_seed.into_iter().flatten().collect();
    let curves = cfg
        .methods
        .iter()
        .map(|&m| {
            let traces: Vec<&Trace> = runs
                .iter()
                .filter(|r| r.method == m)
                .filter_map(|r| r.outcome.as_ref().ok())
                .collect();
            Curve::from_traces(m, &traces, cfg.budget)
        })
        .collect();
    Ok(DatasetReport {
        dataset: dataset.name.clone(),
        n: dataset.n(),
        d: dataset.d(),
        anomalies: dataset.n_anomalies(),
        runs,
        curves,
    })
}
