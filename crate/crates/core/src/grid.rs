//! Score and relevance surfaces over a regular 2-D grid.

use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::StandardizationStats;
use crate::error::{GladError, Result};
use crate::fssn::FssnParams;
use crate::loda::LodaEnsemble;
use crate::objective::glad_score;

pub const DEFAULT_RESOLUTION: usize = 50;

/// Values at `resolution x resolution` points, row-major with `x` varying
/// fastest. Coordinates are in raw feature units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub resolution: usize,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub scores: Vec<f64>,
    /// `relevance[m][k]` for member `m` at point `k`.
    pub relevance: Vec<Vec<f64>>,
}

/// Per-column `(min, max)` of the first two features.
pub fn bounding_box(features: &Array2<f64>) -> Result<[(f64, f64); 2]> {
    if features.ncols() != 2 {
        return Err(GladError::DimensionMismatch {
            expected: 2,
            got: features.ncols(),
        });
    }
    if features.nrows() == 0 {
        return Err(GladError::EmptyDataset);
    }
    let range = |j: usize| {
        features
            .column(j)
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    };
    Ok([range(0), range(1)])
}

fn linspace((lo, hi): (f64, f64), n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

impl Grid {
    /// Evaluate over `bounds` (raw units). `stats` maps raw points into the
    /// model's feature space when the model was fit on standardized data.
    pub fn compute(
        ensemble: &LodaEnsemble,
        params: &FssnParams,
        stats: Option<&StandardizationStats>,
        bounds: [(f64, f64); 2],
        resolution: usize,
    ) -> Result<Self> {
        if resolution == 0 {
            return Err(GladError::InvalidConfig("grid resolution must be positive".into()));
        }
        let xs = linspace(bounds[0], resolution);
        let ys = linspace(bounds[1], resolution);
        let m = ensemble.len();
        let mut scores = Vec::with_capacity(resolution * resolution);
        let mut relevance = vec![Vec::with_capacity(resolution * resolution); m];
        for &y in &ys {
            for &x in &xs {
                let raw = [x, y];
                let z = stats.map_or_else(|| raw.to_vec(), |s| s.apply_row(&raw));
                let s = ensemble.member_scores(&z)?;
                let p = params.forward(&z)?;
                scores.push(glad_score(&s, &p));
                for (col, v) in relevance.iter_mut().zip(p) {
                    col.push(v);
                }
            }
        }
        Ok(Self {
            resolution,
            xs,
            ys,
            scores,
            relevance,
        })
    }

    pub fn n_members(&self) -> usize {
        self.relevance.len()
    }

    /// `max - min` of member `m`'s relevance over the grid.
    pub fn relevance_spread(&self, m: usize) -> f64 {
        let (lo, hi) = self.relevance[m]
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        hi - lo
    }

    /// Largest spread over members, with the member attaining it.
    pub fn max_relevance_spread(&self) -> (usize, f64) {
        (0..self.n_members())
            .map(|m| (m, self.relevance_spread(m)))
            .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
    }

    /// Smallest and largest relevance value over all members and points.
    pub fn relevance_range(&self) -> (f64, f64) {
        self.relevance
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Columns `x,y,score,p0..p{M-1}`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["x".to_string(), "y".to_string(), "score".to_string()];
        header.extend((0..self.n_members()).map(|m| format!("p{m}")));
        w.write_record(&header)?;
        for (k, score) in self.scores.iter().enumerate() {
            let (ix, iy) = (k % self.resolution, k / self.resolution);
            let mut rec = vec![self.xs[ix].to_string(), self.ys[iy].to_string(), score.to_string()];
            rec.extend(self.relevance.iter().map(|col| col[k].to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| GladError::io("grid csv", e))?;
        Ok(())
    }
}
