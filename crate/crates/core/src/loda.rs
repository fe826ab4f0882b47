//! LODA: an ensemble of one-dimensional histogram density estimators over
//! sparse random projections. Member `m` scores an instance by the negative
//! log density of its projection, `s_m(x) = -ln f_m(beta_m . x)`.

use ndarray::{Array2, ArrayView1};
use rand::seq::index;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{GladError, Result};
use crate::rng;

/// Largest ensemble `build` accepts.
pub const MAX_MEMBERS: usize = 1000;
/// Laplace pseudo-count added to every bin.
pub const DEFAULT_SMOOTHING: f64 = 1.0;

/// Rice rule, clamped to `[10, 200]`.
pub fn rice_bins(n: usize) -> usize {
    let bins = (2.0 * (n as f64).cbrt()).ceil() as usize;
    bins.clamp(10, 200)
}

/// Number of non-zero projection coordinates for dimension `d`.
pub fn sparsity(d: usize) -> usize {
    ((d as f64).sqrt().ceil() as usize).clamp(1, d.max(1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    /// Dense storage of the sparse direction.
    pub beta: Vec<f64>,
}

impl Projection {
    pub fn new(beta: Vec<f64>) -> Self {
        Self { beta }
    }

    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    pub fn nonzeros(&self) -> usize {
        self.beta.iter().filter(|v| **v != 0.0).count()
    }

    pub fn project(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.beta.len() {
            return Err(GladError::DimensionMismatch {
                expected: self.beta.len(),
                got: x.len(),
            });
        }
        Ok(self.project_unchecked(x))
    }

    #[inline]
    pub(crate) fn project_unchecked(&self, x: &[f64]) -> f64 {
        self.beta.iter().zip(x).map(|(b, v)| b * v).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `B + 1` strictly increasing bin edges.
    pub edges: Vec<f64>,
    /// `B` densities; each is at least `pseudo_density`.
    pub densities: Vec<f64>,
    /// Density assigned outside `[edges[0], edges[B]]`.
    pub pseudo_density: f64,
}

impl Histogram {
    /// Equal-width bins over `[min, max]` with `smoothing` pseudo-counts per
    /// bin. If every value is identical the histogram collapses to a single
    /// bin of width 1 centred on that value.
    pub fn fit(values: &[f64], n_bins: usize, smoothing: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(GladError::InvalidConfig("histogram needs at least one value".into()));
        }
        if n_bins == 0 {
            return Err(GladError::InvalidConfig("histogram needs at least one bin".into()));
        }
        if !(smoothing > 0.0 && smoothing.is_finite()) {
            return Err(GladError::InvalidConfig("smoothing must be positive".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GladError::InvalidConfig("histogram values must be finite".into()));
        }
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let n = values.len() as f64;

        let (edges, n_bins) = if hi > lo {
            let width = (hi - lo) / n_bins as f64;
            let mut edges: Vec<f64> = (0..=n_bins).map(|b| lo + width * b as f64).collect();
            edges[n_bins] = hi;
            (edges, n_bins)
        } else {
            (vec![lo - 0.5, lo + 0.5], 1)
        };

        let mut counts = vec![0usize; n_bins];
        for &v in values {
            counts[bin_of(&edges, v)] += 1;
        }
        let total = n + n_bins as f64 * smoothing;
        let densities: Vec<f64> = counts
            .iter()
            .enumerate()
            .map(|(b, &c)| (c as f64 + smoothing) / total / (edges[b + 1] - edges[b]))
            .collect();
        let width = (edges[n_bins] - edges[0]) / n_bins as f64;
        let pseudo_density = smoothing / (total * width);
        Ok(Self {
            edges,
            densities,
            pseudo_density,
        })
    }

    pub fn n_bins(&self) -> usize {
        self.densities.len()
    }

    /// Index of the bin containing `v`, or `None` outside the fitted range.
    pub fn bin(&self, v: f64) -> Option<usize> {
        let lo = self.edges[0];
        let hi = *self.edges.last().expect("edges non-empty");
        if v.is_nan() || v < lo || v > hi {
            None
        } else {
            Some(bin_of(&self.edges, v))
        }
    }

    pub fn density(&self, v: f64) -> f64 {
        self.bin(v)
            .map(|b| self.densities[b])
            .unwrap_or(self.pseudo_density)
    }

    /// Total probability mass, `sum density * width`.
    pub fn mass(&self) -> f64 {
        self.densities
            .iter()
            .zip(self.edges.windows(2))
            .map(|(d, w)| d * (w[1] - w[0]))
            .sum()
    }
}

/// Equal-width bin lookup; the top edge belongs to the last bin.
fn bin_of(edges: &[f64], v: f64) -> usize {
    let n_bins = edges.len() - 1;
    let lo = edges[0];
    let width = (edges[n_bins] - lo) / n_bins as f64;
    let b = ((v - lo) / width).floor();
    if b <= 0.0 {
        0
    } else {
        (b as usize).min(n_bins - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LodaMember {
    pub projection: Projection,
    pub histogram: Histogram,
}

impl LodaMember {
    #[inline]
    pub fn score(&self, x: &[f64]) -> f64 {
        -self.histogram.density(self.projection.project_unchecked(x)).ln()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LodaEnsemble {
    pub dim: usize,
    pub members: Vec<LodaMember>,
}

impl LodaEnsemble {
    /// Draw `n_members` sparse Gaussian projections and fit one Rice-rule
    /// histogram per projection over every instance.
    pub fn build(features: &Array2<f64>, n_members: usize, seed: u64) -> Result<Self> {
        if n_members == 0 || n_members > MAX_MEMBERS {
            return Err(GladError::InvalidConfig(format!(
                "ensemble size must be in 1..={MAX_MEMBERS}, got {n_members}"
            )));
        }
        let (n, d) = features.dim();
        if n == 0 || d == 0 {
            return Err(GladError::EmptyDataset);
        }
        let mut rng = rng::rng_for(seed, rng::stream::ENSEMBLE, 0);
        let k = sparsity(d);
        let n_bins = rice_bins(n);
        let mut members = Vec::with_capacity(n_members);
        for _ in 0..n_members {
            let mut beta = vec![0.0; d];
            for j in index::sample(&mut rng, d, k) {
                // Resample exact zeros so the projection keeps k non-zeros.
                let mut w: f64 = StandardNormal.sample(&mut rng);
                while w == 0.0 {
                    w = StandardNormal.sample(&mut rng);
                }
                beta[j] = w;
            }
            let projection = Projection::new(beta);
            let values: Vec<f64> = features
                .rows()
                .into_iter()
                .map(|row| projection.project_unchecked(row_slice(&row).as_ref()))
                .collect();
            let histogram = Histogram::fit(&values, n_bins, DEFAULT_SMOOTHING)?;
            members.push(LodaMember {
                projection,
                histogram,
            });
        }
        Ok(Self { dim: d, members })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn member_score(&self, m: usize, x: &[f64]) -> Result<f64> {
        let member = self.members.get(m).ok_or(GladError::IndexOutOfRange {
            index: m,
            n: self.members.len(),
        })?;
        self.check_dim(x)?;
        Ok(member.score(x))
    }

    pub fn member_scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(self.members.iter().map(|m| m.score(x)).collect())
    }

    /// Mean negative log density over members.
    pub fn baseline_score(&self, x: &[f64]) -> Result<f64> {
        let s = self.member_scores(x)?;
        Ok(s.iter().sum::<f64>() / s.len() as f64)
    }

    /// n × M matrix of member scores.
    pub fn score_matrix(&self, features: &Array2<f64>) -> Result<Array2<f64>> {
        if features.ncols() != self.dim {
            return Err(GladError::DimensionMismatch {
                expected: self.dim,
                got: features.ncols(),
            });
        }
        let n = features.nrows();
        let mut out = Array2::zeros((n, self.members.len()));
        for (i, row) in features.rows().into_iter().enumerate() {
            let x = row_slice(&row);
            for (m, member) in self.members.iter().enumerate() {
                out[[i, m]] = member.score(x.as_ref());
            }
        }
        Ok(out)
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            Err(GladError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            })
        } else {
            Ok(())
        }
    }
}

/// Baseline LODA scores from a precomputed member-score matrix.
pub fn baseline_scores(member_scores: &Array2<f64>) -> Vec<f64> {
    let m = member_scores.ncols() as f64;
    member_scores
        .rows()
        .into_iter()
        .map(|r| r.iter().sum::<f64>() / m)
        .collect()
}

/// Z-normalize each member's scores over the dataset (ablation option).
pub fn zscore_columns(member_scores: &mut Array2<f64>) {
    let n = member_scores.nrows() as f64;
    for mut col in member_scores.columns_mut() {
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        col.mapv_inplace(|v| (v - mean) / std);
    }
}

/// Borrow a row as a contiguous slice, copying only for non-standard layouts.
pub(crate) fn row_slice<'a>(row: &'a ArrayView1<'a, f64>) -> std::borrow::Cow<'a, [f64]> {
    match row.as_slice() {
        Some(s) => std::borrow::Cow::Borrowed(s),
        None => std::borrow::Cow::Owned(row.to_vec()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_toy;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn project_examples() {
        let p = Projection::new(vec![1.0, 0.0, 2.0]);
        assert_eq!(p.project(&[3.0, 5.0, 1.0]).unwrap(), 5.0);
        assert_eq!(Projection::new(vec![0.0; 3]).project(&[3.0, 5.0, 1.0]).unwrap(), 0.0);
        assert_eq!(
            Projection::new(vec![1.0, 0.0, 0.0]).project(&[3.0, 5.0, 1.0]).unwrap(),
            3.0
        );
        assert!(matches!(
            p.project(&[1.0]),
            Err(GladError::DimensionMismatch { expected: 3, got: 1 })
        ));
    }

    #[test]
    fn rice_rule_bounds() {
        assert_eq!(rice_bins(4), 10);
        assert_eq!(rice_bins(515), 17);
        assert_eq!(rice_bins(1920), 25);
        assert_eq!(rice_bins(10_000_000), 200);
    }

    #[test]
    fn uniform_split_in_smoothing_limit() {
        let h = Histogram::fit(&[0.0, 1.0, 2.0, 3.0], 2, 1e-12).unwrap();
        assert_eq!(h.edges, vec![0.0, 1.5, 3.0]);
        for d in &h.densities {
            assert!((d - 1.0 / 3.0).abs() < 1e-9);
        }
        assert!((h.mass() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_values_give_unit_bin() {
        let h = Histogram::fit(&[4.0, 4.0, 4.0], 10, 1.0).unwrap();
        assert_eq!(h.edges, vec![3.5, 4.5]);
        assert_eq!(h.n_bins(), 1);
        assert!((h.densities[0] - 1.0).abs() < 1e-12);
        assert!((h.mass() - 1.0).abs() < 1e-12);
        assert!(h.pseudo_density > 0.0);
    }

    #[test]
    fn histogram_rejects_bad_input() {
        assert!(Histogram::fit(&[], 3, 1.0).is_err());
        assert!(Histogram::fit(&[1.0], 0, 1.0).is_err());
        assert!(Histogram::fit(&[1.0], 3, 0.0).is_err());
        assert!(Histogram::fit(&[f64::NAN], 3, 1.0).is_err());
    }

    #[test]
    fn standard_normal_density_at_zero() {
        // Compare against the analytic N(0,1) density 1/sqrt(2 pi) = 0.3989.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let values: Vec<f64> = (0..1000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let h = Histogram::fit(&values, rice_bins(values.len()), DEFAULT_SMOOTHING).unwrap();
        let d0 = h.density(0.0);
        assert!((0.3..=0.5).contains(&d0), "density at 0 was {d0}");
    }

    #[test]
    fn member_score_identities() {
        let h = Histogram::fit(&[0.0, 1.0, 2.0, 3.0], 2, 1e-12).unwrap();
        let member = LodaMember {
            projection: Projection::new(vec![1.0]),
            histogram: h.clone(),
        };
        assert!((member.score(&[0.5]) - 3f64.ln()).abs() < 1e-9);
        let far = member.score(&[1e9]);
        assert_eq!(far, -h.pseudo_density.ln());
        assert!(far.is_finite());
        assert!(far >= member.score(&[0.5]));
    }

    #[test]
    fn ensemble_sparsity_and_determinism() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let x = Array2::from_shape_fn((200, 9), |_| rng.random_range(-1.0..1.0));
        let e = LodaEnsemble::build(&x, 15, 7).unwrap();
        assert_eq!(e.len(), 15);
        for m in &e.members {
            assert_eq!(m.projection.nonzeros(), 3);
            assert_eq!(m.projection.dim(), 9);
        }
        let again = LodaEnsemble::build(&x, 15, 7).unwrap();
        assert_eq!(e, again);
        let other = LodaEnsemble::build(&x, 15, 8).unwrap();
        assert_ne!(e, other);
        assert!(LodaEnsemble::build(&x, 0, 7).is_err());
        assert!(LodaEnsemble::build(&x, 1001, 7).is_err());
    }

    #[test]
    fn baseline_is_member_mean() {
        let toy = make_toy(1, 100, 5).unwrap();
        let e = LodaEnsemble::build(&toy.features, 4, 3).unwrap();
        let x = toy.features.row(0).to_vec();
        let s = e.member_scores(&x).unwrap();
        let mean = s.iter().sum::<f64>() / 4.0;
        assert!((e.baseline_score(&x).unwrap() - mean).abs() < 1e-12);

        let single = LodaEnsemble::build(&toy.features, 1, 3).unwrap();
        assert_eq!(
            single.baseline_score(&x).unwrap(),
            single.member_score(0, &x).unwrap()
        );
        assert!(e.member_score(4, &x).is_err());
    }

    #[test]
    fn toy_anomalies_score_higher_for_most_members() {
        let toy = make_toy(42, 500, 15).unwrap();
        let (std_toy, _) = crate::data::standardize(&toy);
        let e = LodaEnsemble::build(&std_toy.features, 4, 42).unwrap();
        let s = e.score_matrix(&std_toy.features).unwrap();
        let mut better = 0;
        for m in 0..4 {
            let (mut a, mut na, mut nn, mut cn) = (0.0, 0usize, 0.0, 0usize);
            for (i, l) in toy.labels.iter().enumerate() {
                if l.is_anomaly() {
                    a += s[[i, m]];
                    na += 1;
                } else {
                    nn += s[[i, m]];
                    cn += 1;
                }
            }
            if a / na as f64 > nn / cn as f64 {
                better += 1;
            }
        }
        assert!(better >= 2, "only {better} members separate anomalies");
    }

    proptest! {
        #[test]
        fn histogram_mass_is_one(values in proptest::collection::vec(-1e3f64..1e3, 1..300),
                                 bins in 1usize..60, smoothing in 0.01f64..5.0) {
            let h = Histogram::fit(&values, bins, smoothing).unwrap();
            prop_assert!((h.mass() - 1.0).abs() <= 1e-9);
            prop_assert!(h.edges.windows(2).all(|w| w[1] > w[0]));
            prop_assert!(h.densities.iter().all(|d| *d >= h.pseudo_density * (1.0 - 1e-12)));
            prop_assert!(h.pseudo_density > 0.0);
        }

        #[test]
        fn member_score_is_finite(v in proptest::num::f64::ANY) {
            let h = Histogram::fit(&[0.0, 1.0, 5.0], 3, 1.0).unwrap();
            let member = LodaMember { projection: Projection::new(vec![1.0]), histogram: h };
            prop_assert!(member.score(&[v]).is_finite());
        }
    }
}
