//! Explanations of relevance and of individual anomaly scores.
//!
//! Regions: every instance is assigned to its most relevant member, and a
//! small CART tree per member separates its instances from the rest. The
//! positive leaves of that tree read as interval rules.
//!
//! Instances: the most relevant member's score is approximated around the
//! instance by a weighted linear model over quartile-bin indicators, so each
//! surviving term reads as "feature in this interval moves the score by w".

use std::fmt;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, ArrayView1};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::StandardizationStats;
use crate::error::{GladError, Result};
use crate::fssn::FssnParams;
use crate::loda::{row_slice, LodaEnsemble};
use crate::rng;

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceAssignment {
    /// `n x M` relevance matrix.
    pub relevance: Array2<f64>,
    /// Most relevant member per instance.
    pub members: Vec<usize>,
}

impl RelevanceAssignment {
    pub fn compute(params: &FssnParams, features: &Array2<f64>) -> Result<Self> {
        let relevance = params.forward_batch(features)?;
        let members = relevance
            .rows()
            .into_iter()
            .map(|r| argmax(&row_slice(&r)))
            .collect();
        Ok(Self { relevance, members })
    }

    pub fn n_members(&self) -> usize {
        self.relevance.ncols()
    }

    /// Instances whose most relevant member is `m`.
    pub fn positives(&self, m: usize) -> Vec<bool> {
        self.members.iter().map(|&a| a == m).collect()
    }

    /// Number of instances assigned to each member.
    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_members()];
        for &m in &self.members {
            c[m] += 1;
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            max_depth: 4,
            min_leaf: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        positive: bool,
        /// Fraction of training instances agreeing with the leaf label.
        purity: f64,
        size: usize,
    },
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Binary classification tree grown greedily on Gini impurity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleTree {
    pub nodes: Vec<Node>,
    pub max_depth: usize,
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

impl RuleTree {
    /// Fit on `features` with boolean targets. Degenerate targets (all or
    /// none positive) give a single leaf.
    pub fn fit(features: &Array2<f64>, positives: &[bool], cfg: &TreeConfig) -> Result<Self> {
        if positives.len() != features.nrows() {
            return Err(GladError::DimensionMismatch {
                expected: features.nrows(),
                got: positives.len(),
            });
        }
        if features.nrows() == 0 {
            return Err(GladError::EmptyDataset);
        }
        let mut tree = Self {
            nodes: Vec::new(),
            max_depth: cfg.max_depth,
        };
        let idx: Vec<usize> = (0..features.nrows()).collect();
        tree.grow(features, positives, idx, 0, cfg);
        Ok(tree)
    }

    fn grow(
        &mut self,
        features: &Array2<f64>,
        positives: &[bool],
        idx: Vec<usize>,
        depth: usize,
        cfg: &TreeConfig,
    ) -> usize {
        let id = self.nodes.len();
        let n = idx.len();
        let pos = idx.iter().filter(|&&i| positives[i]).count();
        let positive = 2 * pos > n;
        let agree = if positive { pos } else { n - pos };
        self.nodes.push(Node::Leaf {
            positive,
            purity: agree as f64 / n as f64,
            size: n,
        });
        if depth >= cfg.max_depth || pos == 0 || pos == n {
            return id;
        }
        let Some(best) = Self::best_split(features, positives, &idx, cfg.min_leaf.max(1)) else {
            return id;
        };
        if best.impurity >= gini(pos, n) - 1e-12 {
            return id;
        }
        let (l, r): (Vec<usize>, Vec<usize>) = idx
            .into_iter()
            .partition(|&i| features[[i, best.feature]] <= best.threshold);
        let left = self.grow(features, positives, l, depth + 1, cfg);
        let right = self.grow(features, positives, r, depth + 1, cfg);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    fn best_split(
        features: &Array2<f64>,
        positives: &[bool],
        idx: &[usize],
        min_leaf: usize,
    ) -> Option<BestSplit> {
        let n = idx.len();
        if n < 2 * min_leaf {
            return None;
        }
        let total_pos = idx.iter().filter(|&&i| positives[i]).count();
        let mut best: Option<BestSplit> = None;
        let mut order = idx.to_vec();
        for j in 0..features.ncols() {
            order.sort_by(|&a, &b| features[[a, j]].total_cmp(&features[[b, j]]));
            let mut left_pos = 0;
            for k in 1..n {
                left_pos += usize::from(positives[order[k - 1]]);
                let lo = features[[order[k - 1], j]];
                let hi = features[[order[k], j]];
                if k < min_leaf || n - k < min_leaf || lo == hi {
                    continue;
                }
                let impurity = (k as f64 * gini(left_pos, k)
                    + (n - k) as f64 * gini(total_pos - left_pos, n - k))
                    / n as f64;
                if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                    let mut threshold = 0.5 * (lo + hi);
                    // Midpoints of adjacent floats can round up to `hi`.
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some(BestSplit {
                        feature: j,
                        threshold,
                        impurity,
                    });
                }
            }
        }
        best
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], id: usize) -> usize {
            match nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }

    pub fn predict(&self, x: &[f64]) -> bool {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                Node::Leaf { positive, .. } => return positive,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn accuracy(&self, features: &Array2<f64>, positives: &[bool]) -> f64 {
        let hits = features
            .rows()
            .into_iter()
            .zip(positives)
            .filter(|(r, &p)| self.predict(&row_slice(r)) == p)
            .count();
        hits as f64 / positives.len() as f64
    }
}

/// `lower < x[feature] <= upper`, either side optional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub feature: usize,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl Interval {
    pub fn unbounded(feature: usize) -> Self {
        Self {
            feature,
            lower: None,
            upper: None,
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower.is_none_or(|l| v > l) && self.upper.is_none_or(|u| v <= u)
    }

    /// Map the bounds back to raw feature units.
    pub fn destandardize(&self, stats: &StandardizationStats) -> Self {
        Self {
            feature: self.feature,
            lower: self.lower.map(|l| stats.invert_value(self.feature, l)),
            upper: self.upper.map(|u| stats.invert_value(self.feature, u)),
        }
    }

    pub fn render(&self, names: &[String]) -> String {
        let name = names
            .get(self.feature)
            .cloned()
            .unwrap_or_else(|| format!("x{}", self.feature));
        match (self.lower, self.upper) {
            (Some(l), Some(u)) => format!("{l:.2} < {name} <= {u:.2}"),
            (Some(l), None) => format!("{name} > {l:.2}"),
            (None, Some(u)) => format!("{name} <= {u:.2}"),
            (None, None) => name,
        }
    }
}

/// Conjunction of per-feature intervals, one per constrained feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub intervals: Vec<Interval>,
    /// Training instances reaching the leaf.
    pub support: usize,
    pub purity: f64,
}

impl Rule {
    pub fn matches(&self, x: &[f64]) -> bool {
        self.intervals.iter().all(|iv| iv.contains(x[iv.feature]))
    }

    pub fn destandardize(&self, stats: &StandardizationStats) -> Self {
        Self {
            intervals: self.intervals.iter().map(|iv| iv.destandardize(stats)).collect(),
            ..self.clone()
        }
    }

    pub fn render(&self, names: &[String]) -> String {
        if self.intervals.is_empty() {
            return "everywhere".to_string();
        }
        self.intervals
            .iter()
            .map(|iv| iv.render(names))
            .collect::<Vec<_>>()
            .join(" and ")
    }
}

/// One rule per positive leaf, with path constraints merged per feature.
pub fn describe_regions(tree: &RuleTree) -> Vec<Rule> {
    let mut rules = Vec::new();
    let mut stack = vec![(0usize, Vec::<Interval>::new())];
    while let Some((id, path)) = stack.pop() {
        match tree.nodes[id] {
            Node::Leaf {
                positive,
                purity,
                size,
            } => {
                if positive {
                    rules.push((id, Rule {
                        intervals: path,
                        support: size,
                        purity,
                    }));
                }
            }
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                let narrowed = |go_left: bool| {
                    let mut p = path.clone();
                    let pos = match p.iter().position(|iv| iv.feature == feature) {
                        Some(k) => k,
                        None => {
                            p.push(Interval::unbounded(feature));
                            p.sort_by_key(|iv| iv.feature);
                            p.iter().position(|iv| iv.feature == feature).unwrap()
                        }
                    };
                    let iv = &mut p[pos];
                    if go_left {
                        iv.upper = Some(iv.upper.map_or(threshold, |u| u.min(threshold)));
                    } else {
                        iv.lower = Some(iv.lower.map_or(threshold, |l| l.max(threshold)));
                    }
                    p
                };
                stack.push((right, narrowed(false)));
                stack.push((left, narrowed(true)));
            }
        }
    }
    rules.sort_by_key(|(id, _)| *id);
    rules.into_iter().map(|(_, r)| r).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberRegions {
    pub member: usize,
    /// Instances for which this member is the most relevant.
    pub n_assigned: usize,
    pub accuracy: f64,
    pub rules: Vec<Rule>,
}

/// Fit one rule tree per member on the relevance assignment.
pub fn member_regions(
    assignment: &RelevanceAssignment,
    features: &Array2<f64>,
    cfg: &TreeConfig,
) -> Result<Vec<MemberRegions>> {
    (0..assignment.n_members())
        .map(|m| {
            let pos = assignment.positives(m);
            let tree = RuleTree::fit(features, &pos, cfg)?;
            Ok(MemberRegions {
                member: m,
                n_assigned: pos.iter().filter(|&&p| p).count(),
                accuracy: tree.accuracy(features, &pos),
                rules: describe_regions(&tree),
            })
        })
        .collect()
}

/// What the local surrogate needs from a detector.
pub trait MemberModel {
    fn n_members(&self) -> usize;
    fn relevance(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn member_score(&self, m: usize, x: &[f64]) -> Result<f64>;
}

pub struct GladModel<'a> {
    pub ensemble: &'a LodaEnsemble,
    pub params: &'a FssnParams,
}

impl MemberModel for GladModel<'_> {
    fn n_members(&self) -> usize {
        self.ensemble.len()
    }

    fn relevance(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.params.forward(x)
    }

    fn member_score(&self, m: usize, x: &[f64]) -> Result<f64> {
        self.ensemble.member_score(m, x)
    }
}

/// Per-feature quartile cut points of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuartileBins {
    pub cuts: Vec<[f64; 3]>,
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl QuartileBins {
    pub fn fit(features: &Array2<f64>) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(GladError::EmptyDataset);
        }
        let cuts = features
            .columns()
            .into_iter()
            .map(|c| {
                let mut v = c.to_vec();
                v.sort_by(f64::total_cmp);
                [0.25, 0.5, 0.75].map(|q| quantile_sorted(&v, q))
            })
            .collect();
        Ok(Self { cuts })
    }

    /// Bin `k` covers `(cuts[k-1], cuts[k]]`.
    pub fn bin(&self, j: usize, v: f64) -> usize {
        self.cuts[j].iter().filter(|&&c| v > c).count()
    }

    pub fn interval(&self, j: usize, bin: usize) -> Interval {
        let c = &self.cuts[j];
        Interval {
            feature: j,
            lower: (bin > 0).then(|| c[bin - 1]),
            upper: (bin < 3).then(|| c[bin]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateConfig {
    pub n_samples: usize,
    /// Defaults to `0.75 * sqrt(d)`.
    pub kernel_width: Option<f64>,
    pub top_k: usize,
    pub ridge: f64,
    pub seed: u64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            kernel_width: None,
            top_k: 2,
            ridge: 1.0,
            seed: 0,
        }
    }
}

impl SurrogateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 100 {
            return Err(GladError::InvalidConfig("surrogate needs at least 100 samples".into()));
        }
        if self.top_k == 0 {
            return Err(GladError::InvalidConfig("top_k must be positive".into()));
        }
        if self.kernel_width.is_some_and(|w| !(w.is_finite() && w > 0.0)) {
            return Err(GladError::InvalidConfig("kernel width must be positive".into()));
        }
        if !(self.ridge.is_finite() && self.ridge >= 0.0) {
            return Err(GladError::InvalidConfig("ridge must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateTerm {
    /// Quartile bin of the explained instance for this feature.
    pub interval: Interval,
    pub weight: f64,
}

impl SurrogateTerm {
    pub fn render(&self, names: &[String]) -> String {
        format!("('{}', {:.4})", self.interval.render(names), self.weight)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateExplanation {
    pub member: usize,
    pub relevance: Vec<f64>,
    /// Sorted by `|weight|` descending, at most `top_k`.
    pub terms: Vec<SurrogateTerm>,
    pub intercept: f64,
    /// Weighted R^2 of the full linear fit.
    pub fit_r2: f64,
    /// Perturbation scale multiplier actually used (1 or 2).
    pub sigma_scale: f64,
}

impl SurrogateExplanation {
    pub fn destandardize(&self, stats: &StandardizationStats) -> Self {
        let mut out = self.clone();
        for t in &mut out.terms {
            t.interval = t.interval.destandardize(stats);
        }
        out
    }

    pub fn render(&self, names: &[String]) -> String {
        self.terms
            .iter()
            .map(|t| t.render(names))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

fn population_std(features: &Array2<f64>) -> Vec<f64> {
    let n = features.nrows() as f64;
    features
        .columns()
        .into_iter()
        .map(|c| {
            let m = c.sum() / n;
            (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt()
        })
        .collect()
}

struct LinearFit {
    weights: Vec<f64>,
    intercept: f64,
    r2: f64,
}

/// Weighted ridge regression with an unpenalized intercept. `None` when the
/// neighborhood carries no usable signal.
fn weighted_ridge(z: &DMatrix<f64>, y: &[f64], w: &[f64], ridge: f64) -> Option<LinearFit> {
    let (n, d) = z.shape();
    let total: f64 = w.iter().sum();
    if !(total.is_finite() && total > 1e-300) {
        return None;
    }
    let zbar: Vec<f64> = (0..d)
        .map(|j| (0..n).map(|i| w[i] * z[(i, j)]).sum::<f64>() / total)
        .collect();
    let ybar = (0..n).map(|i| w[i] * y[i]).sum::<f64>() / total;
    let spread: f64 = (0..d)
        .map(|j| (0..n).map(|i| w[i] * (z[(i, j)] - zbar[j]).powi(2)).sum::<f64>())
        .sum();
    if spread / total < 1e-12 {
        return None;
    }
    let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let a = DMatrix::from_fn(n, d, |i, j| sw[i] * (z[(i, j)] - zbar[j]));
    let b = DVector::from_fn(n, |i, _| sw[i] * (y[i] - ybar));
    let gram = a.transpose() * &a + DMatrix::identity(d, d) * ridge;
    let beta = gram.cholesky()?.solve(&(a.transpose() * &b));
    if beta.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let resid = &b - &a * &beta;
    let ss_tot = b.norm_squared();
    let r2 = if ss_tot > 0.0 {
        1.0 - resid.norm_squared() / ss_tot
    } else {
        1.0
    };
    let intercept = ybar - beta.iter().zip(&zbar).map(|(b, z)| b * z).sum::<f64>();
    Some(LinearFit {
        weights: beta.iter().copied().collect(),
        intercept,
        r2,
    })
}

/// Explain the score at `x` through its most relevant member.
///
/// `data` supplies the perturbation scale and the quartile bins. A spread
/// too small to fit is retried once at twice the scale.
pub fn local_explain<M: MemberModel + ?Sized>(
    model: &M,
    data: &Array2<f64>,
    x: &[f64],
    cfg: &SurrogateConfig,
    stream_index: u64,
) -> Result<SurrogateExplanation> {
    cfg.validate()?;
    let d = data.ncols();
    if x.len() != d {
        return Err(GladError::DimensionMismatch {
            expected: d,
            got: x.len(),
        });
    }
    let relevance = model.relevance(x)?;
    let member = argmax(&relevance);
    let bins = QuartileBins::fit(data)?;
    let home: Vec<usize> = (0..d).map(|j| bins.bin(j, x[j])).collect();
    let sigma = population_std(data);
    let width = cfg.kernel_width.unwrap_or(0.75 * (d as f64).sqrt());

    for (attempt, scale) in [1.0, 2.0].into_iter().enumerate() {
        let mut rng = rng::rng_for(cfg.seed, rng::stream::SURROGATE, stream_index * 2 + attempt as u64);
        let mut z = DMatrix::zeros(cfg.n_samples, d);
        let mut y = Vec::with_capacity(cfg.n_samples);
        let mut w = Vec::with_capacity(cfg.n_samples);
        let mut xp = vec![0.0; d];
        for i in 0..cfg.n_samples {
            let mut dist_sq = 0.0;
            for j in 0..d {
                let e: f64 = StandardNormal.sample(&mut rng);
                xp[j] = x[j] + scale * sigma[j] * e;
                dist_sq += (xp[j] - x[j]).powi(2);
                z[(i, j)] = f64::from(u8::from(bins.bin(j, xp[j]) == home[j]));
            }
            y.push(model.member_score(member, &xp)?);
            w.push((-dist_sq / (width * width)).exp());
        }
        let Some(fit) = weighted_ridge(&z, &y, &w, cfg.ridge) else {
            tracing::debug!(scale, "degenerate surrogate neighborhood");
            continue;
        };
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| fit.weights[b].abs().total_cmp(&fit.weights[a].abs()).then(a.cmp(&b)));
        let terms = order
            .into_iter()
            .take(cfg.top_k)
            .map(|j| SurrogateTerm {
                interval: bins.interval(j, home[j]),
                weight: fit.weights[j],
            })
            .collect();
        return Ok(SurrogateExplanation {
            member,
            relevance,
            terms,
            intercept: fit.intercept,
            fit_r2: fit.r2,
            sigma_scale: scale,
        });
    }
    Err(GladError::DegeneratePerturbation)
}

/// Everything shown for one instance: member, its regions, and the surrogate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceExplanation {
    pub index: usize,
    pub member: usize,
    pub relevance: Vec<f64>,
    pub member_scores: Vec<f64>,
    pub score: f64,
    pub regions: Vec<String>,
    pub terms: Vec<RenderedTerm>,
    pub intercept: f64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedTerm {
    pub interval: String,
    pub weight: f64,
}

pub struct ExplainContext<'a> {
    pub ensemble: &'a LodaEnsemble,
    pub params: &'a FssnParams,
    pub features: &'a Array2<f64>,
    pub feature_names: &'a [String],
    /// Render intervals in raw units when present.
    pub stats: Option<&'a StandardizationStats>,
}

pub fn explain_instance(
    ctx: &ExplainContext<'_>,
    index: usize,
    tree_cfg: &TreeConfig,
    surrogate_cfg: &SurrogateConfig,
) -> Result<InstanceExplanation> {
    let n = ctx.features.nrows();
    if index >= n {
        return Err(GladError::IndexOutOfRange { index, n });
    }
    let row: ArrayView1<f64> = ctx.features.row(index);
    let x = row_slice(&row);
    let model = GladModel {
        ensemble: ctx.ensemble,
        params: ctx.params,
    };
    let mut surrogate = local_explain(&model, ctx.features, &x, surrogate_cfg, index as u64)?;
    let assignment = RelevanceAssignment::compute(ctx.params, ctx.features)?;
    let positives = assignment.positives(surrogate.member);
    let tree = RuleTree::fit(ctx.features, &positives, tree_cfg)?;
    let mut rules = describe_regions(&tree);
    if let Some(stats) = ctx.stats {
        rules = rules.iter().map(|r| r.destandardize(stats)).collect();
        surrogate = surrogate.destandardize(stats);
    }
    let member_scores = ctx.ensemble.member_scores(&x)?;
    let score = crate::objective::glad_score(&member_scores, &surrogate.relevance);
    Ok(InstanceExplanation {
        index,
        member: surrogate.member,
        relevance: surrogate.relevance.clone(),
        member_scores,
        score,
        regions: rules.iter().map(|r| r.render(ctx.feature_names)).collect(),
        terms: surrogate
            .terms
            .iter()
            .map(|t| RenderedTerm {
                interval: t.interval.render(ctx.feature_names),
                weight: t.weight,
            })
            .collect(),
        intercept: surrogate.intercept,
        text: surrogate.render(ctx.feature_names),
    })
}

impl fmt::Display for InstanceExplanation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "instance {} (score {:.4})", self.index, self.score)?;
        writeln!(
            f,
            "most relevant member: {} (relevance {:.4})",
            self.member, self.relevance[self.member]
        )?;
        if self.regions.is_empty() {
            writeln!(f, "member regions: none")?;
        } else {
            writeln!(f, "member regions:")?;
            for r in &self.regions {
                writeln!(f, "  {r}")?;
            }
        }
        write!(f, "explanation: {}", self.text)
    }
}
