//! Feature space suppression network (FSSN).
//!
//! One hidden leaky-ReLU layer of width `max(50, 3M)` feeding `M` sigmoid
//! outputs; output `m` is the relevance `p_m(x)` of ensemble member `m` at
//! `x`. Gradients are derived by hand. [`FssnParams::backward`] returns the
//! exact parameter gradient of `sum_m g_m * p_m(x)` for caller-supplied
//! output weights `g`, which is how every loss in this crate reaches the
//! weights.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{GladError, Result};
use crate::rng;

pub const LEAKY_SLOPE: f64 = 0.2;
/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` inside logs.
pub const PROB_EPS: f64 = 1e-12;
/// Output-layer init shrink; keeps initial relevances close to 0.5 so that
/// priming starts near its target.
pub const OUTPUT_INIT_SCALE: f64 = 0.01;

pub fn hidden_width(n_members: usize) -> usize {
    50.max(3 * n_members)
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn leaky(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        LEAKY_SLOPE * z
    }
}

#[inline]
fn leaky_grad(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

/// Network weights. Matrices are stored row-major: `w1` is `hidden × input`,
/// `w2` is `outputs × hidden`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FssnParams {
    pub input_dim: usize,
    pub hidden: usize,
    pub outputs: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// Gradient with the same layout as [`FssnParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FssnGrad {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl FssnGrad {
    pub fn zeros_like(p: &FssnParams) -> Self {
        Self {
            w1: vec![0.0; p.w1.len()],
            b1: vec![0.0; p.b1.len()],
            w2: vec![0.0; p.w2.len()],
            b2: vec![0.0; p.b2.len()],
        }
    }

    pub fn parts(&self) -> [&[f64]; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn parts_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn len(&self) -> usize {
        self.parts().iter().map(|p| p.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat coordinate access in `w1, b1, w2, b2` order.
    pub fn get(&self, k: usize) -> f64 {
        let mut k = k;
        for part in self.parts() {
            if k < part.len() {
                return part[k];
            }
            k -= part.len();
        }
        panic!("gradient coordinate out of range")
    }

    pub fn scale(&mut self, c: f64) {
        for part in self.parts_mut() {
            part.iter_mut().for_each(|v| *v *= c);
        }
    }

    pub fn add_assign(&mut self, other: &FssnGrad) {
        for (a, b) in self.parts_mut().into_iter().zip(other.parts()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.parts().iter().all(|p| p.iter().all(|v| v.is_finite()))
    }

    pub fn is_zero(&self) -> bool {
        self.parts().iter().all(|p| p.iter().all(|v| *v == 0.0))
    }
}

/// Per-instance intermediate values of a forward pass.
#[derive(Debug, Clone)]
pub struct Activations {
    pub pre: Vec<f64>,
    pub hidden: Vec<f64>,
    pub out: Vec<f64>,
}

impl Activations {
    pub fn new(p: &FssnParams) -> Self {
        Self {
            pre: vec![0.0; p.hidden],
            hidden: vec![0.0; p.hidden],
            out: vec![0.0; p.outputs],
        }
    }
}

impl FssnParams {
    /// He-scaled Gaussian weights (variance `2 / fan_in`) with the output
    /// layer further scaled by [`OUTPUT_INIT_SCALE`]; zero biases.
    pub fn init(input_dim: usize, n_members: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || n_members == 0 {
            return Err(GladError::InvalidConfig(
                "network needs input_dim >= 1 and at least one output".into(),
            ));
        }
        let hidden = hidden_width(n_members);
        let mut rng = rng::rng_for(seed, rng::stream::NETWORK_INIT, 0);
        let n1 = Normal::new(0.0, (2.0 / input_dim as f64).sqrt()).expect("valid std");
        let n2 = Normal::new(0.0, OUTPUT_INIT_SCALE * (2.0 / hidden as f64).sqrt())
            .expect("valid std");
        let w1 = (0..hidden * input_dim).map(|_| n1.sample(&mut rng)).collect();
        let w2 = (0..n_members * hidden).map(|_| n2.sample(&mut rng)).collect();
        Ok(Self {
            input_dim,
            hidden,
            outputs: n_members,
            w1,
            b1: vec![0.0; hidden],
            w2,
            b2: vec![0.0; n_members],
        })
    }

    /// All-zero parameters of the given shape (every output is 0.5).
    pub fn zeros(input_dim: usize, hidden: usize, outputs: usize) -> Self {
        Self {
            input_dim,
            hidden,
            outputs,
            w1: vec![0.0; hidden * input_dim],
            b1: vec![0.0; hidden],
            w2: vec![0.0; outputs * hidden],
            b2: vec![0.0; outputs],
        }
    }

    pub fn n_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn parts_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    /// Flat mutable coordinate access in `w1, b1, w2, b2` order.
    pub fn coord_mut(&mut self, k: usize) -> &mut f64 {
        let mut k = k;
        for part in self.parts_mut() {
            if k < part.len() {
                return &mut part[k];
            }
            k -= part.len();
        }
        panic!("parameter coordinate out of range")
    }

    pub fn is_finite(&self) -> bool {
        [&self.w1, &self.b1, &self.w2, &self.b2]
            .iter()
            .all(|p| p.iter().all(|v| v.is_finite()))
    }

    /// Squared Frobenius norm of the weight matrices (biases excluded).
    pub fn weight_norm_sq(&self) -> f64 {
        self.w1.iter().chain(&self.w2).map(|v| v * v).sum()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut act = Activations::new(self);
        self.forward_into(x, &mut act);
        Ok(act.out)
    }

    /// Forward pass writing every intermediate into `act`. `x` must have
    /// length `input_dim`.
    pub fn forward_into(&self, x: &[f64], act: &mut Activations) {
        debug_assert_eq!(x.len(), self.input_dim);
        let d = self.input_dim;
        for j in 0..self.hidden {
            let row = &self.w1[j * d..(j + 1) * d];
            let z = self.b1[j] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            act.pre[j] = z;
            act.hidden[j] = leaky(z);
        }
        let h = self.hidden;
        for m in 0..self.outputs {
            let row = &self.w2[m * h..(m + 1) * h];
            let z = self.b2[m] + row.iter().zip(&act.hidden).map(|(w, v)| w * v).sum::<f64>();
            act.out[m] = sigmoid(z);
        }
    }

    /// Relevance for every row of `features` (n × M).
    pub fn forward_batch(&self, features: &Array2<f64>) -> Result<Array2<f64>> {
        if features.ncols() != self.input_dim {
            return Err(GladError::DimensionMismatch {
                expected: self.input_dim,
                got: features.ncols(),
            });
        }
        let mut out = Array2::zeros((features.nrows(), self.outputs));
        let mut act = Activations::new(self);
        for (i, row) in features.rows().into_iter().enumerate() {
            let x = crate::loda::row_slice(&row);
            self.forward_into(x.as_ref(), &mut act);
            for (m, p) in act.out.iter().enumerate() {
                out[[i, m]] = *p;
            }
        }
        Ok(out)
    }

    /// Gradient of `sum_m output_grad[m] * p_m(x)` with respect to every parameter.
    pub fn backward(&self, x: &[f64], output_grad: &[f64]) -> Result<FssnGrad> {
        self.check_input(x)?;
        if output_grad.len() != self.outputs {
            return Err(GladError::DimensionMismatch {
                expected: self.outputs,
                got: output_grad.len(),
            });
        }
        let mut grad = FssnGrad::zeros_like(self);
        let mut act = Activations::new(self);
        self.forward_into(x, &mut act);
        self.backward_accumulate(x, &act, output_grad, &mut grad);
        Ok(grad)
    }

    /// Accumulate the gradient of `sum_m output_grad[m] * p_m(x)` into `grad`,
    /// given the activations of a forward pass at `x`.
    pub fn backward_accumulate(
        &self,
        x: &[f64],
        act: &Activations,
        output_grad: &[f64],
        grad: &mut FssnGrad,
    ) {
        let (d, h) = (self.input_dim, self.hidden);
        let mut d_hidden = vec![0.0; h];
        for m in 0..self.outputs {
            let p = act.out[m];
            let dz = output_grad[m] * p * (1.0 - p);
            if dz == 0.0 {
                continue;
            }
            grad.b2[m] += dz;
            let w_row = &self.w2[m * h..(m + 1) * h];
            let g_row = &mut grad.w2[m * h..(m + 1) * h];
            for j in 0..h {
                g_row[j] += dz * act.hidden[j];
                d_hidden[j] += dz * w_row[j];
            }
        }
        for j in 0..h {
            let dz = d_hidden[j] * leaky_grad(act.pre[j]);
            if dz == 0.0 {
                continue;
            }
            grad.b1[j] += dz;
            let g_row = &mut grad.w1[j * d..(j + 1) * d];
            for (g, v) in g_row.iter_mut().zip(x) {
                *g += dz * v;
            }
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            Err(GladError::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
            })
        } else {
            Ok(())
        }
    }
}

/// Cross-entropy of relevances against the constant target `b`, summed over outputs.
#[inline]
pub fn prior_term(p: &[f64], b: f64) -> f64 {
    p.iter()
        .map(|&pm| {
            let pm = pm.clamp(PROB_EPS, 1.0 - PROB_EPS);
            -b * pm.ln() - (1.0 - b) * (1.0 - pm).ln()
        })
        .sum()
}

/// d(prior_term)/d(p_m) for each output.
#[inline]
pub fn prior_term_grad(p: &[f64], b: f64, out: &mut [f64]) {
    for (g, &pm) in out.iter_mut().zip(p) {
        let pm = pm.clamp(PROB_EPS, 1.0 - PROB_EPS);
        *g = -b / pm + (1.0 - b) / (1.0 - pm);
    }
}

/// Binary entropy `H(b)` in nats: the per-output minimum of the prior loss.
pub fn binary_entropy(b: f64) -> f64 {
    -b * b.ln() - (1.0 - b) * (1.0 - b).ln()
}

/// Mean prior loss over the rows of `features`.
pub fn prior_loss(params: &FssnParams, features: &Array2<f64>, b: f64) -> Result<f64> {
    let rel = params.forward_batch(features)?;
    let total: f64 = rel
        .rows()
        .into_iter()
        .map(|r| prior_term(crate::loda::row_slice(&r).as_ref(), b))
        .sum();
    Ok(total / features.nrows() as f64)
}

/// Value and parameter gradient of the mean prior loss over `features`.
pub fn prior_loss_and_grad(
    params: &FssnParams,
    features: &Array2<f64>,
    b: f64,
) -> Result<(f64, FssnGrad)> {
    let rows: Vec<usize> = (0..features.nrows()).collect();
    Ok(prior_batch(params, features, &rows, b))
}

fn prior_batch(
    params: &FssnParams,
    features: &Array2<f64>,
    rows: &[usize],
    b: f64,
) -> (f64, FssnGrad) {
    let mut grad = FssnGrad::zeros_like(params);
    let mut act = Activations::new(params);
    let mut og = vec![0.0; params.outputs];
    let mut total = 0.0;
    let scale = 1.0 / rows.len() as f64;
    for &i in rows {
        let row = features.row(i);
        let x = crate::loda::row_slice(&row);
        params.forward_into(x.as_ref(), &mut act);
        total += prior_term(&act.out, b);
        prior_term_grad(&act.out, b, &mut og);
        og.iter_mut().for_each(|g| *g *= scale);
        params.backward_accumulate(x.as_ref(), &act, &og, &mut grad);
    }
    (total * scale, grad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub step_size: f64,
    pub l2_coeff: f64,
    pub batch_size: usize,
    pub upsample_factor: usize,
    pub seed: u64,
    /// Priming stops once every relevance is within this distance of the target.
    pub prime_tolerance: f64,
    pub prime_max_epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            step_size: 1e-3,
            l2_coeff: 1e-3,
            batch_size: 64,
            upsample_factor: 5,
            seed: 0,
            prime_tolerance: 0.05,
            prime_max_epochs: 200,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(GladError::InvalidConfig(m.to_string()));
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return bad("step_size must be positive");
        }
        if !(self.l2_coeff >= 0.0 && self.l2_coeff.is_finite()) {
            return bad("l2_coeff must be non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.upsample_factor == 0 {
            return bad("upsample_factor must be positive");
        }
        if !(self.prime_tolerance > 0.0 && self.prime_tolerance < 0.5) {
            return bad("prime_tolerance must be in (0, 0.5)");
        }
        Ok(())
    }
}

/// Adam with coupled L2 decay on the weight matrices.
#[derive(Debug, Clone)]
pub struct Adam {
    pub step_size: f64,
    pub l2_coeff: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: FssnGrad,
    v: FssnGrad,
}

impl Adam {
    pub fn new(params: &FssnParams, cfg: &TrainConfig) -> Self {
        Self {
            step_size: cfg.step_size,
            l2_coeff: cfg.l2_coeff,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: FssnGrad::zeros_like(params),
            v: FssnGrad::zeros_like(params),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Apply one update. A non-finite gradient leaves both the parameters
    /// and the moment estimates untouched.
    pub fn step(&mut self, params: &mut FssnParams, grad: &FssnGrad) -> Result<()> {
        if !grad.is_finite() {
            return Err(GladError::NonFiniteGradient);
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2, lr, eps, l2) = (self.beta1, self.beta2, self.step_size, self.eps, self.l2_coeff);
        let decayed = [true, false, true, false];
        let params_parts = params.parts_mut();
        let m_parts = self.m.parts_mut();
        let v_parts = self.v.parts_mut();
        for (k, ((p, (m, v)), g)) in params_parts
            .into_iter()
            .zip(m_parts.into_iter().zip(v_parts))
            .zip(grad.parts())
            .enumerate()
        {
            let decay = if decayed[k] { l2 } else { 0.0 };
            for i in 0..p.len() {
                let gi = g[i] + decay * p[i];
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// One functional optimizer step from a fresh Adam state.
pub fn train_step(params: &FssnParams, grad: &FssnGrad, cfg: &TrainConfig) -> Result<FssnParams> {
    let mut out = params.clone();
    Adam::new(params, cfg).step(&mut out, grad)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimingReport {
    pub converged: bool,
    pub epochs: usize,
    /// Largest `|p_m(x) - b|` over the priming data at exit.
    pub max_deviation: f64,
    /// Mean prior loss at exit.
    pub prior_loss: f64,
}

/// Largest `|p_m(x) - b|` over all rows and outputs.
pub fn max_deviation(params: &FssnParams, features: &Array2<f64>, b: f64) -> Result<f64> {
    Ok(params
        .forward_batch(features)?
        .iter()
        .map(|p| (p - b).abs())
        .fold(0.0, f64::max))
}

/// Train the network to output `b` everywhere on `features`.
///
/// The output biases are first set to `logit(b)`, then mini-batch epochs
/// of the prior loss run until every output is within
/// `cfg.prime_tolerance` of `b` or `cfg.prime_max_epochs` is reached. The
/// latter is reported but it is not an error.
pub fn prime(
    params: &mut FssnParams,
    features: &Array2<f64>,
    b: f64,
    cfg: &TrainConfig,
) -> Result<PrimingReport> {
    if !(b > 0.0 && b < 1.0) {
        return Err(GladError::InvalidConfig("prior target b must be in (0, 1)".into()));
    }
    if features.nrows() == 0 {
        return Err(GladError::EmptyDataset);
    }
    if features.ncols() != params.input_dim {
        return Err(GladError::DimensionMismatch {
            expected: params.input_dim,
            got: features.ncols(),
        });
    }
    cfg.validate()?;
    let logit = (b / (1.0 - b)).ln();
    params.b2.iter_mut().for_each(|v| *v = logit);

    let mut adam = Adam::new(params, cfg);
    let mut order: Vec<usize> = (0..features.nrows()).collect();
    let mut epochs = 0;
    let mut dev = max_deviation(params, features, b)?;
    while dev > cfg.prime_tolerance && epochs < cfg.prime_max_epochs {
        let mut rng = rng::rng_for(cfg.seed, rng::stream::PRIMING, epochs as u64);
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let (_, grad) = prior_batch(params, features, batch, b);
            adam.step(params, &grad)?;
        }
        epochs += 1;
        dev = max_deviation(params, features, b)?;
    }
    let converged = dev <= cfg.prime_tolerance;
    if !converged {
        tracing::warn!(epochs, max_deviation = dev, "priming did not reach tolerance");
    }
    Ok(PrimingReport {
        converged,
        epochs,
        max_deviation: dev,
        prior_loss: prior_loss(params, features, b)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_params(d: usize, m: usize, seed: u64) -> FssnParams {
        let mut p = FssnParams::init(d, m, seed).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        p.b1.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
        p.b2.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
        p
    }

    #[test]
    fn hidden_width_rule() {
        assert_eq!(FssnParams::init(2, 4, 0).unwrap().hidden, 50);
        assert_eq!(FssnParams::init(2, 20, 0).unwrap().hidden, 60);
        assert_eq!(FssnParams::init(3, 15, 1).unwrap(), FssnParams::init(3, 15, 1).unwrap());
        assert!(FssnParams::init(0, 4, 0).is_err());
    }

    #[test]
    fn zero_params_output_half() {
        let p = FssnParams::zeros(3, 50, 4);
        assert_eq!(p.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.5; 4]);
    }

    #[test]
    fn saturated_bias_outputs_one() {
        let mut p = FssnParams::zeros(2, 50, 2);
        p.b2[0] = 20.0;
        let out = p.forward(&[0.3, 0.1]).unwrap();
        assert!((out[0] - 1.0).abs() < 1e-8);
        assert!(out[0] < 1.0);
    }

    #[test]
    fn outputs_stay_in_open_unit_interval() {
        let p = random_params(3, 6, 9);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..10_000 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-10.0..10.0)).collect();
            for v in p.forward(&x).unwrap() {
                assert!(v > 0.0 && v < 1.0);
            }
        }
        assert!(p.forward(&[1.0]).is_err());
    }

    #[test]
    fn prior_loss_at_half_is_m_log_two() {
        let p = FssnParams::zeros(2, 50, 4);
        let x = Array2::from_shape_fn((7, 2), |(i, j)| (i * 2 + j) as f64);
        let loss = prior_loss(&p, &x, 0.5).unwrap();
        assert!((loss - 4.0 * 2f64.ln()).abs() < 1e-12);
        let (_, grad) = prior_loss_and_grad(&p, &x, 0.5).unwrap();
        assert!(grad.parts().iter().all(|g| g.iter().all(|v| v.abs() < 1e-12)));

        // Any perturbation can only raise the loss.
        let mut q = p.clone();
        q.b2[1] = 0.3;
        q.w2[5] = -0.2;
        assert!(prior_loss(&q, &x, 0.5).unwrap() > loss);
    }

    #[test]
    fn prior_gradient_vanishes_at_target_by_finite_differences() {
        let p = FssnParams::zeros(2, 50, 4);
        let x = Array2::from_shape_fn((5, 2), |(i, j)| i as f64 - j as f64);
        let h = 1e-5;
        for k in [0usize, 17, 100, 140, 199, 250, p.n_params() - 1] {
            let mut plus = p.clone();
            *plus.coord_mut(k) += h;
            let mut minus = p.clone();
            *minus.coord_mut(k) -= h;
            let fd = (prior_loss(&plus, &x, 0.5).unwrap() - prior_loss(&minus, &x, 0.5).unwrap())
                / (2.0 * h);
            assert!(fd.abs() < 1e-6, "coordinate {k}: {fd}");
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let p = random_params(3, 5, 4);
        let x = [0.7, -1.2, 0.4];
        let g = [0.3, -1.0, 2.0, 0.5, -0.7];
        let grad = p.backward(&x, &g).unwrap();
        let f = |q: &FssnParams| -> f64 {
            q.forward(&x).unwrap().iter().zip(&g).map(|(a, b)| a * b).sum()
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let k = rng.random_range(0..p.n_params());
            let mut plus = p.clone();
            *plus.coord_mut(k) += h;
            let mut minus = p.clone();
            *minus.coord_mut(k) -= h;
            let fd = (f(&plus) - f(&minus)) / (2.0 * h);
            let an = grad.get(k);
            let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
            worst = worst.max(rel);
        }
        assert!(worst <= 1e-4, "max relative error {worst}");
    }

    #[test]
    fn backward_is_linear_and_zero_at_zero() {
        let p = random_params(2, 3, 8);
        let x = [0.1, 0.9];
        assert!(p.backward(&x, &[0.0; 3]).unwrap().is_zero());
        let g1 = p.backward(&x, &[1.0, -0.5, 0.25]).unwrap();
        let mut g2 = p.backward(&x, &[2.0, -1.0, 0.5]).unwrap();
        g2.scale(0.5);
        for (a, b) in g1.parts().iter().zip(g2.parts()) {
            for (u, v) in a.iter().zip(b) {
                assert!((u - v).abs() <= 1e-12 * u.abs().max(1.0));
            }
        }
    }

    #[test]
    fn zero_gradient_without_decay_is_fixed_point() {
        let p = random_params(2, 3, 1);
        let cfg = TrainConfig {
            l2_coeff: 0.0,
            ..TrainConfig::default()
        };
        let out = train_step(&p, &FssnGrad::zeros_like(&p), &cfg).unwrap();
        assert_eq!(out, p);
    }

    #[test]
    fn decay_alone_shrinks_weights() {
        let mut p = random_params(2, 3, 2);
        let cfg = TrainConfig {
            l2_coeff: 1e-2,
            ..TrainConfig::default()
        };
        let zero = FssnGrad::zeros_like(&p);
        let mut adam = Adam::new(&p, &cfg);
        let mut prev = p.weight_norm_sq();
        for _ in 0..20 {
            adam.step(&mut p, &zero).unwrap();
            let now = p.weight_norm_sq();
            assert!(now < prev);
            prev = now;
        }
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let p = random_params(2, 3, 3);
        let mut g = FssnGrad::zeros_like(&p);
        g.w2[0] = f64::NAN;
        assert!(matches!(
            train_step(&p, &g, &TrainConfig::default()),
            Err(GladError::NonFiniteGradient)
        ));
    }

    #[test]
    fn adam_converges_on_convex_quadratic() {
        // Objective: 0.5 * sum (theta - target)^2 over all coordinates.
        let mut p = FssnParams::zeros(2, 50, 2);
        let target: Vec<f64> = (0..p.n_params()).map(|k| ((k % 7) as f64 - 3.0) * 0.01).collect();
        let cfg = TrainConfig {
            step_size: 1e-3,
            l2_coeff: 0.0,
            ..TrainConfig::default()
        };
        let mut adam = Adam::new(&p, &cfg);
        let dist = |p: &mut FssnParams| -> f64 {
            (0..target.len())
                .map(|k| (*p.coord_mut(k) - target[k]).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let mut prev = dist(&mut p);
        for round in 0..5 {
            for _ in 0..10 {
                let mut g = FssnGrad::zeros_like(&p);
                let mut k = 0;
                for part in g.parts_mut() {
                    for v in part.iter_mut() {
                        *v = *p.coord_mut(k) - target[k];
                        k += 1;
                    }
                }
                adam.step(&mut p, &g).unwrap();
            }
            let now = dist(&mut p);
            assert!(now < prev, "round {round}: {now} >= {prev}");
            prev = now;
        }
    }

    #[test]
    fn priming_hits_targets() {
        let toy = crate::data::make_toy(42, 500, 15).unwrap();
        let (toy, _) = crate::data::standardize(&toy);
        for b in [0.5, 0.2] {
            let mut p = FssnParams::init(2, 4, 42).unwrap();
            let report = prime(&mut p, &toy.features, b, &TrainConfig::default()).unwrap();
            assert!(report.converged, "b={b}: {report:?}");
            let rel = p.forward_batch(&toy.features).unwrap();
            assert!(rel.iter().all(|v| (v - b).abs() <= 0.05));
            let optimum = 4.0 * binary_entropy(b);
            assert!((report.prior_loss - optimum).abs() <= 1e-2, "{report:?}");
        }
    }

    #[test]
    fn priming_is_deterministic() {
        let toy = crate::data::make_toy(1, 100, 5).unwrap();
        let run = || {
            let mut p = FssnParams::init(2, 4, 3).unwrap();
            prime(&mut p, &toy.features, 0.5, &TrainConfig::default()).unwrap();
            p
        };
        assert_eq!(run(), run());
    }
}
