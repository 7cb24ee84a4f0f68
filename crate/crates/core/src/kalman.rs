//! Exact inference for [`LinearGaussianSsm`]: evidence, RTS smoothing and
//! forward-filtering backward-sampling.
//!
//! The state is scalar, so the recursions are written out directly.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{ExactMarginal, LinearGaussianSsm, StateSpaceModel, Theta, Trajectory};
use crate::numeric::normal_logpdf;

/// Forward-pass quantities for every step.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanCache {
    pub predicted_mean: Vec<f64>,
    pub predicted_var: Vec<f64>,
    pub filtered_mean: Vec<f64>,
    pub filtered_var: Vec<f64>,
    /// `log p(y_t | y_{0:t−1})`.
    pub log_increments: Vec<f64>,
}

impl KalmanCache {
    pub fn log_likelihood(&self) -> f64 {
        self.log_increments.iter().sum()
    }
}

/// Per-step smoothed mean and variance.
#[derive(Debug, Clone, PartialEq)]
pub struct SmootherMoments {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

pub fn kalman_filter(model: &LinearGaussianSsm, theta: &Theta) -> Result<KalmanCache> {
    if !theta.in_support() {
        return Err(Error::OutsideSupport);
    }
    let ys = model.observations();
    let n = ys.len();
    let mut cache = KalmanCache {
        predicted_mean: Vec::with_capacity(n),
        predicted_var: Vec::with_capacity(n),
        filtered_mean: Vec::with_capacity(n),
        filtered_var: Vec::with_capacity(n),
        log_increments: Vec::with_capacity(n),
    };
    let mut m = 0.0;
    let mut p = model.initial().variance(theta);
    for &y in ys {
        let s = p + theta.sigma2_y;
        cache.predicted_mean.push(m);
        cache.predicted_var.push(p);
        cache.log_increments.push(normal_logpdf(y, m, s));
        let gain = p / s;
        let mf = m + gain * (y - m);
        let pf = p * theta.sigma2_y / s;
        cache.filtered_mean.push(mf);
        cache.filtered_var.push(pf);
        m = theta.rho * mf;
        p = theta.rho * theta.rho * pf + theta.sigma2_x;
    }
    Ok(cache)
}

/// `log Z_T(θ)`. Returns `-inf` outside the prior support.
pub fn kalman_loglik(model: &LinearGaussianSsm, theta: &Theta) -> f64 {
    match kalman_filter(model, theta) {
        Ok(cache) => cache.log_likelihood(),
        Err(_) => f64::NEG_INFINITY,
    }
}

/// Rauch–Tung–Striebel smoothed moments.
pub fn smoother_moments(model: &LinearGaussianSsm, theta: &Theta) -> Result<SmootherMoments> {
    let c = kalman_filter(model, theta)?;
    let n = c.filtered_mean.len();
    let mut mean = c.filtered_mean.clone();
    let mut var = c.filtered_var.clone();
    for t in (0..n - 1).rev() {
        let g = c.filtered_var[t] * theta.rho / c.predicted_var[t + 1];
        mean[t] = c.filtered_mean[t] + g * (mean[t + 1] - c.predicted_mean[t + 1]);
        var[t] = c.filtered_var[t] + g * g * (var[t + 1] - c.predicted_var[t + 1]);
    }
    Ok(SmootherMoments { mean, var })
}

/// Exact draw from `π_T(x_{0:T} | θ, y)`.
pub fn ffbs_sample<R: Rng + ?Sized>(model: &LinearGaussianSsm, theta: &Theta, rng: &mut R) -> Result<Trajectory> {
    let c = kalman_filter(model, theta)?;
    let n = c.filtered_mean.len();
    let mut xs = vec![0.0; n];
    let z: f64 = StandardNormal.sample(rng);
    xs[n - 1] = c.filtered_mean[n - 1] + c.filtered_var[n - 1].sqrt() * z;
    for t in (0..n - 1).rev() {
        // x_t | x_{t+1}: filtered prior times the transition likelihood
        let prec = 1.0 / c.filtered_var[t] + theta.rho * theta.rho / theta.sigma2_x;
        let var = 1.0 / prec;
        let mean = var * (c.filtered_mean[t] / c.filtered_var[t] + theta.rho * xs[t + 1] / theta.sigma2_x);
        let z: f64 = StandardNormal.sample(rng);
        xs[t] = mean + var.sqrt() * z;
    }
    Trajectory::new(xs)
}

impl ExactMarginal for LinearGaussianSsm {
    fn log_marginal(&self, theta: &Theta) -> f64 {
        if self.log_prior(theta) == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        kalman_loglik(self, theta)
    }
}
