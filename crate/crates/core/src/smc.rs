//! Bootstrap particle filter and its unbiased evidence estimate.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{StateSpaceModel, Trajectory};
use crate::numeric::{normalize_into, Simplex};
use crate::rng::{categorical_unchecked, multinomial_into};

/// Particle paths kept when the filter runs with history enabled.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterHistory {
    /// `states[t][n]`.
    pub states: Vec<Vec<f64>>,
    /// `ancestors[t][n]`: the index at step `t` that particle `n` at `t + 1` descends from.
    pub ancestors: Vec<Vec<usize>>,
}

impl FilterHistory {
    pub fn trace(&self, terminal: usize) -> Trajectory {
        let horizon = self.states.len() - 1;
        let mut xs = vec![0.0; horizon + 1];
        let mut k = terminal;
        for t in (0..=horizon).rev() {
            xs[t] = self.states[t][k];
            if t > 0 {
                k = self.ancestors[t - 1][k];
            }
        }
        Trajectory::new(xs).expect("particle states are finite")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput {
    /// `log Ẑ_T(θ)`.
    pub log_z: f64,
    pub particles: Vec<f64>,
    pub weights: Simplex,
    pub history: Option<FilterHistory>,
}

impl FilterOutput {
    /// Draw a terminal particle from the final weights and trace its lineage.
    /// `None` when the filter ran without history.
    pub fn sample_trajectory<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Trajectory> {
        let history = self.history.as_ref()?;
        let k = categorical_unchecked(self.weights.probs(), rng);
        Some(history.trace(k))
    }
}

/// Bootstrap filter with multinomial resampling at every step.
///
/// `log Ẑ = Σ_t log( (1/N) Σ_n g_t(x^n_t) )`, an unbiased estimate of `Z_T(θ)`
/// on the natural scale.
pub fn bootstrap_filter<M, R>(
    model: &M,
    theta: &M::Param,
    n: usize,
    keep_history: bool,
    rng: &mut R,
) -> Result<FilterOutput>
where
    M: StateSpaceModel,
    R: Rng + ?Sized,
{
    if n == 0 {
        return Err(Error::Config("the filter needs at least one particle".into()));
    }
    if model.log_prior(theta) == f64::NEG_INFINITY {
        return Err(Error::OutsideSupport);
    }
    let horizon = model.horizon();
    let log_n = (n as f64).ln();

    let mut x: Vec<f64> = (0..n).map(|_| model.sample_transition(0, None, theta, rng)).collect();
    let mut logw: Vec<f64> = x.iter().map(|&xi| model.log_potential(0, None, xi, theta)).collect();
    let mut w = Vec::with_capacity(n);
    let mut cumulative = Vec::with_capacity(n);
    let mut ancestors = Vec::with_capacity(n);
    let mut next = Vec::with_capacity(n);
    let mut history = keep_history.then(|| FilterHistory {
        states: Vec::with_capacity(horizon + 1),
        ancestors: Vec::with_capacity(horizon),
    });

    let mut log_z = normalize_into(&logw, &mut w).map_err(|_| Error::CollapseAt { step: 0 })? - log_n;
    for t in 1..=horizon {
        multinomial_into(&w, n, rng, &mut cumulative, &mut ancestors);
        next.clear();
        for &a in &ancestors {
            next.push(model.sample_transition(t, Some(x[a]), theta, rng));
        }
        for (i, &a) in ancestors.iter().enumerate() {
            logw[i] = model.log_potential(t, Some(x[a]), next[i], theta);
        }
        if let Some(h) = history.as_mut() {
            h.states.push(std::mem::take(&mut x));
            h.ancestors.push(ancestors.clone());
        }
        std::mem::swap(&mut x, &mut next);
        log_z += normalize_into(&logw, &mut w).map_err(|_| Error::CollapseAt { step: t })? - log_n;
    }
    if let Some(h) = history.as_mut() {
        h.states.push(x.clone());
    }
    Ok(FilterOutput { log_z, particles: x, weights: Simplex::new(w)?, history })
}
