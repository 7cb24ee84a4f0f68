//! Parametric Feynman–Kac models.
//!
//! A model couples a transition density `p_t(x_t | x_{t-1}, θ)` with a
//! potential `g_t(x_{t-1}, x_t; θ)` and a prior `p(θ)`. State-space models are
//! the special case where the potential is an observation density that only
//! reads `x_t`. Step `t = 0` has no predecessor and uses the initial law.

use std::fmt::Debug;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::numeric::{inverse_gamma_logpdf, normal_logpdf, LogSumExp};

/// A latent path `x_{0:T}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory(Vec<f64>);

impl Trajectory {
    pub fn new(states: Vec<f64>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some(index) = states.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteState { index });
        }
        Ok(Self(states))
    }

    pub fn states(&self) -> &[f64] {
        &self.0
    }

    /// Index of the last state, `T`.
    pub fn horizon(&self) -> usize {
        self.0.len() - 1
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for Trajectory {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Parameter of the linear-Gaussian model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theta {
    /// Autoregression coefficient.
    pub rho: f64,
    /// Transition variance.
    pub sigma2_x: f64,
    /// Observation variance.
    pub sigma2_y: f64,
}

impl Theta {
    pub const DIM: usize = 3;

    pub fn new(rho: f64, sigma2_x: f64, sigma2_y: f64) -> Self {
        Self { rho, sigma2_x, sigma2_y }
    }

    /// `ρ ∈ [-1, 1]` and both variances strictly positive.
    pub fn in_support(&self) -> bool {
        (-1.0..=1.0).contains(&self.rho) && self.sigma2_x > 0.0 && self.sigma2_y > 0.0
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.rho, self.sigma2_x, self.sigma2_y]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

/// A Feynman–Kac model with a Markov transition, a (possibly bivariate)
/// potential and a prior over a static parameter.
///
/// `prev` is `None` at `t = 0`. Every method is pure; randomness comes from the
/// caller's generator.
pub trait StateSpaceModel: Sync {
    type Param: Clone + Debug + PartialEq + Send + Sync;

    /// Index of the last step, `T`.
    fn horizon(&self) -> usize;

    fn log_prior(&self, theta: &Self::Param) -> f64;

    fn log_transition(&self, t: usize, prev: Option<f64>, x: f64, theta: &Self::Param) -> f64;

    fn sample_transition<R: Rng + ?Sized>(
        &self,
        t: usize,
        prev: Option<f64>,
        theta: &Self::Param,
        rng: &mut R,
    ) -> f64;

    fn log_potential(&self, t: usize, prev: Option<f64>, x: f64, theta: &Self::Param) -> f64;

    fn sample_prior_x0<R: Rng + ?Sized>(&self, theta: &Self::Param, rng: &mut R) -> f64 {
        self.sample_transition(0, None, theta, rng)
    }

    /// `log p_t + log g_t` for the step ending in `x`.
    #[inline]
    fn log_increment(&self, t: usize, prev: Option<f64>, x: f64, theta: &Self::Param) -> f64 {
        let lp = self.log_transition(t, prev, x, theta);
        if lp == f64::NEG_INFINITY {
            return lp;
        }
        lp + self.log_potential(t, prev, x, theta)
    }

    /// Gaussian law `(mean, variance)` of `x_t` after integrating the
    /// parameters of the transition against a diagonal Gaussian with the given
    /// per-coordinate `mean` and `var`. Coordinates that cannot be integrated
    /// in closed form are read from `fallback`.
    ///
    /// `None` means no closed form exists at this step.
    fn integrated_transition(
        &self,
        _t: usize,
        _prev: Option<f64>,
        _mean: &[f64],
        _var: &[f64],
        _fallback: &Self::Param,
    ) -> Option<(f64, f64)> {
        None
    }
}

/// Models whose evidence `Z_T(θ)` is available exactly.
pub trait ExactMarginal: StateSpaceModel {
    /// `log Z_T(θ)`; `-inf` outside the prior support.
    fn log_marginal(&self, theta: &Self::Param) -> f64;
}

/// `log γ_t(x_{0:t} | θ) = Σ_{s ≤ t} [log p_s + log g_s]`, excluding the prior.
pub fn log_gamma<M: StateSpaceModel>(
    model: &M,
    traj: &Trajectory,
    theta: &M::Param,
    t: usize,
) -> Result<f64> {
    if t > model.horizon() {
        return Err(Error::StepOutOfRange { step: t, horizon: model.horizon() });
    }
    if traj.len() < t + 1 {
        return Err(Error::LengthMismatch { len: traj.len(), expected: t + 1 });
    }
    Ok(log_gamma_path(model, &traj.states()[..=t], theta))
}

/// Unchecked form of [`log_gamma`] over the whole slice.
pub(crate) fn log_gamma_path<M: StateSpaceModel>(model: &M, path: &[f64], theta: &M::Param) -> f64 {
    let mut total = 0.0;
    let mut prev = None;
    for (s, &x) in path.iter().enumerate() {
        total += model.log_increment(s, prev, x, theta);
        if total == f64::NEG_INFINITY {
            break;
        }
        prev = Some(x);
    }
    total
}

/// Law of `x_0` in the linear-Gaussian model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitialDistribution {
    /// `N(0, σ²_X / (1 − ρ²))` when `|ρ| < 1`, otherwise `N(0, σ²_X)`.
    #[default]
    Stationary,
    /// `N(0, σ²_X)` regardless of `ρ`.
    FixedVariance,
}

impl InitialDistribution {
    pub fn variance(self, theta: &Theta) -> f64 {
        match self {
            Self::Stationary if theta.rho.abs() < 1.0 => theta.sigma2_x / (1.0 - theta.rho * theta.rho),
            _ => theta.sigma2_x,
        }
    }
}

/// `x_t = ρ x_{t−1} + N(0, σ²_X)`, `y_t = x_t + N(0, σ²_Y)` with priors
/// `ρ ~ U[−1, 1]`, `σ²_X, σ²_Y ~ IG(2, 2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussianSsm {
    observations: Vec<f64>,
    init: InitialDistribution,
}

pub const PRIOR_IG_SHAPE: f64 = 2.0;
pub const PRIOR_IG_SCALE: f64 = 2.0;

impl LinearGaussianSsm {
    pub fn new(observations: Vec<f64>) -> Result<Self> {
        Self::with_initial(observations, InitialDistribution::Stationary)
    }

    pub fn with_initial(observations: Vec<f64>, init: InitialDistribution) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some(index) = observations.iter().position(|y| !y.is_finite()) {
            return Err(Error::NonFiniteState { index });
        }
        Ok(Self { observations, init })
    }

    pub fn observations(&self) -> &[f64] {
        &self.observations
    }

    pub fn initial(&self) -> InitialDistribution {
        self.init
    }

    /// Simulate `(x_{0:T}, y_{0:T})` at `theta`.
    pub fn simulate<R: Rng + ?Sized>(
        theta: &Theta,
        horizon: usize,
        init: InitialDistribution,
        rng: &mut R,
    ) -> Result<(Trajectory, Vec<f64>)> {
        if !theta.in_support() {
            return Err(Error::OutsideSupport);
        }
        let mut xs = Vec::with_capacity(horizon + 1);
        let mut ys = Vec::with_capacity(horizon + 1);
        let sd_y = theta.sigma2_y.sqrt();
        let mut x = init.variance(theta).sqrt() * rng.sample::<f64, _>(StandardNormal);
        for t in 0..=horizon {
            if t > 0 {
                x = theta.rho * x + theta.sigma2_x.sqrt() * rng.sample::<f64, _>(StandardNormal);
            }
            xs.push(x);
            ys.push(x + sd_y * rng.sample::<f64, _>(StandardNormal));
        }
        Ok((Trajectory::new(xs)?, ys))
    }

    #[inline]
    fn transition_moments(&self, prev: Option<f64>, theta: &Theta) -> (f64, f64) {
        match prev {
            None => (0.0, self.init.variance(theta)),
            Some(p) => (theta.rho * p, theta.sigma2_x),
        }
    }
}

impl StateSpaceModel for LinearGaussianSsm {
    type Param = Theta;

    fn horizon(&self) -> usize {
        self.observations.len() - 1
    }

    fn log_prior(&self, theta: &Theta) -> f64 {
        if !theta.in_support() {
            return f64::NEG_INFINITY;
        }
        -std::f64::consts::LN_2
            + inverse_gamma_logpdf(theta.sigma2_x, PRIOR_IG_SHAPE, PRIOR_IG_SCALE)
            + inverse_gamma_logpdf(theta.sigma2_y, PRIOR_IG_SHAPE, PRIOR_IG_SCALE)
    }

    #[inline]
    fn log_transition(&self, _t: usize, prev: Option<f64>, x: f64, theta: &Theta) -> f64 {
        let (mean, var) = self.transition_moments(prev, theta);
        normal_logpdf(x, mean, var)
    }

    #[inline]
    fn sample_transition<R: Rng + ?Sized>(&self, _t: usize, prev: Option<f64>, theta: &Theta, rng: &mut R) -> f64 {
        let (mean, var) = self.transition_moments(prev, theta);
        let z: f64 = StandardNormal.sample(rng);
        mean + var.sqrt() * z
    }

    #[inline]
    fn log_potential(&self, t: usize, _prev: Option<f64>, x: f64, theta: &Theta) -> f64 {
        normal_logpdf(self.observations[t], x, theta.sigma2_y)
    }

    /// Integrates `ρ` exactly: `x_t | x_{t−1} ~ N(m_ρ x_{t−1}, σ²_X + v_ρ x²_{t−1})`,
    /// with `σ²_X` taken from `fallback`. The initial law depends on `ρ`
    /// non-linearly, so `t = 0` has no closed form.
    fn integrated_transition(
        &self,
        _t: usize,
        prev: Option<f64>,
        mean: &[f64],
        var: &[f64],
        fallback: &Theta,
    ) -> Option<(f64, f64)> {
        let prev = prev?;
        if fallback.sigma2_x <= 0.0 {
            return None;
        }
        Some((mean[0] * prev, fallback.sigma2_x + var[0] * prev * prev))
    }
}

/// Per-parameter tables of a [`DiscreteToySsm`].
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteParams {
    /// Law of `x_0`, length `K`.
    pub initial: Vec<f64>,
    /// Row-stochastic `K × K` transition matrix.
    pub transition: Vec<Vec<f64>>,
    /// Nonnegative emission weights indexed `[t][x_t]`.
    pub emission: Vec<Vec<f64>>,
    /// Optional nonnegative pair weights `[x_{t−1}][x_t]` applied for `t ≥ 1`,
    /// making the potential bivariate.
    pub coupling: Option<Vec<Vec<f64>>>,
}

/// Finite-state model over the alphabet `{0, …, K−1}` with a finite grid of
/// parameters. States are carried as `f64` values `0.0, 1.0, …`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteToySsm {
    states: usize,
    horizon: usize,
    log_prior: Vec<f64>,
    params: Vec<DiscreteParams>,
}

const ROW_TOL: f64 = 1e-12;

impl DiscreteToySsm {
    pub fn new(states: usize, horizon: usize, prior: Vec<f64>, params: Vec<DiscreteParams>) -> Result<Self> {
        if states == 0 || params.is_empty() {
            return Err(Error::Config("discrete model needs at least one state and one parameter".into()));
        }
        if prior.len() != params.len() {
            return Err(Error::Config("prior length differs from the parameter grid".into()));
        }
        check_row(&prior, "prior")?;
        for p in &params {
            if p.initial.len() != states || p.transition.len() != states {
                return Err(Error::Config("table dimension differs from the alphabet size".into()));
            }
            check_row(&p.initial, "initial law")?;
            for row in &p.transition {
                if row.len() != states {
                    return Err(Error::Config("transition row has the wrong length".into()));
                }
                check_row(row, "transition row")?;
            }
            if p.emission.len() != horizon + 1 || p.emission.iter().any(|e| e.len() != states) {
                return Err(Error::Config("emission table must be (T + 1) × K".into()));
            }
            let bad = |v: &f64| !v.is_finite() || *v < 0.0;
            if p.emission.iter().flatten().any(bad) {
                return Err(Error::Config("emission weights must be finite and nonnegative".into()));
            }
            if let Some(c) = &p.coupling {
                if c.len() != states || c.iter().any(|r| r.len() != states) || c.iter().flatten().any(bad) {
                    return Err(Error::Config("coupling must be a nonnegative K × K table".into()));
                }
            }
        }
        Ok(Self {
            states,
            horizon,
            log_prior: prior.iter().map(|p| p.ln()).collect(),
            params,
        })
    }

    /// Single parameter, uniform initial law and transitions, potentials ≡ 1.
    pub fn uniform(states: usize, horizon: usize) -> Result<Self> {
        let u = vec![1.0 / states as f64; states];
        let params = DiscreteParams {
            initial: u.clone(),
            transition: vec![u; states],
            emission: vec![vec![1.0; states]; horizon + 1],
            coupling: None,
        };
        Self::new(states, horizon, vec![1.0], vec![params])
    }

    /// Random tables with strictly positive entries, for oracle tests.
    pub fn random<R: Rng + ?Sized>(
        states: usize,
        horizon: usize,
        grid: usize,
        bivariate: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let row = |rng: &mut R| {
            let raw: Vec<f64> = (0..states).map(|_| rng.random_range(0.1..1.0)).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / total).collect::<Vec<_>>()
        };
        let mut params = Vec::with_capacity(grid);
        for _ in 0..grid {
            let initial = row(rng);
            let transition = (0..states).map(|_| row(rng)).collect();
            let emission = (0..=horizon)
                .map(|_| (0..states).map(|_| rng.random_range(0.05..1.0)).collect())
                .collect();
            let coupling = bivariate.then(|| {
                (0..states)
                    .map(|_| (0..states).map(|_| rng.random_range(0.2..1.0)).collect())
                    .collect()
            });
            params.push(DiscreteParams { initial, transition, emission, coupling });
        }
        let raw: Vec<f64> = (0..grid).map(|_| rng.random_range(0.2..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let prior = raw.into_iter().map(|v| v / total).collect();
        Self::new(states, horizon, prior, params)
    }

    pub fn num_states(&self) -> usize {
        self.states
    }

    pub fn grid_size(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self, theta: usize) -> &DiscreteParams {
        &self.params[theta]
    }

    fn state_index(&self, x: f64) -> Option<usize> {
        let k = x as usize;
        (x >= 0.0 && x == k as f64 && k < self.states).then_some(k)
    }

    fn transition_row(&self, prev: Option<f64>, theta: usize) -> Option<&[f64]> {
        let p = self.params.get(theta)?;
        match prev {
            None => Some(&p.initial),
            Some(prev) => self.state_index(prev).map(|i| p.transition[i].as_slice()),
        }
    }
}

fn check_row(row: &[f64], what: &str) -> Result<()> {
    if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::Config(format!("{what} has a negative or non-finite entry")));
    }
    let total: f64 = row.iter().sum();
    if (total - 1.0).abs() > ROW_TOL {
        return Err(Error::Config(format!("{what} sums to {total}, not 1")));
    }
    Ok(())
}

impl StateSpaceModel for DiscreteToySsm {
    type Param = usize;

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn log_prior(&self, theta: &usize) -> f64 {
        self.log_prior.get(*theta).copied().unwrap_or(f64::NEG_INFINITY)
    }

    fn log_transition(&self, _t: usize, prev: Option<f64>, x: f64, theta: &usize) -> f64 {
        match (self.transition_row(prev, *theta), self.state_index(x)) {
            (Some(row), Some(k)) => row[k].ln(),
            _ => f64::NEG_INFINITY,
        }
    }

    fn sample_transition<R: Rng + ?Sized>(&self, _t: usize, prev: Option<f64>, theta: &usize, rng: &mut R) -> f64 {
        let row = self
            .transition_row(prev, *theta)
            .expect("sample_transition called with a state or parameter outside the model");
        let u: f64 = rng.random();
        let mut cum = 0.0;
        for (k, p) in row.iter().enumerate() {
            cum += p;
            if u < cum {
                return k as f64;
            }
        }
        row.iter().rposition(|p| *p > 0.0).unwrap_or(0) as f64
    }

    fn log_potential(&self, t: usize, prev: Option<f64>, x: f64, theta: &usize) -> f64 {
        let (Some(p), Some(k)) = (self.params.get(*theta), self.state_index(x)) else {
            return f64::NEG_INFINITY;
        };
        let mut lg = p.emission[t][k].ln();
        if let (Some(c), Some(prev)) = (&p.coupling, prev) {
            match self.state_index(prev) {
                Some(i) => lg += c[i][k].ln(),
                None => return f64::NEG_INFINITY,
            }
        }
        lg
    }
}

impl ExactMarginal for DiscreteToySsm {
    /// Forward algorithm in log-space.
    fn log_marginal(&self, theta: &usize) -> f64 {
        if *theta >= self.params.len() {
            return f64::NEG_INFINITY;
        }
        let mut alpha: Vec<f64> = (0..self.states)
            .map(|k| self.log_increment(0, None, k as f64, theta))
            .collect();
        for t in 1..=self.horizon {
            alpha = (0..self.states)
                .map(|j| {
                    let mut acc = LogSumExp::new();
                    for (i, a) in alpha.iter().enumerate() {
                        acc.push(a + self.log_increment(t, Some(i as f64), j as f64, theta));
                    }
                    acc.value()
                })
                .collect();
        }
        let mut acc = LogSumExp::new();
        alpha.iter().for_each(|a| acc.push(*a));
        acc.value()
    }
}
