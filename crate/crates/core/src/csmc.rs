//! Conditional SMC with a pinned reference path, multinomial resampling and
//! optional backward sampling.
//!
//! The kernel works on any [`SequentialTarget`]: a sequence of unnormalized
//! path densities `γ_t` whose incremental weights may depend on a per-particle
//! summary of the lineage. A fixed-parameter Feynman–Kac model is the case
//! with an empty summary ([`FixedParamTarget`]); the parameter-marginalized
//! target in [`crate::marginal`] carries one running log-weight per candidate
//! parameter.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{StateSpaceModel, Trajectory};
use crate::numeric::normalize_into;
use crate::rng::{categorical_unchecked, multinomial_into};

/// A sequence of path targets `γ_0, …, γ_T` together with the proposals used
/// to extend particles.
///
/// Each particle carries an `aux_len` summary of its lineage; `extend` maps
/// the parent summary to the child summary and returns the log incremental
/// weight `log γ_t(x_{0:t}) − log γ_{t−1}(x_{0:t−1}) − log q_t(x_t | ·)`.
pub trait SequentialTarget {
    fn horizon(&self) -> usize;

    fn aux_len(&self) -> usize;

    /// Summary that particles at `t = 0` extend from.
    fn init_aux(&self, out: &mut [f64]);

    fn propose<R: Rng + ?Sized>(&self, t: usize, prev: Option<f64>, aux: &[f64], rng: &mut R) -> f64;

    fn extend(&self, t: usize, prev: Option<f64>, aux: &[f64], x: f64, aux_out: &mut [f64]) -> f64;

    /// Length of the summary of a fixed future path `x_{t+1:T}`.
    fn tail_len(&self) -> usize;

    /// Summary of the empty future (`t = T`).
    fn init_tail(&self, out: &mut [f64]);

    /// Prepend step `s` (from `prev = x_{s−1}` to `x = x_s`) to a future
    /// summary that starts at `s + 1`.
    fn extend_tail(&self, s: usize, prev: f64, x: f64, tail: &mut [f64]);

    /// `log γ_T(x_{0:t}, x_{t+1:T}) − log γ_t(x_{0:t})` up to a term that does
    /// not depend on the prefix. `x_t`/`aux` describe the prefix, `next` is
    /// `x_{t+1}` and `tail` summarizes `x_{t+2:T}`.
    fn log_join(&self, t: usize, x_t: f64, aux: &[f64], next: f64, tail: &[f64]) -> f64;
}

/// Bootstrap proposals for `π_T(x_{0:T} | θ)` at fixed `θ`.
#[derive(Debug, Clone, Copy)]
pub struct FixedParamTarget<'a, M: StateSpaceModel> {
    pub model: &'a M,
    pub theta: &'a M::Param,
}

impl<'a, M: StateSpaceModel> FixedParamTarget<'a, M> {
    pub fn new(model: &'a M, theta: &'a M::Param) -> Self {
        Self { model, theta }
    }
}

impl<M: StateSpaceModel> SequentialTarget for FixedParamTarget<'_, M> {
    fn horizon(&self) -> usize {
        self.model.horizon()
    }

    fn aux_len(&self) -> usize {
        0
    }

    fn init_aux(&self, _out: &mut [f64]) {}

    #[inline]
    fn propose<R: Rng + ?Sized>(&self, t: usize, prev: Option<f64>, _aux: &[f64], rng: &mut R) -> f64 {
        self.model.sample_transition(t, prev, self.theta, rng)
    }

    #[inline]
    fn extend(&self, t: usize, prev: Option<f64>, _aux: &[f64], x: f64, _aux_out: &mut [f64]) -> f64 {
        self.model.log_potential(t, prev, x, self.theta)
    }

    fn tail_len(&self) -> usize {
        0
    }

    fn init_tail(&self, _out: &mut [f64]) {}

    fn extend_tail(&self, _s: usize, _prev: f64, _x: f64, _tail: &mut [f64]) {}

    #[inline]
    fn log_join(&self, t: usize, x_t: f64, _aux: &[f64], next: f64, _tail: &[f64]) -> f64 {
        self.model.log_increment(t + 1, Some(x_t), next, self.theta)
    }
}

/// How the output particle is picked among the terminal particles when
/// backward sampling is off (or as the starting index of backward sampling).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TerminalSelection {
    /// `k ~ Cat(W_T)`.
    #[default]
    StandardCategorical,
    /// Propose `k' ≠ ref ∝ W^{k'}` and accept with `min(1, W^{ref} / W^{k'})`.
    /// This rule does not leave the path posterior invariant; it is kept so
    /// the bias can be measured.
    RatioForcedMove,
    /// Propose `k' ≠ ref ∝ W^{k'}` and accept with
    /// `min(1, (1 − W^{ref}) / (1 − W^{k'}))`, the Metropolis–Hastings ratio
    /// for that proposal.
    MetropolisedForcedMove,
}

impl TerminalSelection {
    /// Whether the kernel built with this rule keeps the path posterior invariant.
    pub fn preserves_target(self) -> bool {
        !matches!(self, Self::RatioForcedMove)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsmcConfig {
    pub particles: usize,
    pub backward_sampling: bool,
    pub terminal_selection: TerminalSelection,
}

impl CsmcConfig {
    pub fn new(particles: usize) -> Result<Self> {
        if particles < 2 {
            return Err(Error::Config(format!("conditional SMC needs at least 2 particles, got {particles}")));
        }
        Ok(Self { particles, backward_sampling: false, terminal_selection: TerminalSelection::default() })
    }

    pub fn with_backward_sampling(mut self, on: bool) -> Self {
        self.backward_sampling = on;
        self
    }

    pub fn with_terminal_selection(mut self, rule: TerminalSelection) -> Self {
        self.terminal_selection = rule;
        self
    }
}

/// Particle storage reused across kernel calls. Index 0 holds the reference.
#[derive(Debug, Clone, Default)]
pub struct ParticleSystem {
    n: usize,
    steps: usize,
    aux_len: usize,
    /// `states[t * n + i]`.
    states: Vec<f64>,
    /// `ancestors[(t − 1) * n + i]`: parent at `t − 1` of particle `i` at `t`.
    ancestors: Vec<usize>,
    log_weights: Vec<f64>,
    weights: Vec<f64>,
    aux: Vec<f64>,
    cumulative: Vec<f64>,
    draws: Vec<usize>,
    scratch: Vec<f64>,
    tail: Vec<f64>,
}

impl ParticleSystem {
    pub fn new() -> Self {
        Self::default()
    }

    fn reset(&mut self, n: usize, steps: usize, aux_len: usize) {
        self.n = n;
        self.steps = steps;
        self.aux_len = aux_len;
        self.states.resize(steps * n, 0.0);
        self.ancestors.resize(steps.saturating_sub(1) * n, 0);
        self.log_weights.resize(steps * n, 0.0);
        self.weights.resize(steps * n, 0.0);
        self.aux.resize(steps * n * aux_len, 0.0);
    }

    pub fn particles(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> usize {
        self.steps - 1
    }

    pub fn states(&self, t: usize) -> &[f64] {
        &self.states[t * self.n..(t + 1) * self.n]
    }

    /// Parents at `t − 1` of the particles at `t ≥ 1`.
    pub fn ancestors(&self, t: usize) -> &[usize] {
        &self.ancestors[(t - 1) * self.n..t * self.n]
    }

    pub fn log_weights(&self, t: usize) -> &[f64] {
        &self.log_weights[t * self.n..(t + 1) * self.n]
    }

    /// Normalized weights `W_t`.
    pub fn weights(&self, t: usize) -> &[f64] {
        &self.weights[t * self.n..(t + 1) * self.n]
    }

    pub fn aux(&self, t: usize, i: usize) -> &[f64] {
        let start = (t * self.n + i) * self.aux_len;
        &self.aux[start..start + self.aux_len]
    }

    /// Ancestral lineage of terminal particle `k`.
    pub fn trace(&self, k: usize) -> Vec<f64> {
        self.lineage(self.steps - 1, k)
    }

    /// `x^i_{0:t}`: the lineage of particle `i` at step `t`.
    pub fn lineage(&self, t: usize, i: usize) -> Vec<f64> {
        let mut xs = vec![0.0; t + 1];
        let mut i = i;
        for t in (0..=t).rev() {
            xs[t] = self.states[t * self.n + i];
            if t > 0 {
                i = self.ancestors[(t - 1) * self.n + i];
            }
        }
        xs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsmcOutcome {
    pub trajectory: Trajectory,
    /// Terminal particle the output was selected from (0 is the reference).
    pub terminal_index: usize,
    /// Every non-reference particle had zero weight at some step, so the
    /// reference was the only survivor there.
    pub degenerate: bool,
}

/// Run the forward pass of conditional SMC with `reference` pinned at slot 0.
pub fn csmc_forward<T, R>(
    target: &T,
    reference: &Trajectory,
    particles: usize,
    system: &mut ParticleSystem,
    rng: &mut R,
) -> Result<()>
where
    T: SequentialTarget,
    R: Rng + ?Sized,
{
    let horizon = target.horizon();
    if reference.len() != horizon + 1 {
        return Err(Error::LengthMismatch { len: reference.len(), expected: horizon + 1 });
    }
    if particles < 2 {
        return Err(Error::Config(format!("conditional SMC needs at least 2 particles, got {particles}")));
    }
    let n = particles;
    let l = target.aux_len();
    system.reset(n, horizon + 1, l);
    let xref = reference.states();

    let mut root = vec![0.0; l];
    target.init_aux(&mut root);
    for i in 0..n {
        let x = if i == 0 { xref[0] } else { target.propose(0, None, &root, rng) };
        system.states[i] = x;
        let out = &mut system.aux[i * l..(i + 1) * l];
        system.log_weights[i] = target.extend(0, None, &root, x, out);
    }
    normalize_into(&system.log_weights[..n], &mut system.scratch).map_err(|_| Error::CollapseAt { step: 0 })?;
    system.weights[..n].copy_from_slice(&system.scratch);

    for t in 1..=horizon {
        let prev_w = (t - 1) * n..t * n;
        multinomial_into(&system.weights[prev_w], n - 1, rng, &mut system.cumulative, &mut system.draws);
        let anc = &mut system.ancestors[(t - 1) * n..t * n];
        anc[0] = 0;
        anc[1..].copy_from_slice(&system.draws);
        let (done, rest) = system.aux.split_at_mut(t * n * l);
        let parent_aux = &done[(t - 1) * n * l..];
        let child_aux = &mut rest[..n * l];
        for i in 0..n {
            let a = system.ancestors[(t - 1) * n + i];
            let prev = Some(system.states[(t - 1) * n + a]);
            let pa = &parent_aux[a * l..(a + 1) * l];
            let x = if i == 0 { xref[t] } else { target.propose(t, prev, pa, rng) };
            system.states[t * n + i] = x;
            system.log_weights[t * n + i] = target.extend(t, prev, pa, x, &mut child_aux[i * l..(i + 1) * l]);
        }
        normalize_into(&system.log_weights[t * n..(t + 1) * n], &mut system.scratch)
            .map_err(|_| Error::CollapseAt { step: t })?;
        system.weights[t * n..(t + 1) * n].copy_from_slice(&system.scratch);
    }
    Ok(())
}

/// Pick the terminal index according to `rule`. Slot 0 is the reference.
pub fn select_terminal<R: Rng + ?Sized>(weights: &[f64], rule: TerminalSelection, rng: &mut R) -> usize {
    match rule {
        TerminalSelection::StandardCategorical => categorical_unchecked(weights, rng),
        TerminalSelection::RatioForcedMove | TerminalSelection::MetropolisedForcedMove => {
            let others: f64 = weights[1..].iter().sum();
            if others <= 0.0 {
                return 0;
            }
            let u: f64 = rng.random::<f64>() * others;
            let mut cum = 0.0;
            let mut k = weights.len() - 1;
            for (i, w) in weights.iter().enumerate().skip(1) {
                cum += w;
                if u < cum {
                    k = i;
                    break;
                }
            }
            let ratio = match rule {
                TerminalSelection::RatioForcedMove => weights[0] / weights[k],
                _ => (1.0 - weights[0]) / (1.0 - weights[k]),
            };
            let v: f64 = rng.random();
            if v < ratio {
                k
            } else {
                0
            }
        }
    }
}

/// Unnormalized backward log-weights `log W^i_t + log γ_T(x^i_{0:t}, next, …) − log γ_t(x^i_{0:t})`
/// at step `t < T`, where `next = x_{t+1}` and `tail` summarizes `x_{t+2:T}`.
pub fn backward_log_weights<T: SequentialTarget>(
    target: &T,
    system: &ParticleSystem,
    t: usize,
    next: f64,
    tail: &[f64],
    out: &mut Vec<f64>,
) -> Result<()> {
    if tail.len() != target.tail_len() {
        return Err(Error::CacheMismatch(format!("tail has {} entries, expected {}", tail.len(), target.tail_len())));
    }
    if t >= system.steps.saturating_sub(1) || target.aux_len() != system.aux_len {
        return Err(Error::CacheMismatch(format!("no stored step {t} compatible with this target")));
    }
    let n = system.n;
    out.clear();
    for i in 0..n {
        let w = system.weights[t * n + i];
        out.push(if w > 0.0 {
            w.ln() + target.log_join(t, system.states[t * n + i], system.aux(t, i), next, tail)
        } else {
            f64::NEG_INFINITY
        });
    }
    Ok(())
}

/// Backward-sample a path through the stored particles ending at terminal
/// particle `k`.
pub fn backward_sample<T, R>(target: &T, system: &mut ParticleSystem, k: usize, rng: &mut R) -> Result<Vec<f64>>
where
    T: SequentialTarget,
    R: Rng + ?Sized,
{
    let n = system.n;
    let horizon = system.steps - 1;
    let mut path = vec![0.0; horizon + 1];
    path[horizon] = system.states[horizon * n + k];
    let mut tail = std::mem::take(&mut system.tail);
    let mut logw = std::mem::take(&mut system.cumulative);
    tail.resize(target.tail_len(), 0.0);
    target.init_tail(&mut tail);
    let result = (|| {
        for t in (0..horizon).rev() {
            if t + 2 <= horizon {
                target.extend_tail(t + 2, path[t + 1], path[t + 2], &mut tail);
            }
            backward_log_weights(target, system, t, path[t + 1], &tail, &mut logw)?;
            normalize_into(&logw, &mut system.scratch).map_err(|_| Error::BackwardCollapse { step: t })?;
            let b = categorical_unchecked(&system.scratch, rng);
            path[t] = system.states[t * n + b];
        }
        Ok(())
    })();
    system.tail = tail;
    system.cumulative = logw;
    result.map(|_| path)
}

/// One conditional SMC update of `reference`.
///
/// `particle_rng` drives resampling and propagation; `index_rng` drives the
/// terminal and backward selections.
pub fn csmc_kernel<T, R1, R2>(
    target: &T,
    reference: &Trajectory,
    config: &CsmcConfig,
    system: &mut ParticleSystem,
    particle_rng: &mut R1,
    index_rng: &mut R2,
) -> Result<CsmcOutcome>
where
    T: SequentialTarget,
    R1: Rng + ?Sized,
    R2: Rng + ?Sized,
{
    csmc_forward(target, reference, config.particles, system, particle_rng)?;
    let horizon = system.horizon();
    let k = select_terminal(system.weights(horizon), config.terminal_selection, index_rng);
    let path = if config.backward_sampling {
        backward_sample(target, system, k, index_rng)?
    } else {
        system.trace(k)
    };
    let degenerate = (0..=horizon).any(|t| system.weights(t)[1..].iter().all(|w| *w == 0.0));
    Ok(CsmcOutcome { trajectory: Trajectory::new(path)?, terminal_index: k, degenerate })
}
