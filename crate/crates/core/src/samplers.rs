//! Markov chains over `(θ, x_{0:T})`.
//!
//! Every sampler implements [`Sampler`]; [`run_chain`] drives one with a
//! [`ChainRngs`] bundle and records each iteration.

use rand::Rng;

use crate::csmc::{csmc_kernel, CsmcConfig, FixedParamTarget, ParticleSystem};
use crate::error::{Error, Result};
use crate::marginal::{index_log_prior, index_posterior, MarginalTarget, MixtureVariant};
use crate::model::{log_gamma_path, ExactMarginal, StateSpaceModel, Trajectory};
use crate::proposal::{ParamProposal, ProposalPair};
use crate::rng::{sample_categorical, ChainRngs};
use crate::smc::bootstrap_filter;

#[derive(Debug, Clone, PartialEq)]
pub struct ChainState<P> {
    pub theta: P,
    pub trajectory: Option<Trajectory>,
    /// Sampler-specific cached log density of the current state: the evidence
    /// estimate for PMMH, the exact evidence for the ideal chains.
    pub log_evidence: Option<f64>,
    /// Slot of `theta` among the candidates of the last marginalized update.
    pub index: usize,
}

impl<P> ChainState<P> {
    pub fn new(theta: P) -> Self {
        Self { theta, trajectory: None, log_evidence: None, index: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord<P> {
    pub iter: usize,
    pub theta: P,
    pub accepted: bool,
    pub index: Option<usize>,
    pub log_z: Option<f64>,
}

pub trait Sampler {
    type Param: Clone;

    /// Build the starting state at `theta`.
    fn init(&mut self, theta: Self::Param, rngs: &mut ChainRngs) -> Result<ChainState<Self::Param>>;

    /// One transition. Returns whether `θ` moved (or, for marginalized
    /// updates, whether a different candidate slot was selected).
    fn step(&mut self, state: &mut ChainState<Self::Param>, rngs: &mut ChainRngs) -> Result<bool>;

    /// Whether records should report the candidate slot.
    fn reports_index(&self) -> bool {
        false
    }
}

/// Run `iterations` transitions from `theta`. Record 0 is the start.
pub fn run_chain<S: Sampler>(
    sampler: &mut S,
    theta: S::Param,
    iterations: usize,
    rngs: &mut ChainRngs,
) -> Result<Vec<IterationRecord<S::Param>>> {
    let mut state = sampler.init(theta, rngs)?;
    let with_index = sampler.reports_index();
    let record = |iter, state: &ChainState<S::Param>, accepted| IterationRecord {
        iter,
        theta: state.theta.clone(),
        accepted,
        index: with_index.then_some(state.index),
        log_z: state.log_evidence,
    };
    let mut out = Vec::with_capacity(iterations + 1);
    out.push(record(0, &state, false));
    for iter in 1..=iterations {
        let accepted = sampler.step(&mut state, rngs)?;
        out.push(record(iter, &state, accepted));
    }
    Ok(out)
}

fn check_support<M: StateSpaceModel>(model: &M, theta: &M::Param) -> Result<f64> {
    let lp = model.log_prior(theta);
    if lp == f64::NEG_INFINITY {
        Err(Error::OutsideSupport)
    } else {
        Ok(lp)
    }
}

/// Metropolis–Hastings log ratio for moving `from → to` given log target
/// values.
fn mh_log_ratio<P, Q: ParamProposal<P>>(q: &Q, from: &P, to: &P, log_target_from: f64, log_target_to: f64) -> f64 {
    if log_target_to == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    log_target_to - log_target_from + q.log_density(from, to) - q.log_density(to, from)
}

/// Source of `log Ẑ(θ)` for PMMH.
pub trait LikelihoodEstimator<M: StateSpaceModel> {
    /// `-inf` when the estimate is zero.
    fn log_likelihood<R: Rng + ?Sized>(&self, model: &M, theta: &M::Param, rng: &mut R) -> Result<f64>;
}

/// Bootstrap-filter estimate with a fixed particle count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BootstrapEstimator {
    pub particles: usize,
}

impl<M: StateSpaceModel> LikelihoodEstimator<M> for BootstrapEstimator {
    fn log_likelihood<R: Rng + ?Sized>(&self, model: &M, theta: &M::Param, rng: &mut R) -> Result<f64> {
        match bootstrap_filter(model, theta, self.particles, false, rng) {
            Ok(out) => Ok(out.log_z),
            Err(Error::CollapseAt { .. }) => Ok(f64::NEG_INFINITY),
            Err(e) => Err(e),
        }
    }
}

/// The exact evidence, turning PMMH into the ideal marginal chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ExactEvidence;

impl<M: ExactMarginal> LikelihoodEstimator<M> for ExactEvidence {
    fn log_likelihood<R: Rng + ?Sized>(&self, model: &M, theta: &M::Param, _rng: &mut R) -> Result<f64> {
        Ok(model.log_marginal(theta))
    }
}

/// Particle marginal Metropolis–Hastings.
///
/// Proposals outside the prior support are rejected without running the
/// estimator. Each step draws the proposal, then (if needed) the estimate,
/// then one acceptance uniform.
#[derive(Debug, Clone)]
pub struct Pmmh<'a, M, Q, E> {
    pub model: &'a M,
    pub proposal: Q,
    pub estimator: E,
}

impl<'a, M, Q, E> Pmmh<'a, M, Q, E> {
    pub fn new(model: &'a M, proposal: Q, estimator: E) -> Self {
        Self { model, proposal, estimator }
    }
}

impl<M, Q, E> Sampler for Pmmh<'_, M, Q, E>
where
    M: StateSpaceModel,
    Q: ParamProposal<M::Param>,
    E: LikelihoodEstimator<M>,
{
    type Param = M::Param;

    fn init(&mut self, theta: M::Param, rngs: &mut ChainRngs) -> Result<ChainState<M::Param>> {
        check_support(self.model, &theta)?;
        let log_z = self.estimator.log_likelihood(self.model, &theta, &mut rngs.particles)?;
        if log_z == f64::NEG_INFINITY {
            return Err(Error::Config("the evidence estimate at the starting point is zero".into()));
        }
        let mut state = ChainState::new(theta);
        state.log_evidence = Some(log_z);
        Ok(state)
    }

    fn step(&mut self, state: &mut ChainState<M::Param>, rngs: &mut ChainRngs) -> Result<bool> {
        let proposed = self.proposal.sample(&state.theta, &mut rngs.proposal);
        let lp_new = self.model.log_prior(&proposed);
        let log_z_new = if lp_new == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.estimator.log_likelihood(self.model, &proposed, &mut rngs.particles)?
        };
        let log_z = state.log_evidence.expect("PMMH state carries its evidence estimate");
        let current = log_z + self.model.log_prior(&state.theta);
        let log_alpha = mh_log_ratio(&self.proposal, &state.theta, &proposed, current, lp_new + log_z_new);
        let u: f64 = rngs.acceptance.random();
        if u.ln() < log_alpha {
            state.theta = proposed;
            state.log_evidence = Some(log_z_new);
            Ok(true)
        } else {
            Ok(false)
        }
    }
}

/// Acceptance rule of an exact-likelihood chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AcceptanceRule {
    /// `min(1, r)`.
    Metropolis,
    /// `r / (1 + r)`.
    Barker,
}

impl AcceptanceRule {
    pub fn probability(self, log_r: f64) -> f64 {
        match self {
            Self::Metropolis => log_r.exp().min(1.0),
            Self::Barker => {
                if log_r == f64::NEG_INFINITY {
                    0.0
                } else if log_r > 0.0 {
                    1.0 / (1.0 + (-log_r).exp())
                } else {
                    let r = log_r.exp();
                    r / (1.0 + r)
                }
            }
        }
    }
}

/// Metropolis or Barker chain on `p(θ | y)` using the exact evidence.
#[derive(Debug, Clone)]
pub struct IdealChain<'a, M, Q> {
    pub model: &'a M,
    pub proposal: Q,
    pub rule: AcceptanceRule,
}

impl<'a, M, Q> IdealChain<'a, M, Q>
where
    M: ExactMarginal,
    Q: ParamProposal<M::Param>,
{
    pub fn metropolis(model: &'a M, proposal: Q) -> Self {
        Self { model, proposal, rule: AcceptanceRule::Metropolis }
    }

    pub fn barker(model: &'a M, proposal: Q) -> Self {
        Self { model, proposal, rule: AcceptanceRule::Barker }
    }

    fn log_posterior(&self, theta: &M::Param) -> f64 {
        let lp = self.model.log_prior(theta);
        if lp == f64::NEG_INFINITY {
            return lp;
        }
        lp + self.model.log_marginal(theta)
    }

    /// Probability of accepting a proposed move `from → to`.
    pub fn acceptance_probability(&self, from: &M::Param, to: &M::Param) -> f64 {
        let log_r = mh_log_ratio(&self.proposal, from, to, self.log_posterior(from), self.log_posterior(to));
        self.rule.probability(log_r)
    }
}

impl<M, Q> Sampler for IdealChain<'_, M, Q>
where
    M: ExactMarginal,
    Q: ParamProposal<M::Param>,
{
    type Param = M::Param;

    fn init(&mut self, theta: M::Param, _rngs: &mut ChainRngs) -> Result<ChainState<M::Param>> {
        check_support(self.model, &theta)?;
        let mut state = ChainState::new(theta);
        state.log_evidence = Some(self.model.log_marginal(&state.theta));
        Ok(state)
    }

    fn step(&mut self, state: &mut ChainState<M::Param>, rngs: &mut ChainRngs) -> Result<bool> {
        let proposed = self.proposal.sample(&state.theta, &mut rngs.proposal);
        let lp_new = self.model.log_prior(&proposed);
        let log_z_new = if lp_new == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.model.log_marginal(&proposed)
        };
        let current = self.model.log_prior(&state.theta) + state.log_evidence.expect("cached evidence");
        let log_r = mh_log_ratio(&self.proposal, &state.theta, &proposed, current, lp_new + log_z_new);
        let u: f64 = rngs.acceptance.random();
        if u < self.rule.probability(log_r) {
            state.theta = proposed;
            state.log_evidence = Some(log_z_new);
            Ok(true)
        } else {
            Ok(false)
        }
    }
}

/// Draw a starting trajectory from a bootstrap filter at `theta`.
fn initial_trajectory<M: StateSpaceModel>(
    model: &M,
    theta: &M::Param,
    particles: usize,
    rngs: &mut ChainRngs,
) -> Result<Trajectory> {
    let out = bootstrap_filter(model, theta, particles, true, &mut rngs.particles)?;
    Ok(out.sample_trajectory(&mut rngs.index).expect("history was kept"))
}

/// Metropolis–Hastings update of `θ` targeting `p(θ) γ_T(path | θ)` at a
/// fixed path. Returns whether the proposal was accepted.
pub fn parameter_update<M, Q>(
    model: &M,
    proposal: &Q,
    theta: &mut M::Param,
    path: &Trajectory,
    rngs: &mut ChainRngs,
) -> Result<bool>
where
    M: StateSpaceModel,
    Q: ParamProposal<M::Param>,
{
    if path.len() != model.horizon() + 1 {
        return Err(Error::LengthMismatch { len: path.len(), expected: model.horizon() + 1 });
    }
    let proposed = proposal.sample(theta, &mut rngs.proposal);
    let lp_new = model.log_prior(&proposed);
    let target_new = if lp_new == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        lp_new + log_gamma_path(model, path.states(), &proposed)
    };
    let current = model.log_prior(theta) + log_gamma_path(model, path.states(), theta);
    let log_alpha = mh_log_ratio(proposal, theta, &proposed, current, target_new);
    let u: f64 = rngs.acceptance.random();
    let accepted = u.ln() < log_alpha;
    if accepted {
        *theta = proposed;
    }
    Ok(accepted)
}

/// Particle Gibbs: a conditional SMC update of `x` at fixed `θ`, then a
/// Metropolis–Hastings update of `θ` at fixed `x`.
#[derive(Debug, Clone)]
pub struct ParticleGibbs<'a, M, Q> {
    pub model: &'a M,
    pub proposal: Q,
    pub csmc: CsmcConfig,
    system: ParticleSystem,
}

impl<'a, M, Q> ParticleGibbs<'a, M, Q> {
    pub fn new(model: &'a M, proposal: Q, csmc: CsmcConfig) -> Self {
        Self { model, proposal, csmc, system: ParticleSystem::new() }
    }
}

impl<M, Q> Sampler for ParticleGibbs<'_, M, Q>
where
    M: StateSpaceModel,
    Q: ParamProposal<M::Param>,
{
    type Param = M::Param;

    fn init(&mut self, theta: M::Param, rngs: &mut ChainRngs) -> Result<ChainState<M::Param>> {
        check_support(self.model, &theta)?;
        let mut state = ChainState::new(theta);
        state.trajectory = Some(initial_trajectory(self.model, &state.theta, self.csmc.particles, rngs)?);
        Ok(state)
    }

    fn step(&mut self, state: &mut ChainState<M::Param>, rngs: &mut ChainRngs) -> Result<bool> {
        let reference = state.trajectory.take().expect("particle Gibbs state carries a trajectory");
        let target = FixedParamTarget::new(self.model, &state.theta);
        let out = csmc_kernel(&target, &reference, &self.csmc, &mut self.system, &mut rngs.particles, &mut rngs.index)?;
        let path = out.trajectory;

        let accepted = parameter_update(self.model, &self.proposal, &mut state.theta, &path, rngs)?;
        state.trajectory = Some(path);
        Ok(accepted)
    }
}

/// Marginalized particle Gibbs with `M` candidate parameters.
///
/// Each step draws `u ~ q(u | θ)`, fills the other `M − 1` slots with draws
/// from `q(· | u)`, runs conditional SMC on the marginal target, and then
/// draws the slot `l'` from the index posterior along the new path.
#[derive(Debug, Clone)]
pub struct MarginalParticleGibbs<'a, M, Q> {
    pub model: &'a M,
    pub pair: Q,
    pub candidates: usize,
    pub csmc: CsmcConfig,
    pub variant: MixtureVariant,
    /// Steps where the particle system or index posterior collapsed and the
    /// current state was kept.
    pub collapses: usize,
    system: ParticleSystem,
}

impl<'a, M, Q> MarginalParticleGibbs<'a, M, Q>
where
    M: StateSpaceModel,
    Q: ProposalPair<M::Param>,
{
    pub fn new(model: &'a M, pair: Q, candidates: usize, csmc: CsmcConfig, variant: MixtureVariant) -> Result<Self> {
        if candidates < 1 {
            return Err(Error::Config("at least one parameter candidate is required".into()));
        }
        Ok(Self { model, pair, candidates, csmc, variant, collapses: 0, system: ParticleSystem::new() })
    }
}

impl<M, Q> Sampler for MarginalParticleGibbs<'_, M, Q>
where
    M: StateSpaceModel,
    Q: ProposalPair<M::Param>,
{
    type Param = M::Param;

    fn init(&mut self, theta: M::Param, rngs: &mut ChainRngs) -> Result<ChainState<M::Param>> {
        check_support(self.model, &theta)?;
        let mut state = ChainState::new(theta);
        state.trajectory = Some(initial_trajectory(self.model, &state.theta, self.csmc.particles, rngs)?);
        Ok(state)
    }

    fn step(&mut self, state: &mut ChainState<M::Param>, rngs: &mut ChainRngs) -> Result<bool> {
        let reference = state.trajectory.take().expect("marginalized particle Gibbs state carries a trajectory");
        let l = state.index.min(self.candidates - 1);
        let u = self.pair.sample_aux(&state.theta, &mut rngs.proposal);
        let params: Vec<M::Param> = (0..self.candidates)
            .map(|j| if j == l { state.theta.clone() } else { self.pair.sample_param(&u, &mut rngs.proposal) })
            .collect();
        let prior = index_log_prior(self.model, &self.pair, &u, &params);

        let target = match self.variant {
            MixtureVariant::ClosedFormPriorMixture => {
                let (mean, var) = self.pair.gaussian_param_law(&u).ok_or_else(|| {
                    Error::Config("the closed-form variant needs a Gaussian parameter proposal".into())
                })?;
                MarginalTarget::with_closed_form(self.model, &params, prior.clone(), mean, var)?
            }
            v => MarginalTarget::new(self.model, &params, prior.clone(), v)?,
        };
        let updated = csmc_kernel(&target, &reference, &self.csmc, &mut self.system, &mut rngs.particles, &mut rngs.index)
            .and_then(|out| Ok((index_posterior(self.model, &params, &prior, &out.trajectory)?, out)));
        let (posterior, out) = match updated {
            Ok(v) => v,
            Err(Error::CollapseAt { .. } | Error::BackwardCollapse { .. } | Error::WeightCollapse) => {
                self.collapses += 1;
                state.trajectory = Some(reference);
                return Ok(false);
            }
            Err(e) => return Err(e),
        };
        let next = sample_categorical(&posterior, &mut rngs.index);

        state.theta = params[next].clone();
        state.index = next;
        state.trajectory = Some(out.trajectory);
        Ok(next != l)
    }

    fn reports_index(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DiscreteToySsm, LinearGaussianSsm, Theta};
    use crate::proposal::{GaussianPair, GaussianRandomWalk};

    fn data() -> LinearGaussianSsm {
        let theta = Theta::new(0.8, 0.5, 0.3);
        let (_, ys) = LinearGaussianSsm::simulate(&theta, 30, Default::default(), &mut ChainRngs::new(1, 9).particles)
            .unwrap();
        LinearGaussianSsm::new(ys).unwrap()
    }

    #[test]
    fn barker_never_exceeds_metropolis() {
        for log_r in [-50.0, -3.0, -0.5, 0.0, 0.3, 2.0, 40.0, f64::NEG_INFINITY] {
            let b = AcceptanceRule::Barker.probability(log_r);
            let m = AcceptanceRule::Metropolis.probability(log_r);
            assert!(b <= m + 1e-15, "{log_r}");
            assert!((0.0..=1.0).contains(&b));
        }
        assert!((AcceptanceRule::Barker.probability(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn exact_pmmh_matches_ideal_metropolis_decisions() {
        let m = data();
        let q = GaussianRandomWalk::isotropic(0.01).unwrap();
        let start = Theta::new(0.7, 0.6, 0.4);
        let mut pmmh = Pmmh::new(&m, q, ExactEvidence);
        let mut ideal = IdealChain::metropolis(&m, q);
        let a = run_chain(&mut pmmh, start, 300, &mut ChainRngs::new(5, 0)).unwrap();
        let b = run_chain(&mut ideal, start, 300, &mut ChainRngs::new(5, 0)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.accepted, y.accepted);
            assert_eq!(x.theta, y.theta);
        }
        assert!(a.iter().any(|r| r.accepted));
    }

    #[test]
    fn outside_support_start_is_rejected() {
        let m = data();
        let q = GaussianRandomWalk::isotropic(0.01).unwrap();
        let mut pmmh = Pmmh::new(&m, q, BootstrapEstimator { particles: 8 });
        let err = run_chain(&mut pmmh, Theta::new(0.5, -1.0, 1.0), 1, &mut ChainRngs::new(0, 0));
        assert_eq!(err.unwrap_err(), Error::OutsideSupport);
    }

    #[test]
    fn chains_are_reproducible() {
        let m = data();
        let pair = GaussianPair::symmetric(0.01, [1.0; 3]).unwrap();
        let cfg = CsmcConfig::new(8).unwrap();
        let run = || {
            let mut s = MarginalParticleGibbs::new(&m, pair, 2, cfg, MixtureVariant::PosteriorMixture).unwrap();
            run_chain(&mut s, Theta::new(0.7, 0.6, 0.4), 40, &mut ChainRngs::new(3, 1)).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn single_candidate_never_moves() {
        let m = data();
        let pair = GaussianPair::symmetric(0.01, [1.0; 3]).unwrap();
        let cfg = CsmcConfig::new(4).unwrap();
        let mut s = MarginalParticleGibbs::new(&m, pair, 1, cfg, MixtureVariant::PosteriorMixture).unwrap();
        let start = Theta::new(0.7, 0.6, 0.4);
        let records = run_chain(&mut s, start, 20, &mut ChainRngs::new(3, 1)).unwrap();
        assert!(records.iter().all(|r| r.theta == start && !r.accepted));
    }

    #[test]
    fn closed_form_variant_needs_gaussian_law() {
        let m = DiscreteToySsm::random(2, 2, 2, false, &mut ChainRngs::new(0, 0).particles).unwrap();
        let pair = crate::proposal::GridPair::new(vec![vec![1.0], vec![1.0]], vec![vec![0.5, 0.5]]).unwrap();
        let cfg = CsmcConfig::new(4).unwrap();
        let mut s = MarginalParticleGibbs::new(&m, pair, 2, cfg, MixtureVariant::ClosedFormPriorMixture).unwrap();
        let mut rngs = ChainRngs::new(0, 0);
        let mut state = s.init(0, &mut rngs).unwrap();
        assert!(matches!(s.step(&mut state, &mut rngs), Err(Error::Config(_))));
    }
}
