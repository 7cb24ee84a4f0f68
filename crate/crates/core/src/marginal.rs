//! The parameter-marginalized path target.
//!
//! Given `M` candidate parameters `θ^{1:M}` with index prior weights `w_l`,
//! the target at step `t` is
//!
//! ```text
//! γ_t(x_{0:t}) = Σ_l w_l Π_{s ≤ t} p_s(x_s | x_{s−1}, θ^l) g_s(x_{s−1}, x_s, θ^l).
//! ```
//!
//! Each particle carries `A_l = Σ_{s ≤ t} log p_s g_s(θ^l)` along its lineage,
//! so extending a particle costs `O(M)` regardless of `t`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::csmc::SequentialTarget;
use crate::error::{Error, Result};
use crate::model::{StateSpaceModel, Trajectory};
use crate::numeric::{normal_logpdf, normalize_log_weights, LogSumExp, Simplex};
use crate::proposal::ProposalPair;

/// Proposal used to extend particles of the marginal target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MixtureVariant {
    /// `Σ_l w̄_l p_t(· | x_{t−1}, θ^l)` with the normalized index prior.
    PriorMixture,
    /// `Σ_l w̄_l(x_{0:t−1}) p_t(· | x_{t−1}, θ^l)` with the running index
    /// posterior of the particle's lineage.
    #[default]
    PosteriorMixture,
    /// The transition with its parameters integrated against the Gaussian law
    /// of `q(θ | u)`, where the model supports it; the prior mixture elsewhere.
    ClosedFormPriorMixture,
}

/// `log w_l = log p(θ^l) + log q(u | θ^l) + Σ_{j ≠ l} log q(θ^j | u)`.
///
/// The common `1/M` factor is dropped. Candidates outside the prior support
/// get `-inf`.
pub fn index_log_prior<M, Q>(model: &M, pair: &Q, u: &Q::Aux, params: &[M::Param]) -> Vec<f64>
where
    M: StateSpaceModel,
    Q: ProposalPair<M::Param>,
{
    let q_param: Vec<f64> = params.iter().map(|p| pair.log_q_param(p, u)).collect();
    params
        .iter()
        .enumerate()
        .map(|(l, p)| {
            let lp = model.log_prior(p);
            if lp == f64::NEG_INFINITY {
                return lp;
            }
            let others: f64 = q_param.iter().enumerate().filter(|(j, _)| *j != l).map(|(_, q)| q).sum();
            lp + pair.log_q_aux(u, p) + others
        })
        .collect()
}

/// Running index posterior `log w_l + Σ_{s ≤ T} log p_s g_s(x; θ^l)`,
/// normalized.
pub fn index_posterior<M: StateSpaceModel>(
    model: &M,
    params: &[M::Param],
    log_index_prior: &[f64],
    path: &Trajectory,
) -> Result<Simplex> {
    if path.len() != model.horizon() + 1 {
        return Err(Error::LengthMismatch { len: path.len(), expected: model.horizon() + 1 });
    }
    let mut logw = log_index_prior.to_vec();
    for (l, lw) in logw.iter_mut().enumerate() {
        if *lw == f64::NEG_INFINITY {
            continue;
        }
        let mut prev = None;
        for (t, &x) in path.states().iter().enumerate() {
            *lw += model.log_increment(t, prev, x, &params[l]);
            prev = Some(x);
        }
    }
    normalize_log_weights(&logw)
}

/// Gaussian law of the parameters used by [`MixtureVariant::ClosedFormPriorMixture`].
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedFormLaw<P> {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    /// Supplies the coordinates that are not integrated.
    pub fallback: P,
}

#[derive(Debug, Clone)]
pub struct MarginalTarget<'a, M: StateSpaceModel> {
    model: &'a M,
    params: &'a [M::Param],
    log_prior: Vec<f64>,
    log_prior_total: f64,
    variant: MixtureVariant,
    closed_form: Option<ClosedFormLaw<M::Param>>,
}

impl<'a, M: StateSpaceModel> MarginalTarget<'a, M> {
    pub fn new(model: &'a M, params: &'a [M::Param], log_index_prior: Vec<f64>, variant: MixtureVariant) -> Result<Self> {
        if params.is_empty() {
            return Err(Error::EmptyInput);
        }
        if params.len() != log_index_prior.len() {
            return Err(Error::LengthMismatch { len: log_index_prior.len(), expected: params.len() });
        }
        let log_prior_total = lse(log_index_prior.iter().copied());
        if log_prior_total == f64::NEG_INFINITY {
            return Err(Error::WeightCollapse);
        }
        if variant == MixtureVariant::ClosedFormPriorMixture {
            return Err(Error::Config("the closed-form variant needs a parameter law, use with_closed_form".into()));
        }
        Ok(Self { model, params, log_prior: log_index_prior, log_prior_total, variant, closed_form: None })
    }

    /// Closed-form prior mixture with parameters integrated against
    /// `N(mean, diag(var))`. The fallback parameter is the candidate with the
    /// largest index prior weight.
    pub fn with_closed_form(
        model: &'a M,
        params: &'a [M::Param],
        log_index_prior: Vec<f64>,
        mean: Vec<f64>,
        var: Vec<f64>,
    ) -> Result<Self> {
        let mut target = Self::new(model, params, log_index_prior, MixtureVariant::PriorMixture)?;
        let best = target
            .log_prior
            .iter()
            .enumerate()
            .fold(0, |b, (l, w)| if *w > target.log_prior[b] { l } else { b });
        target.closed_form = Some(ClosedFormLaw { mean, var, fallback: params[best].clone() });
        target.variant = MixtureVariant::ClosedFormPriorMixture;
        Ok(target)
    }

    pub fn variant(&self) -> MixtureVariant {
        self.variant
    }

    pub fn log_index_prior(&self) -> &[f64] {
        &self.log_prior
    }

    fn closed_law(&self, t: usize, prev: Option<f64>) -> Option<(f64, f64)> {
        let law = self.closed_form.as_ref()?;
        self.model.integrated_transition(t, prev, &law.mean, &law.var, &law.fallback)
    }

    #[inline]
    fn live(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.params.len()).filter(|&l| self.log_prior[l] > f64::NEG_INFINITY)
    }

    /// Draw `l` with probability proportional to `exp(logw(l))` over the
    /// candidates in the prior support.
    fn sample_component<R: Rng + ?Sized>(&self, logw: impl Fn(usize) -> f64, rng: &mut R) -> usize {
        if self.params.len() == 1 {
            return 0;
        }
        let max = self.live().map(&logw).fold(f64::NEG_INFINITY, f64::max);
        let mut cum = [0.0; 16];
        let m = self.params.len();
        let mut heap = Vec::new();
        let cum: &mut [f64] = if m <= 16 {
            &mut cum[..m]
        } else {
            heap.resize(m, 0.0);
            &mut heap
        };
        let mut total = 0.0;
        for l in 0..m {
            if self.log_prior[l] > f64::NEG_INFINITY {
                total += (logw(l) - max).exp();
            }
            cum[l] = total;
        }
        let u = rng.random::<f64>() * total;
        let l = cum.partition_point(|&c| c <= u);
        if l < m {
            l
        } else {
            (0..m).rev().find(|&l| l == 0 || cum[l] > cum[l - 1]).unwrap_or(0)
        }
    }
}

fn lse(values: impl Iterator<Item = f64>) -> f64 {
    let mut acc = LogSumExp::new();
    values.for_each(|v| acc.push(v));
    acc.value()
}

impl<M: StateSpaceModel> SequentialTarget for MarginalTarget<'_, M> {
    fn horizon(&self) -> usize {
        self.model.horizon()
    }

    fn aux_len(&self) -> usize {
        self.params.len()
    }

    fn init_aux(&self, out: &mut [f64]) {
        out.fill(0.0);
    }

    fn propose<R: Rng + ?Sized>(&self, t: usize, prev: Option<f64>, aux: &[f64], rng: &mut R) -> f64 {
        let l = match self.variant {
            MixtureVariant::PosteriorMixture => self.sample_component(|l| self.log_prior[l] + aux[l], rng),
            MixtureVariant::PriorMixture => self.sample_component(|l| self.log_prior[l], rng),
            MixtureVariant::ClosedFormPriorMixture => {
                if let Some((mean, var)) = self.closed_law(t, prev) {
                    let z: f64 = StandardNormal.sample(rng);
                    return mean + var.sqrt() * z;
                }
                self.sample_component(|l| self.log_prior[l], rng)
            }
        };
        self.model.sample_transition(t, prev, &self.params[l], rng)
    }

    fn extend(&self, t: usize, prev: Option<f64>, aux: &[f64], x: f64, aux_out: &mut [f64]) -> f64 {
        let posterior = self.variant == MixtureVariant::PosteriorMixture;
        let mut num = LogSumExp::new();
        // posterior mixture: Σ_l e^{J_l} p_l; otherwise Σ_l e^{J_l} and the prior mixture Σ_l w_l p_l
        let mut first = LogSumExp::new();
        let mut second = LogSumExp::new();
        for l in 0..self.params.len() {
            let w = self.log_prior[l];
            if w == f64::NEG_INFINITY {
                aux_out[l] = f64::NEG_INFINITY;
                continue;
            }
            let theta = &self.params[l];
            let lp = self.model.log_transition(t, prev, x, theta);
            let lg = if lp == f64::NEG_INFINITY { 0.0 } else { self.model.log_potential(t, prev, x, theta) };
            let j = w + aux[l];
            aux_out[l] = aux[l] + lp + lg;
            num.push(j + lp + lg);
            if posterior {
                first.push(j + lp);
            } else {
                first.push(j);
                second.push(w + lp);
            }
        }
        let num = num.value();
        if num == f64::NEG_INFINITY {
            return num;
        }
        match self.variant {
            MixtureVariant::PosteriorMixture => num - first.value(),
            MixtureVariant::PriorMixture => num - first.value() - (second.value() - self.log_prior_total),
            MixtureVariant::ClosedFormPriorMixture => {
                let log_q = match self.closed_law(t, prev) {
                    Some((mean, var)) => normal_logpdf(x, mean, var),
                    None => second.value() - self.log_prior_total,
                };
                num - first.value() - log_q
            }
        }
    }

    fn tail_len(&self) -> usize {
        self.params.len()
    }

    fn init_tail(&self, out: &mut [f64]) {
        out.fill(0.0);
    }

    fn extend_tail(&self, s: usize, prev: f64, x: f64, tail: &mut [f64]) {
        for l in self.live() {
            tail[l] += self.model.log_increment(s, Some(prev), x, &self.params[l]);
        }
    }

    fn log_join(&self, t: usize, x_t: f64, aux: &[f64], next: f64, tail: &[f64]) -> f64 {
        let mut joined = LogSumExp::new();
        let mut old = LogSumExp::new();
        for l in self.live() {
            let j = self.log_prior[l] + aux[l];
            old.push(j);
            joined.push(j + self.model.log_increment(t + 1, Some(x_t), next, &self.params[l]) + tail[l]);
        }
        let joined = joined.value();
        if joined == f64::NEG_INFINITY {
            return joined;
        }
        joined - old.value()
    }
}

/// `log γ_t(x_{0:t})` of the marginal target, computed directly.
pub fn marginal_log_gamma<M: StateSpaceModel>(
    model: &M,
    params: &[M::Param],
    log_index_prior: &[f64],
    path: &[f64],
) -> f64 {
    lse(params.iter().zip(log_index_prior).map(|(theta, w)| {
        if *w == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        w + crate::model::log_gamma_path(model, path, theta)
    }))
}
