//! Cross-checks of the sequential machinery against direct formulas, and
//! statistical properties of the estimators and diagnostics.

use pmcmc::csmc::{backward_log_weights, csmc_forward, csmc_kernel, CsmcConfig, FixedParamTarget, ParticleSystem, SequentialTarget};
use pmcmc::diagnostics::{ess, iact};
use pmcmc::kalman::ffbs_sample;
use pmcmc::marginal::{index_log_prior, index_posterior, MarginalTarget, MixtureVariant};
use pmcmc::model::StateSpaceModel;
use pmcmc::numeric::{normalize_log_weights, LogSumExp};
use pmcmc::proposal::{GaussianPair, ParamProposal};
use pmcmc::samplers::{parameter_update, ChainState, ParticleGibbs, Sampler};
use pmcmc::smc::bootstrap_filter;
use pmcmc::{ChainRngs, DiscreteToySsm, InitialDistribution, LinearGaussianSsm, RngStream, Theta, Trajectory};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn lse(v: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = LogSumExp::new();
    v.into_iter().for_each(|x| acc.push(x));
    acc.value()
}

/// `Σ_{s ≤ t} log p_s g_s` along `path` under one parameter.
fn path_log_density<M: StateSpaceModel>(model: &M, theta: &M::Param, path: &[f64], t: usize) -> f64 {
    (0..=t)
        .map(|s| {
            let prev = if s == 0 { None } else { Some(path[s - 1]) };
            model.log_transition(s, prev, path[s], theta) + model.log_potential(s, prev, path[s], theta)
        })
        .sum()
}

fn mixture_log_density<M: StateSpaceModel>(model: &M, params: &[M::Param], w: &[f64], path: &[f64], t: usize) -> f64 {
    lse(params.iter().zip(w).map(|(p, w)| w + path_log_density(model, p, path, t)))
}

fn lg_model(seed: u64, len: usize) -> LinearGaussianSsm {
    let theta = Theta::new(0.8, 0.5, 0.4);
    let ys = LinearGaussianSsm::simulate(&theta, len - 1, InitialDistribution::Stationary, &mut RngStream::new(seed, 4))
        .unwrap()
        .1;
    LinearGaussianSsm::new(ys).unwrap()
}

fn random_theta<R: Rng>(rng: &mut R) -> Theta {
    Theta::new(rng.random_range(-0.95..0.95), rng.random_range(0.2..2.0), rng.random_range(0.2..2.0))
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let z = lse(v.iter().copied());
    v.iter().map(|x| x - z).collect()
}

/// Compare production backward log-weights with `log W + log γ_T(full) − log γ_t(prefix)`
/// built from stored lineages, at every step of one forward pass.
fn check_backward_weights<T, F>(target: &T, horizon: usize, particles: usize, seed: u64, naive: F, tol: f64)
where
    T: SequentialTarget,
    F: Fn(&[f64], usize) -> f64,
{
    let mut rng = RngStream::new(seed, 0);
    let reference: Vec<f64> = (0..=horizon).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let future: Vec<f64> = (0..=horizon).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let mut sys = ParticleSystem::new();
    csmc_forward(target, &Trajectory::new(reference).unwrap(), particles, &mut sys, &mut rng).unwrap();
    let mut tail = vec![0.0; target.tail_len()];
    target.init_tail(&mut tail);
    let mut out = Vec::new();
    for t in (0..horizon).rev() {
        if t + 2 <= horizon {
            target.extend_tail(t + 2, future[t + 1], future[t + 2], &mut tail);
        }
        backward_log_weights(target, &sys, t, future[t + 1], &tail, &mut out).unwrap();
        let direct: Vec<f64> = (0..particles)
            .map(|i| {
                let mut full = sys.lineage(t, i);
                full.extend_from_slice(&future[t + 1..]);
                sys.log_weights(t)[i] - lse(sys.log_weights(t).iter().copied()) + naive(&full, horizon) - naive(&full, t)
            })
            .collect();
        for (a, b) in normalized(&out).iter().zip(normalized(&direct)) {
            assert!((a - b).abs() < tol, "t={t}: {a} vs {b}");
        }
    }
}

#[test]
fn fixed_parameter_backward_weights_match_full_ratio() {
    for seed in 0..5 {
        let m = lg_model(seed, 6);
        let theta = random_theta(&mut RngStream::new(seed, 1));
        let target = FixedParamTarget::new(&m, &theta);
        check_backward_weights(&target, 5, 4, seed, |p, t| path_log_density(&m, &theta, p, t), 1e-12);
    }
}

#[test]
fn marginal_backward_weights_match_full_ratio() {
    for (seed, horizon, particles, m_params) in [(1, 3, 3, 2), (2, 5, 4, 3), (3, 4, 2, 3), (4, 5, 4, 1)] {
        let m = lg_model(seed, horizon + 1);
        let mut rng = RngStream::new(seed, 2);
        let params: Vec<Theta> = (0..m_params).map(|_| random_theta(&mut rng)).collect();
        let w: Vec<f64> = (0..m_params).map(|_| rng.random_range(-2.0..0.0)).collect();
        for variant in [MixtureVariant::PriorMixture, MixtureVariant::PosteriorMixture] {
            let target = MarginalTarget::new(&m, &params, w.clone(), variant).unwrap();
            check_backward_weights(&target, horizon, particles, seed, |p, t| mixture_log_density(&m, &params, &w, p, t), 1e-10);
        }
    }
}

#[test]
fn identical_candidates_reduce_to_fixed_parameter_weights() {
    let m = lg_model(7, 5);
    let theta = Theta::new(0.3, 0.9, 0.6);
    let params = [theta, theta];
    let target = MarginalTarget::new(&m, &params, vec![0.0, -1.0], MixtureVariant::PosteriorMixture).unwrap();
    check_backward_weights(&target, 4, 3, 7, |p, t| path_log_density(&m, &theta, p, t), 1e-12);
}

#[test]
fn discrete_marginal_backward_weights_match_full_ratio() {
    let m = DiscreteToySsm::random(3, 4, 3, true, &mut RngStream::new(11, 0)).unwrap();
    let params = [0usize, 1, 2];
    let w = vec![-0.3, -1.2, -2.0];
    let target = MarginalTarget::new(&m, &params, w.clone(), MixtureVariant::PosteriorMixture).unwrap();
    let mut rng = RngStream::new(12, 0);
    let reference: Vec<f64> = (0..5).map(|_| rng.random_range(0..3) as f64).collect();
    let future: Vec<f64> = (0..5).map(|_| rng.random_range(0..3) as f64).collect();
    let mut sys = ParticleSystem::new();
    csmc_forward(&target, &Trajectory::new(reference).unwrap(), 4, &mut sys, &mut rng).unwrap();
    let mut tail = vec![0.0; target.tail_len()];
    target.init_tail(&mut tail);
    let mut out = Vec::new();
    for t in (0..4).rev() {
        if t + 2 <= 4 {
            target.extend_tail(t + 2, future[t + 1], future[t + 2], &mut tail);
        }
        backward_log_weights(&target, &sys, t, future[t + 1], &tail, &mut out).unwrap();
        let direct: Vec<f64> = (0..4)
            .map(|i| {
                let mut full = sys.lineage(t, i);
                full.extend_from_slice(&future[t + 1..]);
                sys.log_weights(t)[i] + mixture_log_density(&m, &params, &w, &full, 4) - mixture_log_density(&m, &params, &w, &full, t)
            })
            .collect();
        for (a, b) in normalized(&out).iter().zip(normalized(&direct)) {
            assert!((a - b).abs() < 1e-10 || (*a == f64::NEG_INFINITY && b == f64::NEG_INFINITY));
        }
    }
}

#[test]
fn sequential_index_posterior_equals_batch_bayes() {
    for seed in 0..10 {
        let m = lg_model(seed, 8);
        let mut rng = RngStream::new(seed, 3);
        let params: Vec<Theta> = (0..3).map(|_| random_theta(&mut rng)).collect();
        let w: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..0.0)).collect();
        let path: Vec<f64> = (0..8).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        // running summaries as the particle system carries them
        let target = MarginalTarget::new(&m, &params, w.clone(), MixtureVariant::PosteriorMixture).unwrap();
        let mut aux = vec![0.0; 3];
        target.init_aux(&mut aux);
        let mut next = vec![0.0; 3];
        for t in 0..8 {
            let prev = if t == 0 { None } else { Some(path[t - 1]) };
            target.extend(t, prev, &aux, path[t], &mut next);
            std::mem::swap(&mut aux, &mut next);
        }
        let seq: Vec<f64> = w.iter().zip(&aux).map(|(a, b)| a + b).collect();
        let seq = normalize_log_weights(&seq).unwrap();
        let batch = index_posterior(&m, &params, &w, &Trajectory::new(path.clone()).unwrap()).unwrap();
        let direct: Vec<f64> = (0..3).map(|l| w[l] + path_log_density(&m, &params[l], &path, 7)).collect();
        let z = lse(direct.iter().copied());
        for l in 0..3 {
            let d = (direct[l] - z).exp();
            assert!((seq.probs()[l] - d).abs() < 1e-10);
            assert!((batch.probs()[l] - d).abs() < 1e-10);
        }
    }
}

proptest! {
    #[test]
    fn index_posterior_is_normalized(seed in 0u64..1000, m_params in 1usize..5) {
        let m = lg_model(seed, 5);
        let mut rng = RngStream::new(seed, 9);
        let params: Vec<Theta> = (0..m_params).map(|_| random_theta(&mut rng)).collect();
        let w: Vec<f64> = (0..m_params).map(|_| rng.random_range(-50.0..50.0)).collect();
        let path: Vec<f64> = (0..5).map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        let post = index_posterior(&m, &params, &w, &Trajectory::new(path).unwrap()).unwrap();
        prop_assert!((post.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(post.probs().iter().all(|p| *p >= 0.0));
    }
}

#[test]
fn symmetric_pair_index_prior_does_not_depend_on_aux() {
    let m = lg_model(1, 10);
    let mut rng = RngStream::new(4, 0);
    let params: Vec<Theta> = (0..3).map(|_| random_theta(&mut rng)).collect();
    let u = [0.2, 0.9, 1.1];
    let shifted = u.map(|v| v + 1.0);
    let sym = GaussianPair::symmetric(0.05, [1.0; 3]).unwrap();
    let a = normalize_log_weights(&index_log_prior(&m, &sym, &u, &params)).unwrap();
    let b = normalize_log_weights(&index_log_prior(&m, &sym, &shifted, &params)).unwrap();
    let prior = normalize_log_weights(&params.iter().map(|p| m.log_prior(p)).collect::<Vec<_>>()).unwrap();
    for l in 0..3 {
        assert!((a.probs()[l] - b.probs()[l]).abs() < 1e-10);
        assert!((a.probs()[l] - prior.probs()[l]).abs() < 1e-10);
    }
    let asym = GaussianPair::new([0.02; 3], [0.08; 3]).unwrap();
    let near = [Theta::new(0.5, 1.0, 1.0), Theta::new(0.6, 1.1, 0.9), Theta::new(0.4, 0.9, 1.2)];
    let u = [0.5, 1.0, 1.0];
    let shifted = [0.7, 1.2, 1.1];
    let a = normalize_log_weights(&index_log_prior(&m, &asym, &u, &near)).unwrap();
    let b = normalize_log_weights(&index_log_prior(&m, &asym, &shifted, &near)).unwrap();
    let gap = (0..3).map(|l| (a.probs()[l] - b.probs()[l]).abs()).fold(0.0, f64::max);
    assert!(gap > 1e-3, "asymmetric pair gap {gap}");
}

fn ar1(phi: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = RngStream::new(seed, 0);
    let mut x = 0.0;
    (0..n)
        .map(|_| {
            x = phi * x + rng.sample::<f64, _>(StandardNormal);
            x
        })
        .collect()
}

#[test]
fn iact_reference_values() {
    let white = ar1(0.0, 100_000, 1);
    let t = iact(&white).unwrap();
    assert!((0.9..=1.1).contains(&t), "white noise {t}");
    let t = iact(&ar1(0.5, 100_000, 2)).unwrap();
    assert!((t / 3.0 - 1.0).abs() < 0.1, "AR(1) {t}");
    let doubled: Vec<f64> = ar1(0.0, 50_000, 3).into_iter().flat_map(|x| [x, x]).collect();
    let t = iact(&doubled).unwrap();
    assert!((1.8..=2.2).contains(&t), "duplicated {t}");
}

#[test]
fn iact_is_affine_invariant_and_ess_complements_it() {
    let x = ar1(0.7, 5_000, 4);
    let y: Vec<f64> = x.iter().map(|v| -3.5 * v + 12.0).collect();
    let (a, b) = (iact(&x).unwrap(), iact(&y).unwrap());
    assert!((a - b).abs() < 1e-9 * a);
    assert!((ess(&x).unwrap() * a - x.len() as f64).abs() < 1e-9 * x.len() as f64);
}

#[test]
fn evidence_estimate_variance_shrinks_with_particles() {
    let m = lg_model(5, 21);
    let theta = Theta::new(0.8, 0.5, 0.4);
    let mut rng = RngStream::new(6, 0);
    let vars: Vec<f64> = [8, 32, 128]
        .iter()
        .map(|&n| {
            let z: Vec<f64> = (0..400).map(|_| bootstrap_filter(&m, &theta, n, false, &mut rng).unwrap().log_z).collect();
            let mean = z.iter().sum::<f64>() / z.len() as f64;
            z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (z.len() - 1) as f64
        })
        .collect();
    assert!(vars[0] > vars[1] && vars[1] > vars[2], "{vars:?}");
}

#[test]
fn uninformative_observations_give_prior_process_draws() {
    let ys: Vec<f64> = (0..11).map(|t| (t as f64).sin() * 5.0).collect();
    let m = LinearGaussianSsm::new(ys).unwrap();
    let theta = Theta::new(0.7, 0.5, 1e12);
    let mut rng = RngStream::new(8, 0);
    let reps = 10_000;
    let stationary = 0.5 / (1.0 - 0.49);
    let draws: Vec<Vec<f64>> = (0..reps).map(|_| ffbs_sample(&m, &theta, &mut rng).unwrap().into_inner()).collect();
    for t in [0, 5, 10] {
        let xs: Vec<f64> = draws.iter().map(|d| d[t]).collect();
        let mean = xs.iter().sum::<f64>() / reps as f64;
        let var = xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        assert!(mean.abs() < 3.0 * (stationary / reps as f64).sqrt(), "t={t} mean {mean}");
        // sd of a sample variance of normals is σ²√(2/(n−1))
        assert!((var - stationary).abs() < 3.0 * stationary * (2.0 / (reps - 1) as f64).sqrt(), "t={t} var {var}");
    }
    // lag-one covariance of the prior process is ρ times the stationary variance
    let cov = draws.iter().map(|d| d[4] * d[5]).sum::<f64>() / reps as f64;
    assert!((cov - 0.7 * stationary).abs() < 0.05);
}

/// Leaves `θ` where it is.
struct Stay;

impl ParamProposal<Theta> for Stay {
    fn sample<R: Rng + ?Sized>(&self, from: &Theta, _: &mut R) -> Theta {
        *from
    }
    fn log_density(&self, _: &Theta, _: &Theta) -> f64 {
        0.0
    }
}

/// Random walk on `ρ` only.
struct RhoWalk(f64);

impl ParamProposal<Theta> for RhoWalk {
    fn sample<R: Rng + ?Sized>(&self, from: &Theta, rng: &mut R) -> Theta {
        let z: f64 = StandardNormal.sample(rng);
        Theta { rho: from.rho + self.0 * z, ..*from }
    }
    fn log_density(&self, to: &Theta, from: &Theta) -> f64 {
        -0.5 * ((to.rho - from.rho) / self.0).powi(2)
    }
}

#[test]
fn staying_parameter_proposal_is_always_accepted() {
    let m = lg_model(2, 15);
    let mut sampler = ParticleGibbs::new(&m, Stay, CsmcConfig::new(4).unwrap());
    let mut rngs = ChainRngs::new(3, 0);
    let mut state: ChainState<Theta> = sampler.init(Theta::new(0.5, 1.0, 1.0), &mut rngs).unwrap();
    let start = state.trajectory.clone();
    for _ in 0..200 {
        assert!(sampler.step(&mut state, &mut rngs).unwrap());
        assert_eq!(state.theta, Theta::new(0.5, 1.0, 1.0));
    }
    assert_ne!(state.trajectory, start);
}

#[test]
fn parameter_update_targets_rho_conditional() {
    let truth = Theta::new(0.6, 1.0, 0.5);
    let (x, ys) = LinearGaussianSsm::simulate(&truth, 20, InitialDistribution::Stationary, &mut RngStream::new(9, 0)).unwrap();
    let m = LinearGaussianSsm::new(ys).unwrap();
    let density = |rho: f64| {
        let theta = Theta { rho, ..truth };
        m.log_prior(&theta) + path_log_density(&m, &theta, x.states(), 20)
    };
    // midpoint rule on (−1, 1)
    let k = 200_000;
    let grid: Vec<f64> = (0..k).map(|i| -1.0 + (i as f64 + 0.5) * 2.0 / k as f64).collect();
    let logd: Vec<f64> = grid.iter().map(|&r| density(r)).collect();
    let z = lse(logd.iter().copied());
    let w: Vec<f64> = logd.iter().map(|l| (l - z).exp()).collect();
    let q_mean: f64 = grid.iter().zip(&w).map(|(r, w)| r * w).sum();
    let q_var: f64 = grid.iter().zip(&w).map(|(r, w)| (r - q_mean).powi(2) * w).sum();

    let mut theta = truth;
    let mut rngs = ChainRngs::new(10, 0);
    let n = 60_000;
    let chain: Vec<f64> = (0..n)
        .map(|_| {
            parameter_update(&m, &RhoWalk(0.3), &mut theta, &x, &mut rngs).unwrap();
            theta.rho
        })
        .collect();
    let mean = chain.iter().sum::<f64>() / n as f64;
    let sq: Vec<f64> = chain.iter().map(|r| (r - mean).powi(2)).collect();
    let var = sq.iter().sum::<f64>() / n as f64;
    let se_mean = (q_var * iact(&chain).unwrap() / n as f64).sqrt();
    let sq_mean = var;
    let sq_var = sq.iter().map(|s| (s - sq_mean).powi(2)).sum::<f64>() / n as f64;
    let se_var = (sq_var * iact(&sq).unwrap() / n as f64).sqrt();
    assert!((mean - q_mean).abs() < 4.0 * se_mean, "mean {mean} vs {q_mean} (se {se_mean})");
    assert!((var - q_var).abs() < 4.0 * se_var, "var {var} vs {q_var} (se {se_var})");
}

#[test]
fn two_particle_backward_sampling_moves_off_reference() {
    let m = lg_model(3, 11);
    let theta = Theta::new(0.8, 0.5, 0.4);
    let target = FixedParamTarget::new(&m, &theta);
    let config = CsmcConfig::new(2).unwrap().with_backward_sampling(true);
    let reference = ffbs_sample(&m, &theta, &mut RngStream::new(1, 0)).unwrap();
    let mut sys = ParticleSystem::new();
    let (mut a, mut b) = (RngStream::new(2, 0), RngStream::new(2, 1));
    let reps = 2_000;
    let moved = (0..reps)
        .filter(|_| csmc_kernel(&target, &reference, &config, &mut sys, &mut a, &mut b).unwrap().trajectory != reference)
        .count();
    assert!(moved as f64 / reps as f64 > 0.01, "moved {moved} of {reps}");
}
