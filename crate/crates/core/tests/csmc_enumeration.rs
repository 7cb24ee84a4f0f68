//! Conditional SMC checked against exact kernel matrices from full
//! enumeration of the particle system.

mod common;

use common::{as_states, tables};
use pmcmc::csmc::{csmc_kernel, CsmcConfig, FixedParamTarget, ParticleSystem, TerminalSelection};
use pmcmc::marginal::{MarginalTarget, MixtureVariant};
use pmcmc::{DiscreteToySsm, RngStream, Trajectory};
use pmcmc_oracles::{
    csmc_matrix, csmc_row, encode, path_posterior, stationarity_error, FixedTarget, MixtureTarget, Selection,
};

const RULES: [(TerminalSelection, Selection); 3] = [
    (TerminalSelection::StandardCategorical, Selection::Categorical),
    (TerminalSelection::RatioForcedMove, Selection::ForcedRatio),
    (TerminalSelection::MetropolisedForcedMove, Selection::ForcedMetropolis),
];

fn toy(seed: u64, bivariate: bool) -> DiscreteToySsm {
    DiscreteToySsm::random(2, 2, 1, bivariate, &mut RngStream::new(seed, 0)).unwrap()
}

#[test]
fn fixed_parameter_kernel_leaves_path_posterior_invariant() {
    for seed in [1, 2, 3] {
        let m = toy(seed, seed % 2 == 1);
        let t = tables(&m, 0);
        let target = FixedTarget { tables: &t, horizon: 2 };
        let pi = path_posterior(&target);
        for n in [2, 3] {
            for backward in [false, true] {
                for (_, rule) in [RULES[0], RULES[2]] {
                    let err = stationarity_error(&pi, &csmc_matrix(&target, n, backward, rule));
                    assert!(err < 1e-12, "seed {seed} N={n} backward={backward} {rule:?}: {err}");
                }
            }
        }
    }
}

#[test]
fn ratio_forced_move_breaks_invariance() {
    let mut worst = 0.0f64;
    for seed in [1, 2, 3] {
        let t = tables(&toy(seed, true), 0);
        let target = FixedTarget { tables: &t, horizon: 2 };
        let pi = path_posterior(&target);
        worst = worst.max(stationarity_error(&pi, &csmc_matrix(&target, 2, false, Selection::ForcedRatio)));
    }
    assert!(worst > 1e-3, "largest stationarity error {worst}");
    assert!(!TerminalSelection::RatioForcedMove.preserves_target());
}

#[test]
fn marginal_target_kernel_leaves_mixture_invariant() {
    let m = DiscreteToySsm::random(2, 2, 2, true, &mut RngStream::new(8, 0)).unwrap();
    let (t0, t1) = (tables(&m, 0), tables(&m, 1));
    for posterior_weighted in [false, true] {
        let target = MixtureTarget {
            components: vec![&t0, &t1],
            weights: vec![0.7, 0.3],
            posterior_weighted,
            horizon: 2,
        };
        let pi = path_posterior(&target);
        for backward in [false, true] {
            let err = stationarity_error(&pi, &csmc_matrix(&target, 2, backward, Selection::Categorical));
            assert!(err < 1e-12, "posterior_weighted={posterior_weighted} backward={backward}: {err}");
        }
    }
}

fn empirical_row<F>(reps: usize, mut draw: F) -> Vec<usize>
where
    F: FnMut() -> Vec<usize>,
{
    let mut counts = vec![0usize; 8];
    for _ in 0..reps {
        counts[encode(&draw(), 2)] += 1;
    }
    counts
}

#[test]
fn production_fixed_parameter_kernel_matches_oracle_rows() {
    let m = toy(4, true);
    let t = tables(&m, 0);
    let oracle_target = FixedTarget { tables: &t, horizon: 2 };
    let reference = [1, 0, 1];
    let ref_traj = Trajectory::new(as_states(&reference)).unwrap();
    let target = FixedParamTarget::new(&m, &0);
    for (i, (rule, oracle_rule)) in RULES.iter().enumerate() {
        for backward in [false, true] {
            let config = CsmcConfig::new(3).unwrap().with_backward_sampling(backward).with_terminal_selection(*rule);
            let mut sys = ParticleSystem::new();
            let mut a = RngStream::new(100 + i as u64, backward as u64);
            let mut b = RngStream::new(200 + i as u64, backward as u64);
            let counts = empirical_row(60_000, || {
                let out = csmc_kernel(&target, &ref_traj, &config, &mut sys, &mut a, &mut b).unwrap();
                common::as_indices(out.trajectory.states())
            });
            let expected = csmc_row(&oracle_target, &reference, 3, backward, *oracle_rule);
            let p = pmcmc_oracles::chi_square_p_value(&counts, &expected);
            assert!(p > 1e-4, "{rule:?} backward={backward}: p = {p}");
        }
    }
}

#[test]
fn production_marginal_target_kernel_matches_oracle_rows() {
    let m = DiscreteToySsm::random(2, 2, 2, true, &mut RngStream::new(9, 0)).unwrap();
    let (t0, t1) = (tables(&m, 0), tables(&m, 1));
    let params = [0usize, 1];
    let weights = [0.4, 0.6];
    let reference = [0, 1, 1];
    let ref_traj = Trajectory::new(as_states(&reference)).unwrap();
    for (variant, posterior_weighted) in [(MixtureVariant::PriorMixture, false), (MixtureVariant::PosteriorMixture, true)] {
        let target = MarginalTarget::new(&m, &params, weights.iter().map(|w: &f64| w.ln()).collect(), variant).unwrap();
        let oracle_target = MixtureTarget {
            components: vec![&t0, &t1],
            weights: weights.to_vec(),
            posterior_weighted,
            horizon: 2,
        };
        for backward in [false, true] {
            let config = CsmcConfig::new(2).unwrap().with_backward_sampling(backward);
            let mut sys = ParticleSystem::new();
            let mut a = RngStream::new(300, backward as u64);
            let mut b = RngStream::new(400, backward as u64);
            let counts = empirical_row(60_000, || {
                let out = csmc_kernel(&target, &ref_traj, &config, &mut sys, &mut a, &mut b).unwrap();
                common::as_indices(out.trajectory.states())
            });
            let expected = csmc_row(&oracle_target, &reference, 2, backward, Selection::Categorical);
            let p = pmcmc_oracles::chi_square_p_value(&counts, &expected);
            assert!(p > 1e-4, "{variant:?} backward={backward}: p = {p}");
        }
    }
}
