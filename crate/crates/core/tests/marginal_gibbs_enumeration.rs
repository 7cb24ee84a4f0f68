//! Marginalized particle Gibbs and the exact-likelihood chains checked against
//! enumerated transition matrices on a discrete parameter grid.

mod common;

use common::{all_tables, as_indices, as_states, prior};
use pmcmc::csmc::{CsmcConfig, TerminalSelection};
use pmcmc::marginal::MixtureVariant;
use pmcmc::model::ExactMarginal;
use pmcmc::proposal::{GridPair, GridProposal};
use pmcmc::samplers::{ChainState, IdealChain, MarginalParticleGibbs, Sampler};
use pmcmc::{ChainRngs, DiscreteToySsm, RngStream, Trajectory};
use pmcmc_oracles::{
    decode, encode, grid_chain_matrix, joint_posterior, marginal_gibbs_row, parameter_posterior, stationarity_error,
    GridPairTables, JointSpace, MarginalSettings, Selection,
};

const HORIZON: usize = 2;

fn grid_model() -> DiscreteToySsm {
    DiscreteToySsm::random(2, HORIZON, 3, true, &mut RngStream::new(21, 0)).unwrap()
}

fn pair_tables() -> GridPairTables {
    GridPairTables {
        aux: vec![vec![0.7, 0.3], vec![0.4, 0.6], vec![0.1, 0.9]],
        param: vec![vec![0.5, 0.3, 0.2], vec![0.2, 0.3, 0.5]],
    }
}

fn settings(posterior_weighted: bool, backward: bool, candidates: usize) -> MarginalSettings {
    MarginalSettings { candidates, particles: 2, backward, posterior_weighted, selection: Selection::Categorical }
}

fn full_matrix(m: &DiscreteToySsm, s: MarginalSettings) -> Vec<Vec<f64>> {
    let models = all_tables(m);
    let pr = prior(m);
    let space = JointSpace { grid: 3, paths: 8 };
    (0..space.size())
        .map(|c| {
            let (g, code) = (c / space.paths, c % space.paths);
            marginal_gibbs_row(&models, &pr, &pair_tables(), HORIZON, s, g, &decode(code, 2, HORIZON + 1))
        })
        .collect()
}

#[test]
fn marginal_gibbs_leaves_joint_posterior_invariant() {
    let m = grid_model();
    let pi = joint_posterior(&all_tables(&m), &prior(&m), HORIZON);
    for posterior_weighted in [false, true] {
        for backward in [false, true] {
            for candidates in [2, 3] {
                let matrix = full_matrix(&m, settings(posterior_weighted, backward, candidates));
                for row in &matrix {
                    assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                }
                let err = stationarity_error(&pi, &matrix);
                assert!(err < 1e-12, "weighted={posterior_weighted} backward={backward} M={candidates}: {err}");
            }
        }
    }
}

#[test]
fn production_marginal_gibbs_matches_oracle_row() {
    let m = grid_model();
    let t = pair_tables();
    let pair = GridPair::new(t.aux.clone(), t.param.clone()).unwrap();
    let models = all_tables(&m);
    let pr = prior(&m);
    let reference = [1usize, 1, 0];
    for (variant, weighted) in [(MixtureVariant::PriorMixture, false), (MixtureVariant::PosteriorMixture, true)] {
        for backward in [false, true] {
            let config = CsmcConfig::new(2).unwrap().with_backward_sampling(backward);
            let mut sampler = MarginalParticleGibbs::new(&m, pair.clone(), 2, config, variant).unwrap();
            let mut rngs = ChainRngs::new(17, backward as u64);
            let reps = 60_000;
            let mut counts = vec![0usize; 24];
            for _ in 0..reps {
                let mut state = ChainState::new(1usize);
                state.trajectory = Some(Trajectory::new(as_states(&reference)).unwrap());
                sampler.step(&mut state, &mut rngs).unwrap();
                let path = as_indices(state.trajectory.as_ref().unwrap().states());
                counts[state.theta * 8 + encode(&path, 2)] += 1;
            }
            let expected = marginal_gibbs_row(&models, &pr, &t, HORIZON, settings(weighted, backward, 2), 1, &reference);
            let p = pmcmc_oracles::chi_square_p_value(&counts, &expected);
            assert!(p > 1e-4, "{variant:?} backward={backward}: p = {p}");
        }
    }
}

#[test]
fn metropolised_forced_move_inside_marginal_gibbs_is_invariant() {
    let m = grid_model();
    let pi = joint_posterior(&all_tables(&m), &prior(&m), HORIZON);
    let mut s = settings(true, false, 2);
    s.selection = Selection::ForcedMetropolis;
    assert!(stationarity_error(&pi, &full_matrix(&m, s)) < 1e-12);
    assert!(TerminalSelection::MetropolisedForcedMove.preserves_target());
}

#[test]
fn exact_evidence_matches_enumeration() {
    let m = grid_model();
    let models = all_tables(&m);
    for g in 0..3 {
        let brute: f64 = (0..8).map(|c| models[g].gamma(&decode(c, 2, HORIZON + 1))).sum();
        assert!((m.log_marginal(&g) - brute.ln()).abs() < 1e-12);
    }
}

#[test]
fn ideal_chains_leave_parameter_posterior_invariant() {
    let m = grid_model();
    let q = vec![vec![0.2, 0.5, 0.3], vec![0.4, 0.2, 0.4], vec![0.6, 0.3, 0.1]];
    let proposal = GridProposal::new(q.clone()).unwrap();
    let post = parameter_posterior(&all_tables(&m), &prior(&m), HORIZON);
    let mh = IdealChain::metropolis(&m, proposal.clone());
    let barker = IdealChain::barker(&m, proposal);
    let p_mh = grid_chain_matrix(&q, |i, j| mh.acceptance_probability(&i, &j));
    let p_barker = grid_chain_matrix(&q, |i, j| barker.acceptance_probability(&i, &j));
    assert!(stationarity_error(&post, &p_mh) < 1e-14);
    assert!(stationarity_error(&post, &p_barker) < 1e-14);
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                assert!(p_barker[i][j] <= p_mh[i][j] + 1e-15);
            }
        }
    }
}

#[test]
fn marginal_gibbs_parameter_marginal_tracks_posterior() {
    // long-run θ frequencies of the production chain against p(θ | y)
    let m = grid_model();
    let t = pair_tables();
    let pair = GridPair::new(t.aux, t.param).unwrap();
    let config = CsmcConfig::new(3).unwrap().with_backward_sampling(true);
    let mut sampler = MarginalParticleGibbs::new(&m, pair, 2, config, MixtureVariant::PosteriorMixture).unwrap();
    let records = pmcmc::samplers::run_chain(&mut sampler, 0, 200_000, &mut ChainRngs::new(5, 0)).unwrap();
    let post = parameter_posterior(&all_tables(&m), &prior(&m), HORIZON);
    let n = records.len() as f64;
    for g in 0..3 {
        let f = records.iter().filter(|r| r.theta == g).count() as f64 / n;
        // generous allowance for autocorrelation
        assert!((f - post[g]).abs() < 0.01, "θ={g}: {f} vs {}", post[g]);
    }
}
