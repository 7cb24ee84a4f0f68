#![allow(dead_code)]

use pmcmc::model::StateSpaceModel;
use pmcmc::DiscreteToySsm;
use pmcmc_oracles::Tables;

pub fn tables(model: &DiscreteToySsm, theta: usize) -> Tables {
    let p = model.params(theta);
    Tables {
        initial: p.initial.clone(),
        transition: p.transition.clone(),
        emission: p.emission.clone(),
        coupling: p.coupling.clone(),
    }
}

pub fn all_tables(model: &DiscreteToySsm) -> Vec<Tables> {
    (0..model.grid_size()).map(|g| tables(model, g)).collect()
}

pub fn prior(model: &DiscreteToySsm) -> Vec<f64> {
    (0..model.grid_size()).map(|g| model.log_prior(&g).exp()).collect()
}

pub fn as_states(path: &[usize]) -> Vec<f64> {
    path.iter().map(|&x| x as f64).collect()
}

pub fn as_indices(path: &[f64]) -> Vec<usize> {
    path.iter().map(|&x| x as usize).collect()
}
