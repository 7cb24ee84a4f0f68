//! Parameter proposals.
//!
//! [`ParamProposal`] is a plain Metropolis proposal `q(θ' | θ)`. A
//! [`ProposalPair`] splits a proposal through an auxiliary variable,
//! `q(θ' | θ) = ∫ q(θ' | u) q(u | θ) du`, which is the form the marginalized
//! particle Gibbs kernel consumes.

use std::fmt::Debug;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::Theta;
use crate::numeric::normal_logpdf;
use crate::rng::categorical_unchecked;

pub trait ParamProposal<P> {
    fn sample<R: Rng + ?Sized>(&self, from: &P, rng: &mut R) -> P;
    /// `log q(to | from)`.
    fn log_density(&self, to: &P, from: &P) -> f64;
}

pub trait ProposalPair<P> {
    type Aux: Clone + Debug + Send + Sync;

    fn sample_aux<R: Rng + ?Sized>(&self, theta: &P, rng: &mut R) -> Self::Aux;
    /// `log q(u | θ)`.
    fn log_q_aux(&self, u: &Self::Aux, theta: &P) -> f64;
    fn sample_param<R: Rng + ?Sized>(&self, u: &Self::Aux, rng: &mut R) -> P;
    /// `log q(θ | u)`.
    fn log_q_param(&self, theta: &P, u: &Self::Aux) -> f64;

    /// Per-coordinate mean and variance of `q(θ | u)` when it is a diagonal
    /// Gaussian.
    fn gaussian_param_law(&self, _u: &Self::Aux) -> Option<(Vec<f64>, Vec<f64>)> {
        None
    }
}

fn check_variances(v: &[f64; 3]) -> Result<()> {
    if v.iter().all(|s| s.is_finite() && *s > 0.0) {
        Ok(())
    } else {
        Err(Error::Config(format!("proposal variances must be positive, got {v:?}")))
    }
}

fn perturb<R: Rng + ?Sized>(center: [f64; 3], var: &[f64; 3], rng: &mut R) -> [f64; 3] {
    let mut out = center;
    for (o, v) in out.iter_mut().zip(var) {
        let z: f64 = StandardNormal.sample(rng);
        *o += v.sqrt() * z;
    }
    out
}

fn diag_logpdf(x: [f64; 3], center: [f64; 3], var: &[f64; 3]) -> f64 {
    (0..3).map(|i| normal_logpdf(x[i], center[i], var[i])).sum()
}

/// `θ' ~ N(θ, diag(variance))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianRandomWalk {
    variance: [f64; 3],
}

impl GaussianRandomWalk {
    pub fn new(variance: [f64; 3]) -> Result<Self> {
        check_variances(&variance)?;
        Ok(Self { variance })
    }

    /// `N(θ, τ I)`.
    pub fn isotropic(tau: f64) -> Result<Self> {
        Self::new([tau; 3])
    }

    pub fn variance(&self) -> [f64; 3] {
        self.variance
    }
}

impl ParamProposal<Theta> for GaussianRandomWalk {
    fn sample<R: Rng + ?Sized>(&self, from: &Theta, rng: &mut R) -> Theta {
        Theta::from_array(perturb(from.to_array(), &self.variance, rng))
    }

    fn log_density(&self, to: &Theta, from: &Theta) -> f64 {
        diag_logpdf(to.to_array(), from.to_array(), &self.variance)
    }
}

/// Gaussian two-halves pair: `u ~ N(θ, diag(aux_var))`, `θ' ~ N(u, diag(param_var))`.
///
/// With equal halves `(δ/2) Σ` the pair is symmetric in `(θ, u)` and its
/// marginal is `N(θ, δ Σ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPair {
    aux_var: [f64; 3],
    param_var: [f64; 3],
}

impl GaussianPair {
    pub fn new(aux_var: [f64; 3], param_var: [f64; 3]) -> Result<Self> {
        check_variances(&aux_var)?;
        check_variances(&param_var)?;
        Ok(Self { aux_var, param_var })
    }

    /// Both halves `N(·, (δ/2) diag(sigma))`.
    pub fn symmetric(delta: f64, sigma: [f64; 3]) -> Result<Self> {
        let half = sigma.map(|s| 0.5 * delta * s);
        Self::new(half, half)
    }

    pub fn is_symmetric(&self) -> bool {
        self.aux_var == self.param_var
    }

    /// Variance of the marginal `q(θ' | θ)`.
    pub fn marginal_variance(&self) -> [f64; 3] {
        [0, 1, 2].map(|i| self.aux_var[i] + self.param_var[i])
    }
}

impl ProposalPair<Theta> for GaussianPair {
    type Aux = [f64; 3];

    fn sample_aux<R: Rng + ?Sized>(&self, theta: &Theta, rng: &mut R) -> [f64; 3] {
        perturb(theta.to_array(), &self.aux_var, rng)
    }

    fn log_q_aux(&self, u: &[f64; 3], theta: &Theta) -> f64 {
        diag_logpdf(*u, theta.to_array(), &self.aux_var)
    }

    fn sample_param<R: Rng + ?Sized>(&self, u: &[f64; 3], rng: &mut R) -> Theta {
        Theta::from_array(perturb(*u, &self.param_var, rng))
    }

    fn log_q_param(&self, theta: &Theta, u: &[f64; 3]) -> f64 {
        diag_logpdf(theta.to_array(), *u, &self.param_var)
    }

    fn gaussian_param_law(&self, u: &[f64; 3]) -> Option<(Vec<f64>, Vec<f64>)> {
        Some((u.to_vec(), self.param_var.to_vec()))
    }
}

fn check_stochastic(rows: &[Vec<f64>], cols: usize, what: &str) -> Result<()> {
    for row in rows {
        if row.len() != cols || row.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Config(format!("{what}: malformed row")));
        }
        let total: f64 = row.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("{what}: row sums to {total}")));
        }
    }
    Ok(())
}

/// Proposal over a finite parameter grid given by a row-stochastic matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GridProposal {
    matrix: Vec<Vec<f64>>,
}

impl GridProposal {
    pub fn new(matrix: Vec<Vec<f64>>) -> Result<Self> {
        check_stochastic(&matrix, matrix.len(), "grid proposal")?;
        Ok(Self { matrix })
    }

    pub fn prob(&self, to: usize, from: usize) -> f64 {
        self.matrix[from][to]
    }
}

impl ParamProposal<usize> for GridProposal {
    fn sample<R: Rng + ?Sized>(&self, from: &usize, rng: &mut R) -> usize {
        categorical_unchecked(&self.matrix[*from], rng)
    }

    fn log_density(&self, to: &usize, from: &usize) -> f64 {
        self.matrix[*from][*to].ln()
    }
}

/// Finite pair: `u ~ aux[θ]` over `U` auxiliary values, `θ' ~ param[u]` over
/// the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPair {
    aux: Vec<Vec<f64>>,
    param: Vec<Vec<f64>>,
}

impl GridPair {
    pub fn new(aux: Vec<Vec<f64>>, param: Vec<Vec<f64>>) -> Result<Self> {
        let grid = aux.len();
        let aux_values = param.len();
        check_stochastic(&aux, aux_values, "aux half")?;
        check_stochastic(&param, grid, "parameter half")?;
        Ok(Self { aux, param })
    }

    pub fn aux_values(&self) -> usize {
        self.param.len()
    }

    pub fn grid_size(&self) -> usize {
        self.aux.len()
    }
}

impl ProposalPair<usize> for GridPair {
    type Aux = usize;

    fn sample_aux<R: Rng + ?Sized>(&self, theta: &usize, rng: &mut R) -> usize {
        categorical_unchecked(&self.aux[*theta], rng)
    }

    fn log_q_aux(&self, u: &usize, theta: &usize) -> f64 {
        self.aux[*theta][*u].ln()
    }

    fn sample_param<R: Rng + ?Sized>(&self, u: &usize, rng: &mut R) -> usize {
        categorical_unchecked(&self.param[*u], rng)
    }

    fn log_q_param(&self, theta: &usize, u: &usize) -> f64 {
        self.param[*u][*theta].ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn pair_marginal_matches_random_walk_moments() {
        let pair = GaussianPair::symmetric(0.15f64.powi(2), [1.0; 3]).unwrap();
        assert!(pair.is_symmetric());
        let theta = Theta::new(0.3, 1.0, 0.5);
        let mut rng = RngStream::new(1, 0);
        let n = 50_000;
        let mut sum = [0.0; 3];
        let mut sq = [0.0; 3];
        for _ in 0..n {
            let u = pair.sample_aux(&theta, &mut rng);
            let t = pair.sample_param(&u, &mut rng).to_array();
            for i in 0..3 {
                let d = t[i] - theta.to_array()[i];
                sum[i] += d;
                sq[i] += d * d;
            }
        }
        for i in 0..3 {
            let var = sq[i] / n as f64;
            assert!((sum[i] / n as f64).abs() < 4.0 * (0.0225f64 / n as f64).sqrt());
            assert!((var - 0.0225).abs() < 0.0225 * 0.03, "coordinate {i}: {var}");
        }
        assert_eq!(pair.marginal_variance(), [0.0225; 3]);
    }

    #[test]
    fn symmetric_halves_swap() {
        let pair = GaussianPair::symmetric(0.1, [1.0, 2.0, 0.5]).unwrap();
        let theta = Theta::new(0.2, 0.7, 1.3);
        let u = [0.25, 0.9, 1.1];
        let swapped = Theta::from_array(u);
        let diff = pair.log_q_aux(&u, &theta) - pair.log_q_param(&swapped, &theta.to_array());
        assert!(diff.abs() < 1e-14);
    }

    #[test]
    fn invalid_variances_rejected() {
        assert!(GaussianRandomWalk::isotropic(0.0).is_err());
        assert!(GaussianPair::new([1.0, -1.0, 1.0], [1.0; 3]).is_err());
        assert!(GridProposal::new(vec![vec![0.5, 0.4], vec![0.5, 0.5]]).is_err());
    }

    #[test]
    fn grid_proposal_frequencies() {
        let q = GridProposal::new(vec![vec![0.2, 0.8], vec![0.6, 0.4]]).unwrap();
        let mut rng = RngStream::new(2, 0);
        let n = 40_000;
        let ones = (0..n).filter(|_| q.sample(&0, &mut rng) == 1).count() as f64 / n as f64;
        assert!((ones - 0.8).abs() < 4.0 * (0.16f64 / n as f64).sqrt());
        assert!((q.log_density(&0, &1) - 0.6f64.ln()).abs() < 1e-15);
    }
}
