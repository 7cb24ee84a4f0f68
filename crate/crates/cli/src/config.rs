//! Experiment configuration, loaded from JSON and overridden by flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use pmcmc::csmc::TerminalSelection;
use pmcmc::marginal::MixtureVariant;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    Pmmh,
    Pgibbs,
    Mpgibbs,
    IdealMh,
    IdealBarker,
}

impl SamplerKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Pmmh => "pmmh",
            Self::Pgibbs => "pgibbs",
            Self::Mpgibbs => "mpgibbs",
            Self::IdealMh => "ideal-mh",
            Self::IdealBarker => "ideal-barker",
        }
    }

    pub fn uses_particles(self) -> bool {
        !matches!(self, Self::IdealMh | Self::IdealBarker)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Prior,
    #[default]
    Posterior,
    ClosedForm,
}

impl From<Variant> for MixtureVariant {
    fn from(v: Variant) -> Self {
        match v {
            Variant::Prior => MixtureVariant::PriorMixture,
            Variant::Posterior => MixtureVariant::PosteriorMixture,
            Variant::ClosedForm => MixtureVariant::ClosedFormPriorMixture,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    #[default]
    Categorical,
    ForcedMove,
    MetropolisedForcedMove,
}

impl From<Selection> for TerminalSelection {
    fn from(s: Selection) -> Self {
        match s {
            Selection::Categorical => TerminalSelection::StandardCategorical,
            Selection::ForcedMove => TerminalSelection::RatioForcedMove,
            Selection::MetropolisedForcedMove => TerminalSelection::MetropolisedForcedMove,
        }
    }
}

/// Data-generating parameter. `sigma2_y = None` draws it from the
/// `IG(2, 2)` prior using the data seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthConfig {
    pub rho: f64,
    pub sigma2_x: f64,
    pub sigma2_y: Option<f64>,
}

impl Default for TruthConfig {
    fn default() -> Self {
        Self { rho: 0.9, sigma2_x: 0.01, sigma2_y: None }
    }
}

pub const FULL_ITERATIONS: usize = 100_000;
pub const FULL_BURN_IN: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub truth: TruthConfig,
    /// Index of the last observation; the series has `horizon + 1` points.
    pub horizon: usize,
    pub data_seed: u64,
    /// Observations CSV to use instead of simulating from `truth`.
    pub data: Option<PathBuf>,
    /// Starting parameter `[rho, sigma2_x, sigma2_y]`; defaults to the truth.
    pub initial_theta: Option<[f64; 3]>,
    /// Sampler for `run`.
    pub sampler: SamplerKind,
    /// Samplers compared by `grid`.
    pub samplers: Vec<SamplerKind>,
    /// Particle count for `run`.
    pub n_particles: usize,
    /// Particle counts for `grid`.
    pub n_grid: Vec<usize>,
    pub m_params: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Independent chains per grid cell.
    pub seeds: usize,
    /// Random-walk proposal variance on each coordinate.
    pub tau: f64,
    pub variant: Variant,
    pub terminal_selection: Selection,
    pub backward_sampling: bool,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            truth: TruthConfig::default(),
            horizon: 99,
            data_seed: 2,
            data: None,
            initial_theta: None,
            sampler: SamplerKind::Mpgibbs,
            samplers: vec![SamplerKind::Pmmh, SamplerKind::Mpgibbs],
            n_particles: 64,
            n_grid: vec![8, 16, 32, 64, 128, 256],
            m_params: 2,
            iterations: 20_000,
            burn_in: 2_000,
            seed: 1,
            seeds: 3,
            tau: 0.15 * 0.15,
            variant: Variant::default(),
            terminal_selection: Selection::default(),
            backward_sampling: true,
            out: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn full_scale(&mut self) {
        self.iterations = FULL_ITERATIONS;
        self.burn_in = FULL_BURN_IN;
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.truth;
        if !(t.rho.abs() <= 1.0) {
            bail!("truth.rho must lie in [-1, 1], got {}", t.rho);
        }
        if !(t.sigma2_x > 0.0 && t.sigma2_x.is_finite()) {
            bail!("truth.sigma2_x must be positive, got {}", t.sigma2_x);
        }
        if let Some(s) = t.sigma2_y {
            if !(s > 0.0 && s.is_finite()) {
                bail!("truth.sigma2_y must be positive, got {s}");
            }
        }
        if self.iterations == 0 {
            bail!("iterations must be positive");
        }
        if self.burn_in >= self.iterations {
            bail!("burn_in ({}) must be smaller than iterations ({})", self.burn_in, self.iterations);
        }
        if self.n_particles == 0 || self.n_grid.iter().any(|&n| n == 0) {
            bail!("particle counts must be positive");
        }
        if self.m_params == 0 {
            bail!("m_params must be positive");
        }
        if self.seeds == 0 {
            bail!("seeds must be positive");
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            bail!("tau must be positive, got {}", self.tau);
        }
        if let Some(theta) = self.initial_theta {
            if theta.iter().any(|v| !v.is_finite()) {
                bail!("initial_theta must be finite");
            }
        }
        Ok(())
    }
}
