//! Synthetic observations: simulation, CSV storage and the JSON sidecar.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pmcmc::model::{PRIOR_IG_SCALE, PRIOR_IG_SHAPE};
use pmcmc::{InitialDistribution, LinearGaussianSsm, RngStream, Theta};
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

const OBSERVATION_STREAM: u64 = 4;
const NOISE_PRIOR_STREAM: u64 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub rho: f64,
    pub sigma2_x: f64,
    pub sigma2_y: f64,
    /// Whether `sigma2_y` was drawn from its prior.
    pub sigma2_y_drawn: bool,
    pub seed: u64,
    pub horizon: usize,
}

impl Sidecar {
    pub fn theta(&self) -> Theta {
        Theta::new(self.rho, self.sigma2_x, self.sigma2_y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub observations: Vec<f64>,
    pub sidecar: Option<Sidecar>,
}

/// The data-generating parameter, drawing `σ²_Y ~ IG(2, 2)` when unset.
pub fn resolve_truth(config: &ExperimentConfig) -> Result<(Theta, bool)> {
    config.validate()?;
    let t = config.truth;
    match t.sigma2_y {
        Some(s) => Ok((Theta::new(t.rho, t.sigma2_x, s), false)),
        None => {
            let gamma = Gamma::new(PRIOR_IG_SHAPE, 1.0).expect("valid shape");
            let g: f64 = gamma.sample(&mut RngStream::new(config.data_seed, NOISE_PRIOR_STREAM));
            Ok((Theta::new(t.rho, t.sigma2_x, PRIOR_IG_SCALE / g), true))
        }
    }
}

pub fn simulate(config: &ExperimentConfig) -> Result<Dataset> {
    let (theta, drawn) = resolve_truth(config)?;
    let mut rng = RngStream::new(config.data_seed, OBSERVATION_STREAM);
    let (_, ys) = LinearGaussianSsm::simulate(&theta, config.horizon, InitialDistribution::Stationary, &mut rng)?;
    let sidecar = Sidecar {
        rho: theta.rho,
        sigma2_x: theta.sigma2_x,
        sigma2_y: theta.sigma2_y,
        sigma2_y_drawn: drawn,
        seed: config.data_seed,
        horizon: config.horizon,
    };
    Ok(Dataset { observations: ys, sidecar: Some(sidecar) })
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

#[derive(Serialize, Deserialize)]
struct Row {
    t: usize,
    y: f64,
}

pub fn write(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for (t, &y) in dataset.observations.iter().enumerate() {
        w.serialize(Row { t, y })?;
    }
    w.flush()?;
    if let Some(sidecar) = &dataset.sidecar {
        let side = sidecar_path(path);
        std::fs::write(&side, serde_json::to_string_pretty(sidecar)? + "\n")
            .with_context(|| format!("writing {}", side.display()))?;
    }
    Ok(())
}

/// Load `t,y` rows; `t` must run `0, 1, 2, …`. The sidecar is read when present.
pub fn load(path: &Path) -> Result<Dataset> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut observations = Vec::new();
    for (i, row) in r.deserialize::<Row>().enumerate() {
        let row = row.with_context(|| format!("{}: row {}", path.display(), i + 1))?;
        if row.t != i {
            bail!("{}: expected t = {i}, found {}", path.display(), row.t);
        }
        observations.push(row.y);
    }
    if observations.is_empty() {
        bail!("{}: no observations", path.display());
    }
    let side = sidecar_path(path);
    let sidecar = if side.exists() {
        let text = std::fs::read_to_string(&side)?;
        Some(serde_json::from_str(&text).with_context(|| format!("parsing {}", side.display()))?)
    } else {
        None
    };
    Ok(Dataset { observations, sidecar })
}

/// The configured data file, or a fresh simulation from the truth.
pub fn obtain(config: &ExperimentConfig) -> Result<Dataset> {
    match &config.data {
        Some(path) => load(path),
        None => simulate(config),
    }
}

/// Chain starting point: the configured value, else the data-generating truth.
pub fn initial_theta(config: &ExperimentConfig, dataset: &Dataset) -> Result<Theta> {
    let theta = match (config.initial_theta, &dataset.sidecar) {
        (Some(a), _) => Theta::from_array(a),
        (None, Some(s)) => s.theta(),
        (None, None) => resolve_truth(config)?.0,
    };
    if !theta.in_support() {
        bail!("initial parameter {theta:?} lies outside the prior support");
    }
    Ok(theta)
}
