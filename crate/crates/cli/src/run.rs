//! Single-chain runs: sampler construction, records CSV and summary JSON.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use pmcmc::csmc::CsmcConfig;
use pmcmc::diagnostics::{acceptance_rate, iact, MIN_SERIES_LEN};
use pmcmc::proposal::{GaussianPair, GaussianRandomWalk};
use pmcmc::samplers::{
    BootstrapEstimator, ChainState, IdealChain, IterationRecord, MarginalParticleGibbs, ParticleGibbs, Pmmh, Sampler,
};
use pmcmc::{ChainRngs, LinearGaussianSsm, Theta};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, SamplerKind};

/// What one chain needs beyond the shared config.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainSpec {
    pub sampler: SamplerKind,
    pub particles: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub records: Vec<IterationRecord<Theta>>,
    /// Marginalized updates abandoned because every weight vanished.
    pub collapses: usize,
    pub wallclock_s: f64,
}

fn drive<S: Sampler<Param = Theta>>(sampler: &mut S, theta: Theta, iterations: usize, rngs: &mut ChainRngs) -> Result<Vec<IterationRecord<Theta>>> {
    let mut state: ChainState<Theta> = sampler.init(theta, rngs).context("initializing chain")?;
    let with_index = sampler.reports_index();
    let record = |iter, state: &ChainState<Theta>, accepted| IterationRecord {
        iter,
        theta: state.theta,
        accepted,
        index: with_index.then_some(state.index),
        log_z: state.log_evidence,
    };
    let mut out = Vec::with_capacity(iterations + 1);
    out.push(record(0, &state, false));
    for iter in 1..=iterations {
        let accepted = sampler.step(&mut state, rngs).with_context(|| format!("iteration {iter}"))?;
        out.push(record(iter, &state, accepted));
    }
    Ok(out)
}

pub fn run_chain(config: &ExperimentConfig, model: &LinearGaussianSsm, theta: Theta, spec: ChainSpec) -> Result<ChainOutput> {
    let start = Instant::now();
    let mut rngs = ChainRngs::new(spec.seed, 0);
    let walk = GaussianRandomWalk::isotropic(config.tau)?;
    let csmc = || -> Result<CsmcConfig> {
        Ok(CsmcConfig::new(spec.particles)?
            .with_backward_sampling(config.backward_sampling)
            .with_terminal_selection(config.terminal_selection.into()))
    };
    let iterations = config.iterations;
    let mut collapses = 0;
    let records = match spec.sampler {
        SamplerKind::Pmmh => {
            if spec.particles == 0 {
                bail!("pmmh needs at least one particle");
            }
            let mut s = Pmmh::new(model, walk, BootstrapEstimator { particles: spec.particles });
            drive(&mut s, theta, iterations, &mut rngs)?
        }
        SamplerKind::Pgibbs => drive(&mut ParticleGibbs::new(model, walk, csmc()?), theta, iterations, &mut rngs)?,
        SamplerKind::Mpgibbs => {
            let pair = GaussianPair::symmetric(config.tau, [1.0; 3])?;
            let mut s = MarginalParticleGibbs::new(model, pair, config.m_params, csmc()?, config.variant.into())?;
            let records = drive(&mut s, theta, iterations, &mut rngs)?;
            collapses = s.collapses;
            records
        }
        SamplerKind::IdealMh => drive(&mut IdealChain::metropolis(model, walk), theta, iterations, &mut rngs)?,
        SamplerKind::IdealBarker => drive(&mut IdealChain::barker(model, walk), theta, iterations, &mut rngs)?,
    };
    Ok(ChainOutput { records, collapses, wallclock_s: start.elapsed().as_secs_f64() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordRow {
    pub iter: usize,
    pub rho: f64,
    pub sigma2_x: f64,
    pub sigma2_y: f64,
    pub accepted: u8,
    pub l: Option<usize>,
    pub logz_or_nan: f64,
}

impl From<&IterationRecord<Theta>> for RecordRow {
    fn from(r: &IterationRecord<Theta>) -> Self {
        Self {
            iter: r.iter,
            rho: r.theta.rho,
            sigma2_x: r.theta.sigma2_x,
            sigma2_y: r.theta.sigma2_y,
            accepted: r.accepted as u8,
            l: r.index,
            logz_or_nan: r.log_z.unwrap_or(f64::NAN),
        }
    }
}

pub fn write_records<W: Write>(records: &[IterationRecord<Theta>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(RecordRow::from(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<RecordRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    r.deserialize().collect::<std::result::Result<_, _>>().with_context(|| format!("parsing {}", path.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub sampler: Option<String>,
    pub particles: Option<usize>,
    pub m_params: Option<usize>,
    pub seed: Option<u64>,
    pub iterations: usize,
    pub burn_in: usize,
    pub acceptance: f64,
    /// Per-coordinate IACT of `(rho, sigma2_x, sigma2_y)`; `null` when undefined.
    pub iact: [f64; 3],
    pub ess_min: f64,
    pub mean: [f64; 3],
    pub variance: [f64; 3],
    pub collapses: usize,
    pub wallclock_s: f64,
}

/// Post-burn-in statistics of the records. Record 0 is the start state and
/// never counts.
pub fn summarize(rows: &[RecordRow], burn_in: usize) -> Result<Summary> {
    if rows.len() < 2 {
        bail!("need at least one transition");
    }
    let accepted: Vec<bool> = rows[1..].iter().map(|r| r.accepted == 1).collect();
    let acceptance = acceptance_rate(&accepted, burn_in).map_err(|e| anyhow!("acceptance rate: {e}"))?;
    let kept = &rows[1 + burn_in..];
    let coords: [Vec<f64>; 3] = [
        kept.iter().map(|r| r.rho).collect(),
        kept.iter().map(|r| r.sigma2_x).collect(),
        kept.iter().map(|r| r.sigma2_y).collect(),
    ];
    let n = kept.len() as f64;
    let mean = coords.each_ref().map(|c| c.iter().sum::<f64>() / n);
    let variance = [0, 1, 2].map(|i| coords[i].iter().map(|v| (v - mean[i]).powi(2)).sum::<f64>() / n);
    // a constant or short series has no IACT
    let iact = coords.each_ref().map(|c| if c.len() >= MIN_SERIES_LEN { iact(c).unwrap_or(f64::NAN) } else { f64::NAN });
    let ess_min = iact.iter().map(|t| n / t).fold(f64::INFINITY, f64::min);
    Ok(Summary {
        sampler: None,
        particles: None,
        m_params: None,
        seed: None,
        iterations: rows.len() - 1,
        burn_in,
        acceptance,
        iact,
        ess_min: if ess_min.is_finite() { ess_min } else { f64::NAN },
        mean,
        variance,
        collapses: 0,
        wallclock_s: 0.0,
    })
}

pub fn summarize_output(config: &ExperimentConfig, spec: ChainSpec, output: &ChainOutput) -> Result<Summary> {
    let rows: Vec<RecordRow> = output.records.iter().map(RecordRow::from).collect();
    let mut s = summarize(&rows, config.burn_in)?;
    s.sampler = Some(spec.sampler.name().to_string());
    s.particles = spec.sampler.uses_particles().then_some(spec.particles);
    s.m_params = (spec.sampler == SamplerKind::Mpgibbs).then_some(config.m_params);
    s.seed = Some(spec.seed);
    s.collapses = output.collapses;
    s.wallclock_s = output.wallclock_s;
    Ok(s)
}
