//! The acceptance-rate-versus-particles grid.

use std::path::Path;

use anyhow::{Context, Result};
use pmcmc::{LinearGaussianSsm, Theta};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, SamplerKind};
use crate::figure;
use crate::run::{run_chain, summarize_output, ChainSpec};

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Chain seed of a cell, a function of the cell's coordinates only.
pub fn cell_seed(base: u64, sampler: SamplerKind, particles: usize, m: usize, replicate: usize) -> u64 {
    let tag = sampler.name().bytes().fold(0u64, |h, b| mix(h ^ b as u64));
    [tag, particles as u64, m as u64, replicate as u64].iter().fold(mix(base), |h, &v| mix(h ^ v))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub sampler: SamplerKind,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub acceptance: f64,
    pub iact_rho: f64,
    pub iact_s2x: f64,
    pub iact_s2y: f64,
    pub ess_min: f64,
    pub wallclock_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub sampler: SamplerKind,
    pub n: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub sampler: SamplerKind,
    pub n: usize,
    pub m: usize,
    pub acceptance_mean: f64,
    pub acceptance_sd: f64,
    pub cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub ideal_mh: f64,
    pub ideal_barker: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub rows: Vec<GridRow>,
    pub aggregates: Vec<Aggregate>,
    pub reference: Option<Reference>,
    pub failures: Vec<CellFailure>,
}

fn cell_m(config: &ExperimentConfig, sampler: SamplerKind) -> usize {
    if sampler == SamplerKind::Mpgibbs {
        config.m_params
    } else {
        1
    }
}

/// Cells in output order: sampler, then particle count, then replicate.
/// Samplers without particles get a single `n = 0` column.
pub fn cells(config: &ExperimentConfig) -> Vec<ChainSpec> {
    let mut out = Vec::new();
    for &sampler in &config.samplers {
        let ns: Vec<usize> = if sampler.uses_particles() { config.n_grid.clone() } else { vec![0] };
        for n in ns {
            for r in 0..config.seeds {
                let seed = cell_seed(config.seed, sampler, n, cell_m(config, sampler), r);
                out.push(ChainSpec { sampler, particles: n, seed });
            }
        }
    }
    out
}

fn run_cell(config: &ExperimentConfig, model: &LinearGaussianSsm, theta: Theta, spec: ChainSpec) -> std::result::Result<GridRow, CellFailure> {
    let summary = run_chain(config, model, theta, spec).and_then(|out| summarize_output(config, spec, &out));
    match summary {
        Ok(s) => Ok(GridRow {
            sampler: spec.sampler,
            n: spec.particles,
            m: cell_m(config, spec.sampler),
            seed: spec.seed,
            acceptance: s.acceptance,
            iact_rho: s.iact[0],
            iact_s2x: s.iact[1],
            iact_s2y: s.iact[2],
            ess_min: s.ess_min,
            wallclock_s: s.wallclock_s,
        }),
        Err(e) => Err(CellFailure { sampler: spec.sampler, n: spec.particles, seed: spec.seed, error: format!("{e:#}") }),
    }
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 { (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    (mean, sd)
}

/// Mean and sd of acceptance across replicates of each `(sampler, n)`,
/// ignoring failed cells.
pub fn aggregate(rows: &[GridRow]) -> Vec<Aggregate> {
    let mut out: Vec<Aggregate> = Vec::new();
    let mut i = 0;
    while i < rows.len() {
        let (sampler, n) = (rows[i].sampler, rows[i].n);
        let j = i + rows[i..].iter().take_while(|r| r.sampler == sampler && r.n == n).count();
        let acc: Vec<f64> = rows[i..j].iter().map(|r| r.acceptance).filter(|a| a.is_finite()).collect();
        if !acc.is_empty() {
            let (acceptance_mean, acceptance_sd) = mean_sd(&acc);
            out.push(Aggregate { sampler, n, m: rows[i].m, acceptance_mean, acceptance_sd, cells: acc.len() });
        }
        i = j;
    }
    out
}

fn failed_row(f: &CellFailure, m: usize) -> GridRow {
    let nan = f64::NAN;
    GridRow {
        sampler: f.sampler,
        n: f.n,
        m,
        seed: f.seed,
        acceptance: nan,
        iact_rho: nan,
        iact_s2x: nan,
        iact_s2y: nan,
        ess_min: nan,
        wallclock_s: nan,
    }
}

/// Run every cell plus the exact-likelihood reference chains. A failing cell
/// yields a row of NaNs and an entry in `failures`.
pub fn run_grid(config: &ExperimentConfig, model: &LinearGaussianSsm, theta: Theta) -> GridResult {
    let mut specs = cells(config);
    let main = specs.len();
    for sampler in [SamplerKind::IdealMh, SamplerKind::IdealBarker] {
        for r in 0..config.seeds {
            specs.push(ChainSpec { sampler, particles: 0, seed: cell_seed(config.seed, sampler, 0, 1, r) });
        }
    }
    let results: Vec<_> = specs.par_iter().map(|&spec| run_cell(config, model, theta, spec)).collect();
    let mut rows = Vec::with_capacity(main);
    let mut failures = Vec::new();
    for result in &results[..main] {
        match result {
            Ok(row) => rows.push(row.clone()),
            Err(f) => {
                rows.push(failed_row(f, cell_m(config, f.sampler)));
                failures.push(f.clone());
            }
        }
    }
    let reference_rate = |k: usize| {
        let acc: Vec<f64> = results[main + k * config.seeds..main + (k + 1) * config.seeds]
            .iter()
            .filter_map(|r| r.as_ref().ok().map(|row| row.acceptance))
            .collect();
        (!acc.is_empty()).then(|| mean_sd(&acc).0)
    };
    let reference = match (reference_rate(0), reference_rate(1)) {
        (Some(ideal_mh), Some(ideal_barker)) => Some(Reference { ideal_mh, ideal_barker }),
        _ => None,
    };
    GridResult { aggregates: aggregate(&rows), rows, reference, failures }
}

pub fn write_rows(rows: &[GridRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<Vec<GridRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    r.deserialize().collect::<std::result::Result<_, _>>().with_context(|| format!("parsing {}", path.display()))
}

#[derive(Serialize)]
pub struct GridReport<'a> {
    pub config: &'a ExperimentConfig,
    pub truth: [f64; 3],
    pub reference: &'a Option<Reference>,
    pub aggregates: &'a [Aggregate],
    pub failures: &'a [CellFailure],
}

/// Write `grid.csv`, `grid_summary.json` and `figure1.svg` into `dir`.
pub fn write_outputs(config: &ExperimentConfig, truth: Theta, result: &GridResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_rows(&result.rows, &dir.join("grid.csv"))?;
    let report = GridReport {
        config,
        truth: truth.to_array(),
        reference: &result.reference,
        aggregates: &result.aggregates,
        failures: &result.failures,
    };
    std::fs::write(dir.join("grid_summary.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    std::fs::write(dir.join("figure1.svg"), figure::render(&result.aggregates, result.reference.as_ref()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_seeds_are_distinct_and_stable() {
        let c = ExperimentConfig::default();
        let specs = cells(&c);
        assert_eq!(specs.len(), 2 * 6 * 3);
        let mut seeds: Vec<u64> = specs.iter().map(|s| s.seed).collect();
        seeds.sort();
        seeds.dedup();
        assert_eq!(seeds.len(), specs.len());
        assert_eq!(cell_seed(1, SamplerKind::Pmmh, 8, 1, 0), cell_seed(1, SamplerKind::Pmmh, 8, 1, 0));
        assert_ne!(cell_seed(1, SamplerKind::Pmmh, 8, 1, 0), cell_seed(2, SamplerKind::Pmmh, 8, 1, 0));
    }

    #[test]
    fn mix_matches_reference_outputs() {
        // first outputs of the SplitMix64 generator seeded with 0
        assert_eq!(mix(0), 0xE220_A839_7B1D_CDAF);
        assert_eq!(mix(0x9E37_79B9_7F4A_7C15), 0x6E78_9E6A_A1B9_65F4);
    }

    #[test]
    fn ideal_samplers_get_one_column() {
        let c = ExperimentConfig { samplers: vec![SamplerKind::IdealMh], seeds: 2, ..Default::default() };
        let specs = cells(&c);
        assert_eq!(specs.len(), 2);
        assert!(specs.iter().all(|s| s.particles == 0));
    }

    #[test]
    fn aggregate_groups_replicates_and_skips_failures() {
        let row = |sampler, n, acceptance| GridRow {
            sampler,
            n,
            m: 1,
            seed: 0,
            acceptance,
            iact_rho: 1.0,
            iact_s2x: 1.0,
            iact_s2y: 1.0,
            ess_min: 1.0,
            wallclock_s: 0.0,
        };
        let rows = vec![
            row(SamplerKind::Pmmh, 8, 0.1),
            row(SamplerKind::Pmmh, 8, 0.3),
            row(SamplerKind::Pmmh, 16, f64::NAN),
            row(SamplerKind::Pmmh, 16, 0.4),
        ];
        let agg = aggregate(&rows);
        assert_eq!(agg.len(), 2);
        assert!((agg[0].acceptance_mean - 0.2).abs() < 1e-15);
        assert!((agg[0].acceptance_sd - 0.02f64.sqrt()).abs() < 1e-15);
        assert_eq!((agg[1].cells, agg[1].acceptance_sd), (1, 0.0));
    }
}
