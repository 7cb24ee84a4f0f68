//! Command-line parsing and the subcommand drivers.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{ArgAction, Args, Parser, Subcommand};
use pmcmc::LinearGaussianSsm;

use crate::config::{ExperimentConfig, SamplerKind, Selection, Variant};
use crate::grid::{self, Reference};
use crate::{data, figure, run};

#[derive(Debug, Parser)]
#[command(name = "pmcmc", version, about = "Particle MCMC experiments on a linear-Gaussian state-space model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate observations and write `data.csv` with a `data.json` sidecar.
    GenerateData(Overrides),
    /// Run one sampler and write `records.csv` and `summary.json`.
    Run(Overrides),
    /// Run the acceptance-rate grid and write `grid.csv`, `grid_summary.json` and `figure1.svg`.
    Grid(Overrides),
    /// Summarize a records CSV, or re-aggregate a grid CSV and redraw its figure.
    Analyze {
        /// Records or grid CSV.
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// JSON config; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Sampler, or a comma-separated list for `grid`.
    #[arg(long, value_delimiter = ',')]
    pub sampler: Option<Vec<SamplerKind>>,
    /// Particle count, or a comma-separated list for `grid`.
    #[arg(long, value_delimiter = ',')]
    pub n_particles: Option<Vec<usize>>,
    #[arg(long)]
    pub m_params: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Chain seed; for `generate-data`, the data seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub data_seed: Option<u64>,
    /// Replicate chains per grid cell.
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Observations CSV to use instead of simulating.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long, value_enum)]
    pub variant: Option<Variant>,
    #[arg(long, value_enum)]
    pub terminal_selection: Option<Selection>,
    #[arg(long, action = ArgAction::Set)]
    pub backward_sampling: Option<bool>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// 10^5 iterations with 10^4 burn-in.
    #[arg(long)]
    pub full_scale: bool,
}

impl Overrides {
    /// Config file (or defaults) with flags applied, validated.
    pub fn resolve(&self, data_command: bool) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if self.full_scale {
            c.full_scale();
        }
        if let Some(s) = &self.sampler {
            match s.as_slice() {
                [one] => {
                    c.sampler = *one;
                    c.samplers = vec![*one];
                }
                many => c.samplers = many.to_vec(),
            }
        }
        if let Some(n) = &self.n_particles {
            match n.as_slice() {
                [one] => {
                    c.n_particles = *one;
                    c.n_grid = vec![*one];
                }
                many => c.n_grid = many.to_vec(),
            }
        }
        macro_rules! set {
            ($($field:ident),*) => { $(if let Some(v) = self.$field.clone() { c.$field = v; })* };
        }
        set!(m_params, iterations, burn_in, data_seed, seeds, horizon, tau, variant, terminal_selection, backward_sampling, out);
        if let Some(seed) = self.seed {
            if data_command {
                c.data_seed = seed;
            } else {
                c.seed = seed;
            }
        }
        if self.data.is_some() {
            c.data = self.data.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn generate_data(config: &ExperimentConfig) -> Result<PathBuf> {
    let dataset = data::simulate(config)?;
    create_dir(&config.out)?;
    let path = config.out.join("data.csv");
    data::write(&dataset, &path)?;
    Ok(path)
}

fn model_and_start(config: &ExperimentConfig) -> Result<(LinearGaussianSsm, pmcmc::Theta)> {
    let dataset = data::obtain(config)?;
    let theta = data::initial_theta(config, &dataset)?;
    Ok((LinearGaussianSsm::new(dataset.observations)?, theta))
}

pub fn run_sampler(config: &ExperimentConfig) -> Result<run::Summary> {
    let (model, theta) = model_and_start(config)?;
    let spec = run::ChainSpec { sampler: config.sampler, particles: config.n_particles, seed: config.seed };
    let output = run::run_chain(config, &model, theta, spec).with_context(|| format!("running {}", config.sampler.name()))?;
    let summary = run::summarize_output(config, spec, &output)?;
    create_dir(&config.out)?;
    let records = config.out.join("records.csv");
    run::write_records(&output.records, BufWriter::new(File::create(&records)?))?;
    write_json(&summary, &config.out.join("summary.json"))?;
    Ok(summary)
}

pub fn run_grid(config: &ExperimentConfig) -> Result<grid::GridResult> {
    let (model, theta) = model_and_start(config)?;
    let result = grid::run_grid(config, &model, theta);
    grid::write_outputs(config, theta, &result, &config.out)?;
    Ok(result)
}

fn is_grid_csv(path: &Path) -> Result<bool> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(r.headers()?.get(0) == Some("sampler"))
}

/// Records input: writes `summary.json`. Grid input: writes
/// `grid_summary.json` and `figure1.svg`, taking reference rates from a
/// `grid_summary.json` beside the input when present.
pub fn analyze(input: &Path, config: &ExperimentConfig) -> Result<()> {
    create_dir(&config.out)?;
    if is_grid_csv(input)? {
        let rows = grid::read_rows(input)?;
        let aggregates = grid::aggregate(&rows);
        let beside = input.with_file_name("grid_summary.json");
        let reference: Option<Reference> = if beside.exists() {
            let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&beside)?)?;
            serde_json::from_value(v["reference"].clone()).ok()
        } else {
            None
        };
        std::fs::write(config.out.join("figure1.svg"), figure::render(&aggregates, reference.as_ref()))?;
        #[derive(serde::Serialize)]
        struct Analysis<'a> {
            reference: &'a Option<Reference>,
            aggregates: &'a [grid::Aggregate],
        }
        write_json(&Analysis { reference: &reference, aggregates: &aggregates }, &config.out.join("grid_summary.json"))?;
    } else {
        let rows = run::read_records(input)?;
        if config.burn_in >= rows.len().saturating_sub(1) {
            bail!("burn-in {} leaves no iterations out of {}", config.burn_in, rows.len().saturating_sub(1));
        }
        let summary = run::summarize(&rows, config.burn_in)?;
        write_json(&summary, &config.out.join("summary.json"))?;
    }
    Ok(())
}

pub fn main_with(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenerateData(o) => {
            let c = o.resolve(true)?;
            let path = generate_data(&c)?;
            eprintln!("wrote {}", path.display());
        }
        Command::Run(o) => {
            let c = o.resolve(false)?;
            let s = run_sampler(&c)?;
            eprintln!("{}: acceptance {:.4}, min ESS {:.1}, wrote {}", c.sampler.name(), s.acceptance, s.ess_min, c.out.display());
        }
        Command::Grid(o) => {
            let c = o.resolve(false)?;
            let r = run_grid(&c)?;
            for a in &r.aggregates {
                eprintln!("{:<12} N={:<4} acceptance {:.3} ± {:.3}", a.sampler.name(), a.n, a.acceptance_mean, a.acceptance_sd);
            }
            if let Some(reference) = &r.reference {
                eprintln!("ideal MH {:.3}, ideal Barker {:.3}", reference.ideal_mh, reference.ideal_barker);
            }
            for f in &r.failures {
                eprintln!("cell {} N={} seed {} failed: {}", f.sampler.name(), f.n, f.seed, f.error);
            }
        }
        Command::Analyze { input, overrides } => {
            let c = overrides.resolve(false)?;
            analyze(&input, &c)?;
            eprintln!("wrote {}", c.out.display());
        }
    }
    Ok(())
}

