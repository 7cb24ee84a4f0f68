use clap::Parser;
use pmcmc_cli::cli::{main_with, Cli};

fn main() -> anyhow::Result<()> {
    main_with(Cli::parse())
}
