//! Chain diagnostics: acceptance rates, integrated autocorrelation time and
//! effective sample size.

use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{Error, Result};

/// Shortest series accepted by [`iact`].
pub const MIN_SERIES_LEN: usize = 100;

/// Fraction of `true` entries after discarding the first `burn_in`.
pub fn acceptance_rate(accepted: &[bool], burn_in: usize) -> Result<f64> {
    let kept = accepted.get(burn_in..).filter(|s| !s.is_empty()).ok_or(Error::EmptyInput)?;
    Ok(kept.iter().filter(|a| **a).count() as f64 / kept.len() as f64)
}

/// Empirical autocorrelations `ρ_0 = 1, ρ_1, …, ρ_{n−1}` via zero-padded FFT.
pub fn autocorrelation(series: &[f64]) -> Result<Vec<f64>> {
    let n = series.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = series.iter().map(|x| Complex::new(x - mean, 0.0)).collect();
    buf.resize(size, Complex::new(0.0, 0.0));
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    let c0 = buf[0].re;
    let scale: f64 = series.iter().map(|x| x * x).sum();
    // rounding in the mean leaves a tiny spread in constant series
    if !(c0 > 1e-300 * n as f64 && c0 > 1e-24 * scale) {
        return Err(Error::ConstantSeries);
    }
    Ok(buf[..n].iter().map(|c| c.re / c0).collect())
}

/// Integrated autocorrelation time `1 + 2 Σ_k ρ_k`, truncated with Geyer's
/// initial positive sequence: sums of consecutive pairs `ρ_{2m} + ρ_{2m+1}`
/// are accumulated while they stay positive.
pub fn iact(series: &[f64]) -> Result<f64> {
    if series.len() < MIN_SERIES_LEN {
        return Err(Error::SeriesTooShort { len: series.len(), min: MIN_SERIES_LEN });
    }
    let rho = autocorrelation(series)?;
    let mut total = 0.0;
    for m in 0..rho.len() / 2 {
        let pair = rho[2 * m] + rho[2 * m + 1];
        if pair <= 0.0 {
            break;
        }
        total += pair;
    }
    // Σ_m Γ_m = ρ_0 + Σ_{k≥1} ρ_k, and IACT = 2 Σ_m Γ_m − ρ_0
    Ok((2.0 * total - 1.0).max(1.0))
}

/// `n / IACT`.
pub fn ess(series: &[f64]) -> Result<f64> {
    Ok(series.len() as f64 / iact(series)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSummary {
    pub acceptance: f64,
    /// Per-coordinate IACT.
    pub iact: Vec<f64>,
    /// Smallest per-coordinate ESS.
    pub ess_min: f64,
}

/// Summarize a chain given per-coordinate series (post burn-in) and the
/// acceptance flags (post burn-in).
pub fn summarize(coordinates: &[Vec<f64>], accepted: &[bool]) -> Result<ChainSummary> {
    let acceptance = acceptance_rate(accepted, 0)?;
    let iact = coordinates.iter().map(|c| iact(c)).collect::<Result<Vec<_>>>()?;
    let ess_min = coordinates
        .iter()
        .zip(&iact)
        .map(|(c, t)| c.len() as f64 / t)
        .fold(f64::INFINITY, f64::min);
    Ok(ChainSummary { acceptance, iact, ess_min })
}
