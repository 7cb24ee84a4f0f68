//! Log-space arithmetic and the probability simplex.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Tolerance on `|Σ p − 1|` accepted by [`Simplex::new`].
pub const SIMPLEX_TOL: f64 = 1e-12;

/// `log Σ exp(v_i)` computed by subtracting the maximum.
///
/// Returns `-inf` when every entry is `-inf`.
pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut acc = LogSumExp::new();
    for &v in values {
        acc.push(v);
    }
    Ok(acc.value())
}

/// Streaming log-sum-exp accumulator.
///
/// Used in hot loops where the summands are produced one at a time and
/// buffering them would cost an allocation.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    scaled: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self::new()
    }
}

impl LogSumExp {
    pub fn new() -> Self {
        Self { max: f64::NEG_INFINITY, scaled: 0.0 }
    }

    #[inline]
    pub fn push(&mut self, v: f64) {
        if v == f64::NEG_INFINITY {
            return;
        }
        if v > self.max {
            self.scaled = self.scaled * (self.max - v).exp() + 1.0;
            self.max = v;
        } else {
            self.scaled += (v - self.max).exp();
        }
    }

    #[inline]
    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.ln()
        }
    }
}

/// Normalize log-weights into a [`Simplex`].
///
/// Fails with [`Error::WeightCollapse`] when no entry exceeds `-inf`.
pub fn normalize_log_weights(logw: &[f64]) -> Result<Simplex> {
    let mut probs = Vec::with_capacity(logw.len());
    normalize_into(logw, &mut probs)?;
    Ok(Simplex(probs))
}

/// Normalize `logw` into `out`, reusing its allocation. Returns the log of the
/// normalizing constant.
pub(crate) fn normalize_into(logw: &[f64], out: &mut Vec<f64>) -> Result<f64> {
    if logw.is_empty() {
        return Err(Error::EmptyInput);
    }
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::WeightCollapse);
    }
    if max.is_nan() || max == f64::INFINITY {
        return Err(Error::InvalidSimplex(format!("log-weight maximum is {max}")));
    }
    out.clear();
    out.extend(logw.iter().map(|&w| (w - max).exp()));
    let total: f64 = out.iter().sum();
    for p in out.iter_mut() {
        *p /= total;
    }
    Ok(max + total.ln())
}

/// A probability vector: nonnegative entries summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Simplex(Vec<f64>);

impl Simplex {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidSimplex(format!("entry {p} is not a probability")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidSimplex(format!("entries sum to {total}")));
        }
        Ok(Self(probs))
    }

    /// Uniform distribution over `n` outcomes.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        Ok(Self(vec![1.0 / n as f64; n]))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for Simplex {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[inline]
pub fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    if var <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln() + d * d / var)
}

/// Inverse-gamma log-density, `b^a / Γ(a) x^{-a-1} exp(-b/x)`.
pub fn inverse_gamma_logpdf(x: f64, shape: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    shape * scale.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - scale / x
}
