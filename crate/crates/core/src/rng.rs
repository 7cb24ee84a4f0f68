//! Seedable random streams, categorical draws and multinomial resampling.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
pub use crate::numeric::Simplex;

/// A ChaCha8 stream identified by `(seed, stream_id)`.
///
/// Equal identifiers give bit-identical draw sequences; distinct stream ids
/// select independent ChaCha streams under the same key.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self { seed, stream_id, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }
}

impl RngCore for RngStream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// What a stream is consumed for. Each purpose owns its own stream so adding
/// draws for one purpose never shifts the others.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    /// Particle ancestors and particle propagation.
    Resampling = 0,
    /// Parameter and auxiliary-variable proposals.
    Proposal = 1,
    /// Uniforms for accept/reject decisions.
    Acceptance = 2,
    /// Terminal, backward and parameter-index selections.
    IndexSelection = 3,
    /// Synthetic data generation.
    Data = 4,
}

const PURPOSES: u64 = 8;

/// The per-chain bundle of purpose-specific streams.
#[derive(Debug, Clone)]
pub struct ChainRngs {
    pub particles: RngStream,
    pub proposal: RngStream,
    pub acceptance: RngStream,
    pub index: RngStream,
}

impl ChainRngs {
    pub fn new(seed: u64, chain: u64) -> Self {
        let stream = |p: Purpose| RngStream::new(seed, stream_id(chain, p));
        Self {
            particles: stream(Purpose::Resampling),
            proposal: stream(Purpose::Proposal),
            acceptance: stream(Purpose::Acceptance),
            index: stream(Purpose::IndexSelection),
        }
    }
}

/// Stream id for a `(chain, purpose)` pair.
pub fn stream_id(chain: u64, purpose: Purpose) -> u64 {
    chain.wrapping_mul(PURPOSES).wrapping_add(purpose as u64)
}

/// Draw `i` with probability `w_i` by inverse CDF: the first index whose
/// cumulative sum strictly exceeds a uniform draw.
pub fn sample_categorical<R: Rng + ?Sized>(w: &Simplex, rng: &mut R) -> usize {
    categorical_unchecked(w.probs(), rng)
}

/// [`sample_categorical`] on raw probabilities that the caller guarantees form
/// a simplex.
#[inline]
pub(crate) fn categorical_unchecked<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    for (i, p) in probs.iter().enumerate() {
        cum += p;
        if u < cum {
            return i;
        }
    }
    // rounding left the total just below u
    last_positive(probs)
}

fn last_positive(probs: &[f64]) -> usize {
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}

/// `count` independent draws from `w`.
pub fn multinomial_ancestors<R: Rng + ?Sized>(w: &Simplex, count: usize, rng: &mut R) -> Result<Vec<usize>> {
    if count == 0 {
        return Err(Error::Config("multinomial resampling needs a positive count".into()));
    }
    let mut cumulative = Vec::with_capacity(w.len());
    let mut out = Vec::with_capacity(count);
    multinomial_into(w.probs(), count, rng, &mut cumulative, &mut out);
    Ok(out)
}

/// Multinomial draws into `out` using binary search over the cumulative sums.
/// `cumulative` is scratch space.
pub(crate) fn multinomial_into<R: Rng + ?Sized>(
    probs: &[f64],
    count: usize,
    rng: &mut R,
    cumulative: &mut Vec<f64>,
    out: &mut Vec<usize>,
) {
    cumulative.clear();
    let mut cum = 0.0;
    for p in probs {
        cum += p;
        cumulative.push(cum);
    }
    let fallback = last_positive(probs);
    out.clear();
    for _ in 0..count {
        let u: f64 = rng.random();
        let i = cumulative.partition_point(|&c| c <= u);
        out.push(if i < probs.len() { i } else { fallback });
    }
}
