//! Exact transition matrices of particle MCMC kernels on tiny discrete
//! problems, computed by enumerating every particle system.
//!
//! Everything here works on the natural probability scale with full path
//! densities; nothing is shared with the production implementation.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Tables of a discrete hidden Markov model at one parameter value.
#[derive(Debug, Clone, PartialEq)]
pub struct Tables {
    pub initial: Vec<f64>,
    pub transition: Vec<Vec<f64>>,
    /// `emission[t][x]`.
    pub emission: Vec<Vec<f64>>,
    /// Optional bivariate potential `coupling[x_{t−1}][x_t]` for `t ≥ 1`.
    pub coupling: Option<Vec<Vec<f64>>>,
}

impl Tables {
    /// Probability of the transition into the last state of `path`.
    fn step(&self, path: &[usize]) -> f64 {
        let t = path.len() - 1;
        let x = path[t];
        if t == 0 {
            self.initial[x]
        } else {
            self.transition[path[t - 1]][x]
        }
    }

    fn potential(&self, path: &[usize]) -> f64 {
        let t = path.len() - 1;
        let x = path[t];
        let mut g = self.emission[t][x];
        if let (Some(c), true) = (&self.coupling, t > 0) {
            g *= c[path[t - 1]][x];
        }
        g
    }

    /// `γ_t(x_{0:t})`; 1 for the empty path.
    pub fn gamma(&self, path: &[usize]) -> f64 {
        (1..=path.len()).map(|s| self.step(&path[..s]) * self.potential(&path[..s])).product()
    }

    fn transition_row(&self, parent: &[usize]) -> Vec<f64> {
        match parent.last() {
            None => self.initial.clone(),
            Some(&p) => self.transition[p].clone(),
        }
    }
}

/// A sequence of path densities with the proposals used to extend particles.
pub trait OracleTarget {
    fn states(&self) -> usize;
    fn horizon(&self) -> usize;
    /// `γ_t(x_{0:t})` with `t = path.len() − 1`; 1 for the empty path.
    fn gamma(&self, path: &[usize]) -> f64;
    /// `q_t(· | x_{0:t−1})`; `parent` is empty at `t = 0`.
    fn proposal(&self, parent: &[usize]) -> Vec<f64>;
}

/// The path posterior at a fixed parameter with bootstrap proposals.
pub struct FixedTarget<'a> {
    pub tables: &'a Tables,
    pub horizon: usize,
}

impl OracleTarget for FixedTarget<'_> {
    fn states(&self) -> usize {
        self.tables.initial.len()
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn gamma(&self, path: &[usize]) -> f64 {
        self.tables.gamma(path)
    }

    fn proposal(&self, parent: &[usize]) -> Vec<f64> {
        self.tables.transition_row(parent)
    }
}

/// `γ_t(x) = Σ_l w_l γ_t(x | θ^l)` with a prior- or posterior-weighted
/// mixture of transitions as proposal.
pub struct MixtureTarget<'a> {
    pub components: Vec<&'a Tables>,
    pub weights: Vec<f64>,
    pub posterior_weighted: bool,
    pub horizon: usize,
}

impl OracleTarget for MixtureTarget<'_> {
    fn states(&self) -> usize {
        self.components[0].initial.len()
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn gamma(&self, path: &[usize]) -> f64 {
        self.components.iter().zip(&self.weights).map(|(c, w)| w * c.gamma(path)).sum()
    }

    fn proposal(&self, parent: &[usize]) -> Vec<f64> {
        let mix: Vec<f64> = self
            .components
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| if self.posterior_weighted { w * c.gamma(parent) } else { *w })
            .collect();
        let total: f64 = mix.iter().sum();
        let mut out = vec![0.0; self.states()];
        for (c, m) in self.components.iter().zip(&mix) {
            for (o, p) in out.iter_mut().zip(c.transition_row(parent)) {
                *o += m / total * p;
            }
        }
        out
    }
}

/// Terminal particle selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    Categorical,
    /// Propose `k ≠ 0 ∝ W^k`, accept with `min(1, W^0 / W^k)`.
    ForcedRatio,
    /// Propose `k ≠ 0 ∝ W^k`, accept with `min(1, (1 − W^0) / (1 − W^k))`.
    ForcedMetropolis,
}

fn selection_law(w: &[f64], rule: Selection) -> Vec<f64> {
    match rule {
        Selection::Categorical => w.to_vec(),
        Selection::ForcedRatio | Selection::ForcedMetropolis => {
            let others: f64 = w[1..].iter().sum();
            let mut out = vec![0.0; w.len()];
            if others <= 0.0 {
                out[0] = 1.0;
                return out;
            }
            for k in 1..w.len() {
                let accept = match rule {
                    Selection::ForcedRatio => (w[0] / w[k]).min(1.0),
                    _ => ((1.0 - w[0]) / (1.0 - w[k])).min(1.0),
                };
                out[k] = w[k] / others * accept;
            }
            out[0] = 1.0 - out[1..].iter().sum::<f64>();
            out
        }
    }
}

/// Index of a path `x_{0:T}` in base `k`.
pub fn encode(path: &[usize], k: usize) -> usize {
    path.iter().fold(0, |acc, &x| acc * k + x)
}

pub fn decode(mut code: usize, k: usize, len: usize) -> Vec<usize> {
    let mut path = vec![0; len];
    for slot in path.iter_mut().rev() {
        *slot = code % k;
        code /= k;
    }
    path
}

/// All `k^len` tuples.
fn tuples(k: usize, len: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..k.pow(len as u32)).map(move |c| decode(c, k, len))
}

/// One step of an enumerated particle system.
struct Layer {
    /// Full lineage of each particle.
    lineages: Vec<Vec<usize>>,
    weights: Vec<f64>,
}

fn normalized_weights<T: OracleTarget>(target: &T, lineages: &[Vec<usize>]) -> Option<Vec<f64>> {
    let raw: Vec<f64> = lineages
        .iter()
        .map(|path| {
            let parent = &path[..path.len() - 1];
            let q = target.proposal(parent)[path[path.len() - 1]];
            let g = target.gamma(path);
            if g == 0.0 {
                0.0
            } else {
                g / (target.gamma(parent) * q)
            }
        })
        .collect();
    let total: f64 = raw.iter().sum();
    (total > 0.0).then(|| raw.iter().map(|w| w / total).collect())
}

/// Row `P(reference → ·)` of the conditional SMC kernel over paths encoded
/// with [`encode`]. Systems whose weights all vanish are dropped, so the row
/// sums to less than one if a collapse is possible.
pub fn csmc_row<T: OracleTarget>(
    target: &T,
    reference: &[usize],
    particles: usize,
    backward: bool,
    rule: Selection,
) -> Vec<f64> {
    let k = target.states();
    let horizon = target.horizon();
    assert_eq!(reference.len(), horizon + 1);
    let mut row = vec![0.0; k.pow(horizon as u32 + 1)];
    let mut layers = Vec::with_capacity(horizon + 1);
    expand(target, reference, particles, backward, rule, &mut layers, 1.0, &mut row);
    row
}

#[allow(clippy::too_many_arguments)]
fn expand<T: OracleTarget>(
    target: &T,
    reference: &[usize],
    n: usize,
    backward: bool,
    rule: Selection,
    layers: &mut Vec<Layer>,
    prob: f64,
    row: &mut [f64],
) {
    let t = layers.len();
    let horizon = target.horizon();
    if t > horizon {
        finish(target, n, backward, rule, layers, prob, row);
        return;
    }
    let k = target.states();
    // each free particle picks (ancestor, state)
    let choices = if t == 0 { k } else { n * k };
    for combo in tuples(choices, n - 1) {
        let mut p = prob;
        let mut lineages = Vec::with_capacity(n);
        lineages.push(reference[..=t].to_vec());
        for &c in &combo {
            let (a, x) = (c / k, c % k);
            let mut lineage = if t == 0 { Vec::new() } else { layers[t - 1].lineages[a].clone() };
            if t > 0 {
                p *= layers[t - 1].weights[a];
            }
            p *= target.proposal(&lineage)[x];
            lineage.push(x);
            lineages.push(lineage);
        }
        if p == 0.0 {
            continue;
        }
        let Some(weights) = normalized_weights(target, &lineages) else {
            continue;
        };
        layers.push(Layer { lineages, weights });
        expand(target, reference, n, backward, rule, layers, p, row);
        layers.pop();
    }
}

fn finish<T: OracleTarget>(
    target: &T,
    n: usize,
    backward: bool,
    rule: Selection,
    layers: &[Layer],
    prob: f64,
    row: &mut [f64],
) {
    let k = target.states();
    let horizon = target.horizon();
    let law = selection_law(&layers[horizon].weights, rule);
    for (j, pj) in law.iter().enumerate() {
        if *pj == 0.0 {
            continue;
        }
        let end = &layers[horizon].lineages[j];
        if backward {
            let tail = vec![end[horizon]];
            backward_paths(target, n, layers, horizon, tail, prob * pj, row);
        } else {
            row[encode(end, k)] += prob * pj;
        }
    }
}

/// `tail` holds `x_{t:T}` chosen so far; pick the state at `t − 1`.
fn backward_paths<T: OracleTarget>(
    target: &T,
    n: usize,
    layers: &[Layer],
    t: usize,
    tail: Vec<usize>,
    prob: f64,
    row: &mut [f64],
) {
    let k = target.states();
    if t == 0 {
        row[encode(&tail, k)] += prob;
        return;
    }
    let layer = &layers[t - 1];
    let scores: Vec<f64> = (0..n)
        .map(|i| {
            let prefix = &layer.lineages[i];
            let g = target.gamma(prefix);
            if layer.weights[i] == 0.0 || g == 0.0 {
                return 0.0;
            }
            let mut joined = prefix.clone();
            joined.extend_from_slice(&tail);
            layer.weights[i] * target.gamma(&joined) / g
        })
        .collect();
    let total: f64 = scores.iter().sum();
    assert!(total > 0.0, "backward weights vanish");
    for (i, s) in scores.iter().enumerate() {
        if *s == 0.0 {
            continue;
        }
        let mut next = vec![layer.lineages[i][t - 1]];
        next.extend_from_slice(&tail);
        backward_paths(target, n, layers, t - 1, next, prob * s / total, row);
    }
}

/// Full CSMC transition matrix over all paths.
pub fn csmc_matrix<T: OracleTarget>(target: &T, particles: usize, backward: bool, rule: Selection) -> Vec<Vec<f64>> {
    let k = target.states();
    let len = target.horizon() + 1;
    tuples(k, len).map(|r| csmc_row(target, &r, particles, backward, rule)).collect()
}

/// `π(x) ∝ γ_T(x)` over all paths.
pub fn path_posterior<T: OracleTarget>(target: &T) -> Vec<f64> {
    let k = target.states();
    let raw: Vec<f64> = tuples(k, target.horizon() + 1).map(|p| target.gamma(&p)).collect();
    normalize(&raw)
}

pub fn normalize(v: &[f64]) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    v.iter().map(|x| x / total).collect()
}

fn flow_gaps<'a>(pi: &'a [f64], matrix: &'a [Vec<f64>]) -> impl Iterator<Item = f64> + 'a {
    (0..pi.len()).map(move |j| {
        let flow: f64 = pi.iter().zip(matrix).map(|(p, row)| p * row[j]).sum();
        (flow - pi[j]).abs()
    })
}

/// `max_j |(π P)_j − π_j|`.
pub fn stationarity_error(pi: &[f64], matrix: &[Vec<f64>]) -> f64 {
    flow_gaps(pi, matrix).fold(0.0, f64::max)
}

/// `‖π P − π‖_TV = ½ Σ_j |(π P)_j − π_j|`.
pub fn total_variation_error(pi: &[f64], matrix: &[Vec<f64>]) -> f64 {
    0.5 * flow_gaps(pi, matrix).sum::<f64>()
}

/// A two-stage proposal on a parameter grid: `u ~ aux[θ]`, `θ' ~ param[u]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPairTables {
    /// `G × U`.
    pub aux: Vec<Vec<f64>>,
    /// `U × G`.
    pub param: Vec<Vec<f64>>,
}

/// Settings of the marginalized particle Gibbs oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MarginalSettings {
    pub candidates: usize,
    pub particles: usize,
    pub backward: bool,
    pub posterior_weighted: bool,
    pub selection: Selection,
}

/// Joint states `(θ, x)` are encoded as `θ · K^{T+1} + path`.
pub struct JointSpace {
    pub grid: usize,
    pub paths: usize,
}

impl JointSpace {
    pub fn encode(&self, theta: usize, path_code: usize) -> usize {
        theta * self.paths + path_code
    }

    pub fn size(&self) -> usize {
        self.grid * self.paths
    }
}

/// Row of the marginalized particle Gibbs kernel from `(theta, reference)`,
/// with the current parameter in slot 0.
pub fn marginal_gibbs_row(
    models: &[Tables],
    prior: &[f64],
    pair: &GridPairTables,
    horizon: usize,
    settings: MarginalSettings,
    theta: usize,
    reference: &[usize],
) -> Vec<f64> {
    let k = models[0].initial.len();
    let space = JointSpace { grid: models.len(), paths: k.pow(horizon as u32 + 1) };
    let mut row = vec![0.0; space.size()];
    let m = settings.candidates;
    for (u, qu) in pair.aux[theta].iter().enumerate() {
        if *qu == 0.0 {
            continue;
        }
        for others in tuples(models.len(), m - 1) {
            let mut candidates = vec![theta];
            candidates.extend_from_slice(&others);
            let p_others: f64 = others.iter().map(|&g| pair.param[u][g]).product();
            if p_others == 0.0 {
                continue;
            }
            let weights: Vec<f64> = (0..m)
                .map(|l| {
                    let rest: f64 = (0..m).filter(|&j| j != l).map(|j| pair.param[u][candidates[j]]).product();
                    prior[candidates[l]] * pair.aux[candidates[l]][u] * rest
                })
                .collect();
            let target = MixtureTarget {
                components: candidates.iter().map(|&g| &models[g]).collect(),
                weights: weights.clone(),
                posterior_weighted: settings.posterior_weighted,
                horizon,
            };
            let paths = csmc_row(&target, reference, settings.particles, settings.backward, settings.selection);
            for (code, pp) in paths.iter().enumerate() {
                if *pp == 0.0 {
                    continue;
                }
                let path = decode(code, k, horizon + 1);
                let post: Vec<f64> = (0..m).map(|l| weights[l] * models[candidates[l]].gamma(&path)).collect();
                let post = normalize(&post);
                for (l, pl) in post.iter().enumerate() {
                    row[space.encode(candidates[l], code)] += qu * p_others * pp * pl;
                }
            }
        }
    }
    row
}

/// Joint posterior `p(θ) γ_T(x | θ)`, normalized, over [`JointSpace`].
pub fn joint_posterior(models: &[Tables], prior: &[f64], horizon: usize) -> Vec<f64> {
    let k = models[0].initial.len();
    let mut raw = Vec::new();
    for (g, m) in models.iter().enumerate() {
        raw.extend(tuples(k, horizon + 1).map(|p| prior[g] * m.gamma(&p)));
    }
    normalize(&raw)
}

/// `p(θ | y)` by summing the joint posterior over paths.
pub fn parameter_posterior(models: &[Tables], prior: &[f64], horizon: usize) -> Vec<f64> {
    let k = models[0].initial.len();
    let raw: Vec<f64> = models
        .iter()
        .enumerate()
        .map(|(g, m)| prior[g] * tuples(k, horizon + 1).map(|p| m.gamma(&p)).sum::<f64>())
        .collect();
    normalize(&raw)
}

/// Transition matrix of a Metropolis-type chain on the grid: propose with `q`,
/// accept with `accept(from, to)`.
pub fn grid_chain_matrix(q: &[Vec<f64>], accept: impl Fn(usize, usize) -> f64) -> Vec<Vec<f64>> {
    let g = q.len();
    (0..g)
        .map(|i| {
            let mut row: Vec<f64> = (0..g).map(|j| if i == j { 0.0 } else { q[i][j] * accept(i, j) }).collect();
            row[i] = 1.0 - row.iter().sum::<f64>();
            row
        })
        .collect()
}

/// Pearson goodness-of-fit test of `counts` against `probs`. Cells with
/// expected count below 5 are pooled. Returns the p-value.
pub fn chi_square_p_value(counts: &[usize], probs: &[f64]) -> f64 {
    let total: usize = counts.iter().sum();
    let n = total as f64;
    let mut stat = 0.0;
    let mut cells = 0;
    let (mut pooled_obs, mut pooled_exp) = (0.0, 0.0);
    for (c, p) in counts.iter().zip(probs) {
        let e = p * n;
        if e < 5.0 {
            pooled_obs += *c as f64;
            pooled_exp += e;
            continue;
        }
        stat += (*c as f64 - e).powi(2) / e;
        cells += 1;
    }
    if pooled_exp > 0.0 {
        stat += (pooled_obs - pooled_exp).powi(2) / pooled_exp.max(1e-12);
        cells += 1;
    }
    if cells < 2 {
        return 1.0;
    }
    let dist = ChiSquared::new((cells - 1) as f64).expect("positive degrees of freedom");
    1.0 - dist.cdf(stat)
}
