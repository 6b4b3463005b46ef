//! Exact t-SNE.
//!
//! Input affinities are Gaussian conditionals calibrated per row to a target
//! perplexity and then symmetrised; output affinities use a Student-t kernel
//! with one degree of freedom. The objective `KL(P || Q)` is minimised by
//! gradient descent with momentum, per-coordinate gains and early
//! exaggeration.
//!
//! Rows are processed in a canonical content order and initial coordinates are
//! derived from a hash of `(seed, row)`, so permuting the input rows permutes
//! the output rows and leaves each point's coordinates bit-identical.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Standard deviation of the initial coordinates (variance 1e-4).
const INIT_SD: f64 = 1e-2;
const MIN_GAIN: f64 = 0.01;
const BISECTION_MAX_ITERS: usize = 200;
/// Tolerance on row entropy in nats; keeps `exp(H)` within ~1e-6 of the target.
const ENTROPY_TOL: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum EmbeddingError {
    #[error("need at least 4 rows, got {0}")]
    TooFewRows(usize),
    #[error("rows have inconsistent widths")]
    RaggedInput,
    #[error("perplexity {perplexity} infeasible for {n} rows (need 1 < perplexity < (n-1)/3)")]
    InfeasiblePerplexity { perplexity: f64, n: usize },
    #[error("perplexity bisection did not converge for row {0}")]
    BisectionFailed(usize),
    #[error("non-finite coordinate at iteration {0}")]
    NumericalDivergence(usize),
    #[error("invalid t-SNE config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub out_dims: usize,
    pub iterations: usize,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub learning_rate: f64,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    /// Iteration at which momentum switches to `final_momentum`.
    pub momentum_switch_iter: usize,
    /// KL divergence is recorded every this many iterations.
    pub record_every: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            out_dims: 2,
            iterations: 1000,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            learning_rate: 200.0,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch_iter: 250,
            record_every: 50,
            seed: 42,
        }
    }
}

pub const SWEEP_PERPLEXITIES: [f64; 3] = [5.0, 15.0, 30.0];

impl TsneConfig {
    pub fn validate(&self, n: usize) -> Result<(), EmbeddingError> {
        if !(self.out_dims == 2 || self.out_dims == 3) {
            return Err(EmbeddingError::InvalidConfig("out_dims must be 2 or 3".into()));
        }
        if !(self.learning_rate > 0.0 && self.early_exaggeration >= 1.0 && self.record_every > 0) {
            return Err(EmbeddingError::InvalidConfig(
                "learning_rate > 0, early_exaggeration >= 1 and record_every > 0 required".into(),
            ));
        }
        check_perplexity(self.perplexity, n)
    }
}

fn check_perplexity(perplexity: f64, n: usize) -> Result<(), EmbeddingError> {
    if n < 4 {
        return Err(EmbeddingError::TooFewRows(n));
    }
    if !(perplexity > 1.0 && perplexity < (n as f64 - 1.0) / 3.0) {
        return Err(EmbeddingError::InfeasiblePerplexity { perplexity, n });
    }
    Ok(())
}

/// Affinities alone only need the target to be reachable by some bandwidth.
fn check_reachable(perplexity: f64, n: usize) -> Result<(), EmbeddingError> {
    if n < 4 {
        return Err(EmbeddingError::TooFewRows(n));
    }
    if !(perplexity > 1.0 && perplexity < n as f64 - 1.0) {
        return Err(EmbeddingError::InfeasiblePerplexity { perplexity, n });
    }
    Ok(())
}

fn squared_distances(x: &[Vec<f64>]) -> Vec<f64> {
    let n = x.len();
    let mut d = vec![0.0; n * n];
    d.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for (j, cell) in row.iter_mut().enumerate() {
            let (a, b) = if i <= j { (i, j) } else { (j, i) };
            *cell = x[a].iter().zip(&x[b]).map(|(p, q)| (p - q) * (p - q)).sum();
        }
    });
    d
}

/// Symmetric input affinities.
#[derive(Debug, Clone, PartialEq)]
pub struct Affinities {
    pub n: usize,
    /// Row-major `n × n`, zero diagonal, sums to 1.
    pub p: Vec<f64>,
    /// Gaussian precision `1 / (2σ²)` of each row's conditional distribution.
    pub betas: Vec<f64>,
}

impl Affinities {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.n + j]
    }
}

/// Calibrates one row: returns `(beta, unnormalised weights)`.
fn calibrate_row(dist: &[f64], skip: usize, target_entropy: f64) -> Option<(f64, Vec<f64>)> {
    let d_min = dist
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != skip)
        .map(|(_, &d)| d)
        .fold(f64::INFINITY, f64::min);
    let mut weights = vec![0.0; dist.len()];
    let spread = dist
        .iter()
        .enumerate()
        .any(|(j, &d)| j != skip && d > d_min);
    if !spread {
        // Equidistant neighbours: every bandwidth gives the uniform distribution.
        for (j, w) in weights.iter_mut().enumerate() {
            *w = if j == skip { 0.0 } else { 1.0 };
        }
        return Some((1.0, weights));
    }
    let (mut beta, mut lo, mut hi) = (1.0f64, 0.0f64, f64::INFINITY);
    for _ in 0..BISECTION_MAX_ITERS {
        let mut sum = 0.0;
        let mut weighted = 0.0;
        for (j, (&d, w)) in dist.iter().zip(weights.iter_mut()).enumerate() {
            if j == skip {
                *w = 0.0;
                continue;
            }
            let shifted = d - d_min;
            *w = (-beta * shifted).exp();
            sum += *w;
            weighted += *w * shifted;
        }
        let entropy = sum.ln() + beta * weighted / sum;
        let diff = entropy - target_entropy;
        if diff.abs() < ENTROPY_TOL {
            return Some((beta, weights));
        }
        if diff > 0.0 {
            lo = beta;
            beta = if hi.is_infinite() { beta * 2.0 } else { 0.5 * (beta + hi) };
        } else {
            hi = beta;
            beta = 0.5 * (beta + lo);
        }
    }
    None
}

/// Per-row perplexity calibration followed by `p_ij = (p_j|i + p_i|j) / 2n`.
///
/// Accepts any `1 < perplexity < n - 1`; the stricter `(n - 1) / 3` bound is
/// enforced by [`TsneConfig::validate`].
pub fn perplexity_affinities(x: &[Vec<f64>], perplexity: f64) -> Result<Affinities, EmbeddingError> {
    let n = x.len();
    if n > 0 && x.iter().any(|r| r.len() != x[0].len()) {
        return Err(EmbeddingError::RaggedInput);
    }
    check_reachable(perplexity, n)?;
    let d = squared_distances(x);
    let target = perplexity.ln();
    let rows: Vec<Result<(f64, Vec<f64>), EmbeddingError>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (beta, w) = calibrate_row(&d[i * n..(i + 1) * n], i, target)
                .ok_or(EmbeddingError::BisectionFailed(i))?;
            let sum: f64 = w.iter().sum();
            Ok((beta, w.into_iter().map(|v| v / sum).collect()))
        })
        .collect();

    let mut cond = vec![0.0; n * n];
    let mut betas = Vec::with_capacity(n);
    for (i, row) in rows.into_iter().enumerate() {
        let (beta, probs) = row?;
        cond[i * n..(i + 1) * n].copy_from_slice(&probs);
        betas.push(beta);
    }
    let scale = 1.0 / (2.0 * n as f64);
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            // Sum in index order so p[i][j] and p[j][i] are bitwise equal.
            let (a, b) = if i <= j { (i, j) } else { (j, i) };
            p[i * n + j] = (cond[a * n + b] + cond[b * n + a]) * scale;
        }
    }
    Ok(Affinities { n, p, betas })
}

/// `KL(P || Q)` for low-dimensional coordinates `y` (row-major, `dims` wide).
pub fn kl_divergence(aff: &Affinities, y: &[f64], dims: usize) -> f64 {
    let n = aff.n;
    let rows: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let yi = &y[i * dims..(i + 1) * dims];
            let mut z = 0.0;
            let mut cross = 0.0;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let yj = &y[j * dims..(j + 1) * dims];
                let d2: f64 = yi.iter().zip(yj).map(|(a, b)| (a - b) * (a - b)).sum();
                let num = 1.0 / (1.0 + d2);
                z += num;
                let p = aff.p[i * n + j];
                if p > 0.0 {
                    cross += p * (p / num).ln();
                }
            }
            (z, cross)
        })
        .collect();
    let z: f64 = rows.iter().map(|r| r.0).sum();
    let cross: f64 = rows.iter().map(|r| r.1).sum();
    let p_total: f64 = aff.p.iter().sum();
    // Σ p ln(p / (num / Z)) = Σ p ln(p / num) + ln Z · Σ p
    (cross + z.ln() * p_total).max(0.0)
}

/// Gradient of `KL(exaggeration · P || Q)` with respect to `y`.
pub fn kl_gradient(aff: &Affinities, y: &[f64], dims: usize, exaggeration: f64) -> Vec<f64> {
    let n = aff.n;
    // Per row: normaliser contribution, attractive and repulsive sums.
    let rows: Vec<(f64, Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let yi = &y[i * dims..(i + 1) * dims];
            let prow = &aff.p[i * n..(i + 1) * n];
            let mut z = 0.0;
            let mut attr = vec![0.0; dims];
            let mut rep = vec![0.0; dims];
            let mut diff = [0.0; 3];
            for j in 0..n {
                if j == i {
                    continue;
                }
                let yj = &y[j * dims..(j + 1) * dims];
                let mut d2 = 0.0;
                for k in 0..dims {
                    diff[k] = yi[k] - yj[k];
                    d2 += diff[k] * diff[k];
                }
                let num = 1.0 / (1.0 + d2);
                z += num;
                let a = prow[j] * num;
                let r = num * num;
                for k in 0..dims {
                    attr[k] += a * diff[k];
                    rep[k] += r * diff[k];
                }
            }
            (z, attr, rep)
        })
        .collect();
    let z: f64 = rows.iter().map(|r| r.0).sum();
    let mut grad = vec![0.0; n * dims];
    for (i, (_, attr, rep)) in rows.iter().enumerate() {
        for k in 0..dims {
            grad[i * dims + k] = 4.0 * (exaggeration * attr[k] - rep[k] / z);
        }
    }
    grad
}

fn fnv1a(bytes: impl Iterator<Item = u8>) -> u64 {
    bytes.fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Initial coordinates of one row, a function of the seed and the row's values only.
pub fn initial_point(seed: u64, row: &[f64], dims: usize) -> Vec<f64> {
    let bytes = seed
        .to_le_bytes()
        .into_iter()
        .chain(row.iter().flat_map(|v| v.to_bits().to_le_bytes()));
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(bytes));
    let normal = Normal::new(0.0, INIT_SD).expect("valid normal");
    (0..dims).map(|_| normal.sample(&mut rng)).collect()
}

fn canonical_order(x: &[Vec<f64>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| {
        x[a].iter()
            .zip(&x[b])
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    order
}

/// Optimiser state, stepped one iteration at a time.
pub struct TsneRun {
    config: TsneConfig,
    affinities: Affinities,
    y: Vec<f64>,
    update: Vec<f64>,
    gains: Vec<f64>,
    iteration: usize,
    kl_trace: Vec<(usize, f64)>,
}

impl TsneRun {
    /// Prepares a run over rows given in the order they should be optimised.
    pub fn new(x: &[Vec<f64>], config: &TsneConfig) -> Result<Self, EmbeddingError> {
        config.validate(x.len())?;
        let affinities = perplexity_affinities(x, config.perplexity)?;
        let dims = config.out_dims;
        let y: Vec<f64> = x
            .iter()
            .flat_map(|row| initial_point(config.seed, row, dims))
            .collect();
        let len = y.len();
        Ok(Self {
            config: config.clone(),
            affinities,
            y,
            update: vec![0.0; len],
            gains: vec![1.0; len],
            iteration: 0,
            kl_trace: Vec::new(),
        })
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn coordinates(&self) -> &[f64] {
        &self.y
    }

    pub fn affinities(&self) -> &Affinities {
        &self.affinities
    }

    pub fn kl_trace(&self) -> &[(usize, f64)] {
        &self.kl_trace
    }

    pub fn is_exaggerating(&self) -> bool {
        self.iteration < self.config.exaggeration_iters
    }

    pub fn step(&mut self) -> Result<(), EmbeddingError> {
        let c = &self.config;
        let dims = c.out_dims;
        let exaggeration = if self.is_exaggerating() { c.early_exaggeration } else { 1.0 };
        let momentum = if self.iteration < c.momentum_switch_iter {
            c.initial_momentum
        } else {
            c.final_momentum
        };
        let grad = kl_gradient(&self.affinities, &self.y, dims, exaggeration);
        for k in 0..self.y.len() {
            let g = grad[k];
            self.gains[k] = if (g > 0.0) != (self.update[k] > 0.0) {
                self.gains[k] + 0.2
            } else {
                (self.gains[k] * 0.8).max(MIN_GAIN)
            };
            self.update[k] = momentum * self.update[k] - c.learning_rate * self.gains[k] * g;
            self.y[k] += self.update[k];
        }
        let n = self.affinities.n as f64;
        for d in 0..dims {
            let mean = self.y.iter().skip(d).step_by(dims).sum::<f64>() / n;
            self.y.iter_mut().skip(d).step_by(dims).for_each(|v| *v -= mean);
        }
        self.iteration += 1;
        if self.y.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NumericalDivergence(self.iteration));
        }
        if self.iteration.is_multiple_of(c.record_every) || self.iteration == c.iterations {
            let kl = kl_divergence(&self.affinities, &self.y, dims);
            self.kl_trace.push((self.iteration, kl));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    /// One coordinate vector per input row, in input order.
    pub points: Vec<Vec<f64>>,
    /// `(iteration, KL)` pairs.
    pub kl_trace: Vec<(usize, f64)>,
    pub config: TsneConfig,
}

impl Embedding {
    pub fn final_kl(&self) -> Option<f64> {
        self.kl_trace.last().map(|&(_, kl)| kl)
    }
}

/// Runs t-SNE on `x` with `config`.
pub fn tsne(x: &[Vec<f64>], config: &TsneConfig) -> Result<Embedding, EmbeddingError> {
    let order = canonical_order(x);
    let sorted: Vec<Vec<f64>> = order.iter().map(|&i| x[i].clone()).collect();
    let mut run = TsneRun::new(&sorted, config)?;
    while run.iteration() < config.iterations {
        run.step()?;
    }
    let dims = config.out_dims;
    let mut points = vec![Vec::new(); x.len()];
    for (pos, &orig) in order.iter().enumerate() {
        points[orig] = run.coordinates()[pos * dims..(pos + 1) * dims].to_vec();
    }
    Ok(Embedding {
        points,
        kl_trace: run.kl_trace,
        config: config.clone(),
    })
}

/// Independent runs over `perplexities`, run `k` seeded with `base.seed + k`.
pub fn grid_sweep(
    x: &[Vec<f64>],
    perplexities: &[f64],
    dims: usize,
    base: &TsneConfig,
) -> Result<Vec<Embedding>, EmbeddingError> {
    perplexities
        .iter()
        .enumerate()
        .map(|(k, &perplexity)| {
            let config = TsneConfig {
                perplexity,
                out_dims: dims,
                seed: base.seed.wrapping_add(k as u64),
                ..base.clone()
            };
            tsne(x, &config)
        })
        .collect()
}

/// Mean silhouette coefficient of `labels` over `points` (Euclidean).
/// Points in singleton clusters score 0. `None` with fewer than two clusters.
pub fn silhouette(points: &[Vec<f64>], labels: &[usize]) -> Option<f64> {
    let n = points.len();
    let k = labels.iter().copied().max()? + 1;
    if labels.len() != n {
        return None;
    }
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return None;
    }
    let scores: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let own = labels[i];
            if sizes[own] < 2 {
                return 0.0;
            }
            let mut sums = vec![0.0; k];
            for j in 0..n {
                if j != i {
                    let d: f64 = points[i]
                        .iter()
                        .zip(&points[j])
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    sums[labels[j]] += d;
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own && sizes[c] > 0)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            if m > 0.0 {
                (b - a) / m
            } else {
                0.0
            }
        })
        .collect();
    Some(scores.iter().sum::<f64>() / n as f64)
}
