//! Delay embedding and recurrence matrices.
//!
//! The proximity radius is either given directly or calibrated so that a
//! target fraction of the matrix is recurrent, which keeps plots of different
//! days comparable.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RecurrenceError {
    #[error("series of length {len} is too short for m={dim}, tau={delay}")]
    SeriesTooShort { len: usize, dim: usize, delay: usize },
    #[error("need at least 2 states, got {0}")]
    TooFewStates(usize),
    #[error("all pairwise distances are equal; cannot calibrate a recurrence rate")]
    DegenerateDistances,
    #[error("no radius reaches rate {target} +/- {tolerance}; closest is {achieved}")]
    RateUnreachable {
        target: f64,
        achieved: f64,
        tolerance: f64,
    },
    #[error("invalid recurrence config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    #[default]
    Euclidean,
    Max,
}

/// How the proximity radius is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    /// Fixed radius in ms.
    Epsilon(f64),
    /// Fraction of recurrent cells to calibrate for.
    TargetRate(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecurrenceConfig {
    pub embed_dim: usize,
    /// Delay in samples.
    pub delay: usize,
    pub threshold: Threshold,
    pub max_points: usize,
    pub norm: Norm,
}

impl Default for RecurrenceConfig {
    fn default() -> Self {
        Self {
            embed_dim: 3,
            delay: 4,
            threshold: Threshold::TargetRate(0.10),
            max_points: 4096,
            norm: Norm::Euclidean,
        }
    }
}

/// Calibrated rates must land within this distance of the target.
pub const RATE_TOLERANCE: f64 = 0.005;

impl RecurrenceConfig {
    pub fn validate(&self) -> Result<(), RecurrenceError> {
        if self.embed_dim < 1 || self.delay < 1 {
            return Err(RecurrenceError::InvalidConfig(
                "embed_dim and delay must be at least 1".into(),
            ));
        }
        if self.max_points < 2 {
            return Err(RecurrenceError::InvalidConfig("max_points must be at least 2".into()));
        }
        match self.threshold {
            Threshold::Epsilon(e) if !(e >= 0.0 && e.is_finite()) => Err(
                RecurrenceError::InvalidConfig("epsilon must be finite and non-negative".into()),
            ),
            Threshold::TargetRate(r) if !(r > 0.0 && r < 1.0) => Err(
                RecurrenceError::InvalidConfig("target_rate must lie in (0, 1)".into()),
            ),
            _ => Ok(()),
        }
    }

    /// Mean-pooling factor that brings `len` samples down to `max_points`.
    pub fn decimation_for(&self, len: usize) -> usize {
        len.div_ceil(self.max_points).max(1)
    }
}

/// Builds state vectors `(x[k], x[k+tau], …, x[k+(m-1)tau])`.
pub fn delay_embed(values: &[f64], dim: usize, delay: usize) -> Result<Vec<Vec<f64>>, RecurrenceError> {
    if dim < 1 || delay < 1 {
        return Err(RecurrenceError::InvalidConfig(
            "embed_dim and delay must be at least 1".into(),
        ));
    }
    let span = (dim - 1) * delay;
    if values.len() < span + 1 {
        return Err(RecurrenceError::SeriesTooShort {
            len: values.len(),
            dim,
            delay,
        });
    }
    Ok((0..values.len() - span)
        .map(|k| (0..dim).map(|j| values[k + j * delay]).collect())
        .collect())
}

/// Non-overlapping mean pooling; a short tail is averaged into a final point.
pub fn decimate(values: &[f64], factor: usize) -> Vec<f64> {
    let factor = factor.max(1);
    if factor == 1 {
        return values.to_vec();
    }
    values
        .chunks(factor)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect()
}

fn distance(a: &[f64], b: &[f64], norm: Norm) -> f64 {
    match norm {
        Norm::Euclidean => a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt(),
        Norm::Max => a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max),
    }
}

/// Full symmetric distance matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub n: usize,
    pub values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn compute(states: &[Vec<f64>], norm: Norm) -> Self {
        let n = states.len();
        let mut values = vec![0.0; n * n];
        values.par_chunks_mut(n.max(1)).enumerate().for_each(|(i, row)| {
            for (j, cell) in row.iter_mut().enumerate() {
                // Evaluate each pair with the lower index first so (i, j) and (j, i) agree bitwise.
                let (a, b) = if i <= j { (i, j) } else { (j, i) };
                *cell = distance(&states[a], &states[b], norm);
            }
        });
        Self { n, values }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceMatrix {
    pub n: usize,
    /// Row-major `n × n` recurrence flags.
    pub bits: Vec<bool>,
    pub epsilon_used: f64,
    pub rate: f64,
}

impl RecurrenceMatrix {
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.n + j]
    }

    pub fn from_distances(d: &DistanceMatrix, epsilon: f64) -> Self {
        let bits: Vec<bool> = d.values.iter().map(|&v| v <= epsilon).collect();
        let count = bits.iter().filter(|&&b| b).count();
        Self {
            n: d.n,
            rate: count as f64 / (d.n * d.n) as f64,
            bits,
            epsilon_used: epsilon,
        }
    }

    /// Run lengths per row, alternating starting with a (possibly empty) run of
    /// non-recurrent cells.
    pub fn run_lengths(&self) -> Vec<Vec<usize>> {
        (0..self.n)
            .map(|i| {
                let row = &self.bits[i * self.n..(i + 1) * self.n];
                let mut runs = Vec::new();
                let mut current = false;
                let mut len = 0;
                for &b in row {
                    if b == current {
                        len += 1;
                    } else {
                        runs.push(len);
                        current = b;
                        len = 1;
                    }
                }
                runs.push(len);
                runs
            })
            .collect()
    }

    pub fn to_json(&self, decimation: usize) -> serde_json::Value {
        serde_json::json!({
            "n": self.n,
            "epsilon_used": self.epsilon_used,
            "rate": self.rate,
            "decimation": decimation,
            "rle_starts_with": false,
            "rows": self.run_lengths(),
        })
    }
}

/// Number of true cells in the matrix thresholded at `eps`, given the sorted
/// upper-triangle distances.
fn cells_within(sorted_upper: &[f64], n: usize, eps: f64) -> usize {
    n + 2 * sorted_upper.partition_point(|&d| d <= eps)
}

/// Smallest radius whose recurrence rate is as close as possible to `target`.
///
/// Bisects over the sorted distinct upper-triangle distances; the rate is a
/// non-decreasing step function of the radius.
pub fn calibrate_epsilon(d: &DistanceMatrix, target: f64) -> Result<(f64, f64), RecurrenceError> {
    let n = d.n;
    let mut upper: Vec<f64> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        upper.extend_from_slice(&d.values[i * n + i + 1..(i + 1) * n]);
    }
    upper.sort_unstable_by(f64::total_cmp);
    if upper.first() == upper.last() {
        return Err(RecurrenceError::DegenerateDistances);
    }

    let total = (n * n) as f64;
    let rate_at = |eps: f64| cells_within(&upper, n, eps) as f64 / total;
    // Bisection over indices: find the first sorted distance whose rate reaches the target.
    let (mut lo, mut hi) = (0usize, upper.len() - 1);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if rate_at(upper[mid]) >= target {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let above = upper[lo];
    let mut best = (above, rate_at(above));
    // The largest radius strictly below `above` may sit closer to the target.
    if lo > 0 {
        let below = upper[lo - 1];
        let r = rate_at(below);
        if (r - target).abs() < (best.1 - target).abs() {
            best = (below, r);
        }
    }
    Ok(best)
}

/// Thresholds pairwise state distances into a recurrence matrix.
pub fn recurrence_matrix(
    states: &[Vec<f64>],
    config: &RecurrenceConfig,
) -> Result<RecurrenceMatrix, RecurrenceError> {
    config.validate()?;
    if states.len() < 2 {
        return Err(RecurrenceError::TooFewStates(states.len()));
    }
    let d = DistanceMatrix::compute(states, config.norm);
    matrix_from_distances(&d, config)
}

pub fn matrix_from_distances(
    d: &DistanceMatrix,
    config: &RecurrenceConfig,
) -> Result<RecurrenceMatrix, RecurrenceError> {
    match config.threshold {
        Threshold::Epsilon(eps) => Ok(RecurrenceMatrix::from_distances(d, eps)),
        Threshold::TargetRate(target) => {
            let (eps, achieved) = calibrate_epsilon(d, target)?;
            if (achieved - target).abs() > RATE_TOLERANCE {
                return Err(RecurrenceError::RateUnreachable {
                    target,
                    achieved,
                    tolerance: RATE_TOLERANCE,
                });
            }
            Ok(RecurrenceMatrix::from_distances(d, eps))
        }
    }
}

/// Result of the decimate → embed → threshold pipeline.
#[derive(Debug, Clone)]
pub struct RecurrenceAnalysis {
    pub matrix: RecurrenceMatrix,
    pub distances: DistanceMatrix,
    pub decimation: usize,
}

/// Decimates `values` to at most `max_points`, embeds and thresholds them.
pub fn analyze(values: &[f64], config: &RecurrenceConfig) -> Result<RecurrenceAnalysis, RecurrenceError> {
    config.validate()?;
    let decimation = config.decimation_for(values.len());
    let pooled = decimate(values, decimation);
    let states = delay_embed(&pooled, config.embed_dim, config.delay)?;
    if states.len() < 2 {
        return Err(RecurrenceError::TooFewStates(states.len()));
    }
    let distances = DistanceMatrix::compute(&states, config.norm);
    let matrix = matrix_from_distances(&distances, config)?;
    Ok(RecurrenceAnalysis {
        matrix,
        distances,
        decimation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embed_identity_and_index_arithmetic() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let e = delay_embed(&x, 1, 3).unwrap();
        assert_eq!(e, x.iter().map(|&v| vec![v]).collect::<Vec<_>>());
        let e = delay_embed(&x, 2, 2).unwrap();
        assert_eq!(e, vec![vec![1.0, 3.0], vec![2.0, 4.0], vec![3.0, 5.0]]);
        assert!(matches!(
            delay_embed(&x, 3, 3),
            Err(RecurrenceError::SeriesTooShort { .. })
        ));
    }

    #[test]
    fn decimate_examples() {
        assert_eq!(decimate(&[1.0, 2.0, 3.0], 1), vec![1.0, 2.0, 3.0]);
        assert_eq!(decimate(&[1.0, 2.0, 3.0, 4.0], 2), vec![1.5, 3.5]);
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let d = decimate(&x, 3);
        assert_eq!(d, vec![1.0, 4.0, 7.0, 9.0]);
    }

    #[test]
    fn constant_series_all_recurrent() {
        let states = delay_embed(&[5.0; 20], 3, 2).unwrap();
        for eps in [0.0, 1.0] {
            let cfg = RecurrenceConfig {
                threshold: Threshold::Epsilon(eps),
                ..Default::default()
            };
            let m = recurrence_matrix(&states, &cfg).unwrap();
            assert_eq!(m.rate, 1.0);
        }
        let m = recurrence_matrix(&states, &RecurrenceConfig::default());
        assert_eq!(m, Err(RecurrenceError::DegenerateDistances));
    }

    #[test]
    fn two_clusters_block_diagonal() {
        let mut states: Vec<Vec<f64>> = (0..6).map(|i| vec![f64::from(i) * 0.1]).collect();
        states.extend((0..4).map(|i| vec![100.0 + f64::from(i) * 0.1]));
        let cfg = RecurrenceConfig {
            threshold: Threshold::Epsilon(10.0),
            ..Default::default()
        };
        let m = recurrence_matrix(&states, &cfg).unwrap();
        assert_eq!(m.rate, (36.0 + 16.0) / 100.0);
        assert!(m.get(0, 5) && !m.get(0, 6) && m.get(6, 9));
    }

    #[test]
    fn run_lengths_start_with_false() {
        let m = RecurrenceMatrix {
            n: 3,
            bits: vec![true, true, false, true, true, false, false, false, true],
            epsilon_used: 0.0,
            rate: 5.0 / 9.0,
        };
        assert_eq!(m.run_lengths(), vec![vec![0, 2, 1], vec![0, 2, 1], vec![2, 1]]);
    }

    #[test]
    fn config_validation() {
        let cfg = RecurrenceConfig {
            threshold: Threshold::TargetRate(1.0),
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = RecurrenceConfig { embed_dim: 0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
