//! Time-domain HRV statistics and sliding-window feature extraction.
//!
//! All dispersion measures use population (divide-by-n) statistics so that
//! `rmssd == sqrt(2) * sd1` holds exactly against the Poincaré module.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

use crate::timeseries::{LocalTime, RrSeries};

pub const MIN_BEATS_PER_WINDOW: usize = 10;
pub const N_FEATURES: usize = 8;
pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "mean_rr_ms",
    "var_rr_ms2",
    "range_rr_ms",
    "rmssd_ms",
    "pnn50",
    "hour_sin",
    "hour_cos",
    "is_weekend",
];
const WEEKEND_COLUMN: usize = 7;
/// Multiplier applied to the unscaled weekend indicator after standardisation.
pub const WEEKEND_WEIGHT: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("need at least 2 beats, got {0}")]
    TooFewBeats(usize),
    #[error("series spans {duration_s:.1} s, shorter than one {window_s} s window")]
    SeriesTooShort { duration_s: f64, window_s: f64 },
    #[error("need at least 2 rows to standardize, got {0}")]
    TooFewRows(usize),
    #[error("invalid window spec: {0}")]
    InvalidWindow(String),
}

fn require_two(window: &[f64]) -> Result<(), MetricsError> {
    if window.len() < 2 {
        Err(MetricsError::TooFewBeats(window.len()))
    } else {
        Ok(())
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn population_variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64
}

/// Population standard deviation of the intervals.
pub fn sdnn(window: &[f64]) -> Result<f64, MetricsError> {
    require_two(window)?;
    Ok(population_variance(window).sqrt())
}

/// Root mean square of successive differences.
pub fn rmssd(window: &[f64]) -> Result<f64, MetricsError> {
    require_two(window)?;
    let sum_sq: f64 = window.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    Ok((sum_sq / (window.len() - 1) as f64).sqrt())
}

/// Fraction of successive differences strictly greater than 50 ms.
pub fn pnn50(window: &[f64]) -> Result<f64, MetricsError> {
    require_two(window)?;
    let over = window
        .windows(2)
        .filter(|w| (w[1] - w[0]).abs() > 50.0)
        .count();
    Ok(over as f64 / (window.len() - 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowSpec {
    pub length_s: f64,
    pub step_s: f64,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            length_s: 300.0,
            step_s: 30.0,
        }
    }
}

impl WindowSpec {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if !(self.step_s > 0.0 && self.step_s <= self.length_s && self.length_s.is_finite()) {
            return Err(MetricsError::InvalidWindow(format!(
                "need 0 < step_s <= length_s, got step {} length {}",
                self.step_s, self.length_s
            )));
        }
        Ok(())
    }

    /// Number of window positions over a span of `duration_s` seconds.
    pub fn positions(&self, duration_s: f64) -> usize {
        if duration_s < self.length_s {
            0
        } else {
            ((duration_s - self.length_s) / self.step_s + 1e-9).floor() as usize + 1
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    /// Epoch seconds.
    pub window_start: f64,
    pub mean_rr_ms: f64,
    pub var_rr_ms2: f64,
    pub range_rr_ms: f64,
    pub rmssd_ms: f64,
    pub pnn50: f64,
    pub hour_sin: f64,
    pub hour_cos: f64,
    pub is_weekend: bool,
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; N_FEATURES] {
        [
            self.mean_rr_ms,
            self.var_rr_ms2,
            self.range_rr_ms,
            self.rmssd_ms,
            self.pnn50,
            self.hour_sin,
            self.hour_cos,
            if self.is_weekend { 1.0 } else { 0.0 },
        ]
    }
}

/// Calendar context of a window, carried alongside the features for colouring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowContext {
    pub window_start: f64,
    /// Local fractional hour of the window midpoint.
    pub local_hour: f64,
    /// 0 = Monday.
    pub weekday: u32,
    /// Local calendar day counted from the first window's day.
    pub day_index: u32,
    pub is_weekend: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub mean: [f64; N_FEATURES],
    /// 0 marks a constant column.
    pub sd: [f64; N_FEATURES],
}

impl Scaling {
    pub fn invert(&self, row: &[f64; N_FEATURES]) -> [f64; N_FEATURES] {
        let mut out = *row;
        for c in 0..N_FEATURES {
            if c == WEEKEND_COLUMN {
                out[c] = row[c] / WEEKEND_WEIGHT;
            } else {
                out[c] = row[c] * self.sd[c] + self.mean[c];
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub context: Vec<WindowContext>,
    pub values: Vec<[f64; N_FEATURES]>,
    /// Set once the matrix has been standardized.
    pub scaling: Option<Scaling>,
}

impl FeatureMatrix {
    pub fn from_vectors(vectors: &[FeatureVector], context: Vec<WindowContext>) -> Self {
        Self {
            context,
            values: vectors.iter().map(FeatureVector::to_array).collect(),
            scaling: None,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_standardized(&self) -> bool {
        self.scaling.is_some()
    }

    /// Rows as plain vectors, the input form of the embedding module.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values.iter().map(|r| r.to_vec()).collect()
    }

    /// Keeps rows at evenly spaced indices so at most `max_rows` remain.
    pub fn subsample(&self, max_rows: usize) -> FeatureMatrix {
        let n = self.len();
        if n <= max_rows || max_rows == 0 {
            return self.clone();
        }
        let idx: Vec<usize> = (0..max_rows).map(|i| i * n / max_rows).collect();
        FeatureMatrix {
            context: idx.iter().map(|&i| self.context[i]).collect(),
            values: idx.iter().map(|&i| self.values[i]).collect(),
            scaling: self.scaling.clone(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("window_start,");
        out.push_str(&FEATURE_NAMES.join(","));
        out.push_str("\r\n");
        for (ctx, row) in self.context.iter().zip(&self.values) {
            out.push_str(&format!("{:.3}", ctx.window_start));
            for (c, v) in row.iter().enumerate() {
                if c == WEEKEND_COLUMN && self.scaling.is_none() {
                    out.push_str(&format!(",{}", *v as u8));
                } else {
                    out.push_str(&format!(",{v:.9}"));
                }
            }
            out.push_str("\r\n");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedWindow {
    pub window_start: f64,
    pub beats: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowedFeatures {
    pub matrix: FeatureMatrix,
    pub dropped: Vec<DroppedWindow>,
    /// Window positions considered, dropped ones included.
    pub positions: usize,
}

/// Slides `spec` over the series and computes one feature vector per window.
///
/// Windows start at the series start (`start_epoch`), so a series whose first
/// interval begins at `t0` has windows at `t0`, `t0 + step`, … A beat belongs
/// to a window when its closing time lies in `[start, start + length)`.
pub fn window_features(
    series: &RrSeries,
    spec: &WindowSpec,
    utc_offset_h: f64,
) -> Result<WindowedFeatures, MetricsError> {
    spec.validate()?;
    let duration = series.duration();
    let positions = spec.positions(duration);
    if positions == 0 {
        return Err(MetricsError::SeriesTooShort {
            duration_s: duration,
            window_s: spec.length_s,
        });
    }

    let offsets = series.offsets();
    let intervals = series.intervals();
    let first_day = LocalTime::at(series.start_epoch(), utc_offset_h).day_number;
    let mut vectors = Vec::with_capacity(positions);
    let mut context = Vec::with_capacity(positions);
    let mut dropped = Vec::new();
    let (mut lo, mut hi) = (0usize, 0usize);
    for p in 0..positions {
        let w_start = p as f64 * spec.step_s;
        let w_end = w_start + spec.length_s;
        while lo < offsets.len() && offsets[lo] < w_start {
            lo += 1;
        }
        hi = hi.max(lo);
        while hi < offsets.len() && offsets[hi] < w_end {
            hi += 1;
        }
        let window_start = series.start_epoch() + w_start;
        let beats = &intervals[lo..hi];
        if beats.len() < MIN_BEATS_PER_WINDOW {
            dropped.push(DroppedWindow {
                window_start,
                beats: beats.len(),
            });
            continue;
        }

        let midpoint = LocalTime::at(window_start + 0.5 * spec.length_s, utc_offset_h);
        let angle = 2.0 * PI * midpoint.fractional_hour() / 24.0;
        let (min, max) = beats
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        vectors.push(FeatureVector {
            window_start,
            mean_rr_ms: mean(beats),
            var_rr_ms2: population_variance(beats),
            range_rr_ms: max - min,
            rmssd_ms: rmssd(beats)?,
            pnn50: pnn50(beats)?,
            hour_sin: angle.sin(),
            hour_cos: angle.cos(),
            is_weekend: midpoint.is_weekend(),
        });
        context.push(WindowContext {
            window_start,
            local_hour: midpoint.fractional_hour(),
            weekday: midpoint.weekday,
            day_index: (midpoint.day_number - first_day).max(0) as u32,
            is_weekend: midpoint.is_weekend(),
        });
    }

    Ok(WindowedFeatures {
        matrix: FeatureMatrix::from_vectors(&vectors, context),
        dropped,
        positions,
    })
}

/// Z-scores every column except the weekend indicator, which is passed
/// through and multiplied by [`WEEKEND_WEIGHT`]. Constant columns become 0.
pub fn standardize(matrix: &FeatureMatrix) -> Result<FeatureMatrix, MetricsError> {
    let n = matrix.len();
    if n < 2 {
        return Err(MetricsError::TooFewRows(n));
    }
    let mut means = [0.0; N_FEATURES];
    let mut sds = [0.0; N_FEATURES];
    for c in 0..N_FEATURES {
        if c == WEEKEND_COLUMN {
            continue;
        }
        let col: Vec<f64> = matrix.values.iter().map(|r| r[c]).collect();
        let m = mean(&col);
        let sd = population_variance(&col).sqrt();
        means[c] = m;
        // Treat spreads at rounding-noise level relative to the mean as constant.
        sds[c] = if sd > 1e-12 * m.abs().max(1.0) { sd } else { 0.0 };
    }

    let values = matrix
        .values
        .iter()
        .map(|row| {
            let mut out = [0.0; N_FEATURES];
            for c in 0..N_FEATURES {
                out[c] = if c == WEEKEND_COLUMN {
                    row[c] * WEEKEND_WEIGHT
                } else if sds[c] == 0.0 {
                    0.0
                } else {
                    (row[c] - means[c]) / sds[c]
                };
            }
            out
        })
        .collect();

    Ok(FeatureMatrix {
        context: matrix.context.clone(),
        values,
        scaling: Some(Scaling {
            mean: means,
            sd: sds,
        }),
    })
}
