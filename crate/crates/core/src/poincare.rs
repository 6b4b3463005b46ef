//! Lagged RR scatter, SD1/SD2 descriptors and the confidence ellipse.

use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_1_SQRT_2;
use thiserror::Error;

use crate::timeseries::RrSeries;

#[derive(Debug, Error, PartialEq)]
pub enum PoincareError {
    #[error("need at least 2 beats, got {0}")]
    TooFewBeats(usize),
    #[error("need at least {needed} pairs, got {got}")]
    TooFewPairs { needed: usize, got: usize },
    #[error("zero spread along one ellipse axis (sd1 = {sd1}, sd2 = {sd2})")]
    DegenerateSpread { sd1: f64, sd2: f64 },
    #[error("confidence level must lie in (0, 1), got {0}")]
    InvalidLevel(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoincarePairs {
    /// `(RR_n, RR_{n+1})` in ms.
    pub pairs: Vec<(f64, f64)>,
}

impl PoincarePairs {
    pub fn from_intervals(rr: &[f64]) -> Result<Self, PoincareError> {
        if rr.len() < 2 {
            return Err(PoincareError::TooFewBeats(rr.len()));
        }
        Ok(Self {
            pairs: rr.windows(2).map(|w| (w[0], w[1])).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

pub fn poincare_pairs(series: &RrSeries) -> Result<PoincarePairs, PoincareError> {
    PoincarePairs::from_intervals(series.intervals())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub center: (f64, f64),
    /// Semi-axis along the line of identity.
    pub semi_axis_identity: f64,
    /// Semi-axis perpendicular to the line of identity.
    pub semi_axis_perp: f64,
    pub rotation_deg: f64,
    pub level: f64,
}

impl Ellipse {
    /// Whether `(x, y)` lies inside or on the boundary.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.center.0, y - self.center.1);
        let u = (dx + dy) * FRAC_1_SQRT_2;
        let v = (dy - dx) * FRAC_1_SQRT_2;
        (u / self.semi_axis_identity).powi(2) + (v / self.semi_axis_perp).powi(2) <= 1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoincareSummary {
    pub sd1_ms: f64,
    pub sd2_ms: f64,
    /// `None` when `sd2` is zero.
    pub ratio: Option<f64>,
    pub centroid: (f64, f64),
    /// `None` when the spread is degenerate or there are fewer than 3 pairs.
    pub ellipse: Option<Ellipse>,
}

impl PoincareSummary {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "sd1_ms": self.sd1_ms,
            "sd2_ms": self.sd2_ms,
            "ratio": self.ratio,
            "centroid": [self.centroid.0, self.centroid.1],
            "ellipse": self.ellipse.map(|e| serde_json::json!({
                "cx": e.center.0,
                "cy": e.center.1,
                "a_identity": e.semi_axis_identity,
                "b_perp": e.semi_axis_perp,
                "rot_deg": e.rotation_deg,
                "level": e.level,
            })),
        })
    }
}

fn population_sd(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (n, sum) = values.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    let mean = sum / n as f64;
    (values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64).sqrt()
}

/// SD1/SD2 from the pair cloud rotated by −45°.
///
/// SD2 is the population standard deviation along the identity line. SD1 is
/// the root-mean-square perpendicular distance from the identity line itself,
/// which makes `sd1 == rmssd / sqrt(2)` exact for any series; it differs from
/// the centred spread by the mean perpendicular offset, which is
/// `(RR_last - RR_first) / ((n - 1) sqrt(2))` and vanishes on long records.
pub fn sd1_sd2(pairs: &PoincarePairs) -> Result<PoincareSummary, PoincareError> {
    if pairs.is_empty() {
        return Err(PoincareError::TooFewPairs {
            needed: 1,
            got: 0,
        });
    }
    let n = pairs.len() as f64;
    let u = pairs.pairs.iter().map(|&(x, y)| (x + y) * FRAC_1_SQRT_2);
    let sd1 = (pairs.pairs.iter().map(|&(x, y)| (y - x) * (y - x)).sum::<f64>() / (2.0 * n)).sqrt();
    let sd2 = population_sd(u);
    let centroid = (
        pairs.pairs.iter().map(|p| p.0).sum::<f64>() / n,
        pairs.pairs.iter().map(|p| p.1).sum::<f64>() / n,
    );
    let mut summary = PoincareSummary {
        sd1_ms: sd1,
        sd2_ms: sd2,
        ratio: (sd2 > 0.0).then(|| sd1 / sd2),
        centroid,
        ellipse: None,
    };
    if pairs.len() >= 3 && sd1 > 0.0 && sd2 > 0.0 {
        summary.ellipse = Some(ellipse_for(&summary, 0.95)?);
    }
    Ok(summary)
}

/// 2-degree-of-freedom χ² quantile. The customary levels use the 3-decimal
/// table values; anything else uses the closed form `-2 ln(1 - level)`.
pub fn chi2_2dof(level: f64) -> Result<f64, PoincareError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(PoincareError::InvalidLevel(level));
    }
    const TABLE: [(f64, f64); 3] = [(0.90, 4.605), (0.95, 5.991), (0.99, 9.210)];
    Ok(TABLE
        .iter()
        .find(|(l, _)| (l - level).abs() < 1e-12)
        .map_or_else(|| -2.0 * (1.0 - level).ln(), |&(_, q)| q))
}

fn ellipse_for(summary: &PoincareSummary, level: f64) -> Result<Ellipse, PoincareError> {
    if summary.sd1_ms == 0.0 || summary.sd2_ms == 0.0 {
        return Err(PoincareError::DegenerateSpread {
            sd1: summary.sd1_ms,
            sd2: summary.sd2_ms,
        });
    }
    let k = chi2_2dof(level)?.sqrt();
    Ok(Ellipse {
        center: summary.centroid,
        semi_axis_identity: k * summary.sd2_ms,
        semi_axis_perp: k * summary.sd1_ms,
        rotation_deg: 45.0,
        level,
    })
}

/// Gaussian confidence ellipse of the pair cloud, axis-aligned in the rotated frame.
pub fn confidence_ellipse(pairs: &PoincarePairs, level: f64) -> Result<Ellipse, PoincareError> {
    if pairs.len() < 3 {
        return Err(PoincareError::TooFewPairs {
            needed: 3,
            got: pairs.len(),
        });
    }
    let summary = sd1_sd2(pairs)?;
    ellipse_for(&summary, level)
}
