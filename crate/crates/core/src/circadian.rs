//! Weekday × hour aggregation grids and 24-hour clock-face point sets.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

use crate::timeseries::{format_timestamp, LocalTime, RrSeries, WEEKDAY_NAMES};

#[derive(Debug, Error, PartialEq)]
pub enum CircadianError {
    #[error("series is empty")]
    EmptySeries,
    #[error("no beats on day {0}")]
    NoBeatsOnDay(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridMetric {
    MeanBpm,
    RmssdMs,
}

impl GridMetric {
    pub fn label(&self) -> &'static str {
        match self {
            GridMetric::MeanBpm => "mean_bpm",
            GridMetric::RmssdMs => "rmssd_ms",
        }
    }
}

/// 7 × 24 grid, day 0 = Monday. `None` marks a cell without enough beats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeekGrid {
    pub metric: GridMetric,
    pub values: [[Option<f64>; 24]; 7],
    /// Beats whose local timestamp falls in each cell.
    pub counts: [[usize; 24]; 7],
}

impl WeekGrid {
    pub fn total_count(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    /// Finite (min, max) over present cells.
    pub fn range(&self) -> Option<(f64, f64)> {
        self.values.iter().flatten().flatten().fold(None, |acc, &v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
    }

    pub fn to_json(&self) -> serde_json::Value {
        let days: Vec<_> = (0..7)
            .map(|d| {
                let hours: Vec<_> = (0..24)
                    .map(|h| {
                        serde_json::json!({
                            "hour": h,
                            "value": self.values[d][h],
                            "count": self.counts[d][h],
                        })
                    })
                    .collect();
                serde_json::json!({ "day": WEEKDAY_NAMES[d], "hours": hours })
            })
            .collect();
        serde_json::json!({ "metric": self.metric.label(), "days": days })
    }
}

/// Aggregates beats into weekday/hour cells by local beat time.
///
/// `MeanBpm` cells hold `60000 / mean(RR)`. `RmssdMs` cells hold the RMSSD of
/// successive beats that both fall in the cell; a cell with fewer than two
/// such pairs' worth of beats stays missing.
pub fn week_grid(
    series: &RrSeries,
    metric: GridMetric,
    utc_offset_h: f64,
) -> Result<WeekGrid, CircadianError> {
    if series.is_empty() {
        return Err(CircadianError::EmptySeries);
    }
    let mut counts = [[0usize; 24]; 7];
    let mut sums = [[0.0f64; 24]; 7];
    let mut diff_sq = [[0.0f64; 24]; 7];
    let mut diffs = [[0usize; 24]; 7];
    let mut prev: Option<((usize, usize), f64)> = None;
    for (t, &rr) in series.timestamps().zip(series.intervals()) {
        let lt = LocalTime::at(t, utc_offset_h);
        let cell = (lt.weekday as usize, lt.hour() as usize);
        counts[cell.0][cell.1] += 1;
        sums[cell.0][cell.1] += rr;
        if let Some((pc, prr)) = prev {
            if pc == cell {
                diff_sq[cell.0][cell.1] += (rr - prr) * (rr - prr);
                diffs[cell.0][cell.1] += 1;
            }
        }
        prev = Some((cell, rr));
    }

    let mut values = [[None; 24]; 7];
    for d in 0..7 {
        for h in 0..24 {
            values[d][h] = match metric {
                GridMetric::MeanBpm if counts[d][h] > 0 => {
                    Some(60_000.0 / (sums[d][h] / counts[d][h] as f64))
                }
                GridMetric::RmssdMs if diffs[d][h] > 0 => {
                    Some((diff_sq[d][h] / diffs[d][h] as f64).sqrt())
                }
                _ => None,
            };
        }
    }
    Ok(WeekGrid {
        metric,
        values,
        counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClockPoint {
    /// Radians clockwise from midnight, in `[0, 2π)`.
    pub angle_rad: f64,
    /// RR normalised to `[0, 1]` over the day's range.
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClockPoints {
    pub day_label: String,
    pub points: Vec<ClockPoint>,
    /// RR range (ms) used for normalisation.
    pub rr_range: (f64, f64),
}

/// Radius used for every point when the day's RR range is zero.
pub const DEGENERATE_RADIUS: f64 = 0.5;

/// Number of local calendar days the series touches.
pub fn day_count(series: &RrSeries, utc_offset_h: f64) -> u32 {
    if series.is_empty() {
        return 0;
    }
    let first = LocalTime::at(series.timestamp(0), utc_offset_h).day_number;
    let last = LocalTime::at(series.timestamp(series.len() - 1), utc_offset_h).day_number;
    (last - first + 1) as u32
}

/// Maps the beats of local day `day_index` (0 = the first beat's day) onto a
/// 24-hour dial. Angles come from the time of day, radii from the RR value.
pub fn clock_points(
    series: &RrSeries,
    day_index: u32,
    utc_offset_h: f64,
) -> Result<ClockPoints, CircadianError> {
    if series.is_empty() {
        return Err(CircadianError::NoBeatsOnDay(day_index));
    }
    let first_day = LocalTime::at(series.timestamp(0), utc_offset_h).day_number;
    let target = first_day + i64::from(day_index);
    let beats: Vec<(f64, f64)> = series
        .timestamps()
        .zip(series.intervals())
        .filter_map(|(t, &rr)| {
            let lt = LocalTime::at(t, utc_offset_h);
            (lt.day_number == target).then_some((lt.seconds_of_day, rr))
        })
        .collect();
    if beats.is_empty() {
        return Err(CircadianError::NoBeatsOnDay(day_index));
    }

    let (lo, hi) = beats
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &(_, rr)| (a.min(rr), b.max(rr)));
    let span = hi - lo;
    let points = beats
        .iter()
        .map(|&(sod, rr)| ClockPoint {
            angle_rad: 2.0 * PI * sod / 86_400.0,
            radius: if span > 0.0 { (rr - lo) / span } else { DEGENERATE_RADIUS },
        })
        .collect();

    let weekday = (target + 3).rem_euclid(7) as usize;
    let date = format_timestamp(target as f64 * 86_400.0);
    Ok(ClockPoints {
        day_label: format!("{} ({})", &date[..10], WEEKDAY_NAMES[weekday]),
        points,
        rr_range: (lo, hi),
    })
}
