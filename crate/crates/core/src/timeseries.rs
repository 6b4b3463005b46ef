//! RR/HR series types, CSV ingest and export, artifact cleaning and HR derivation.
//!
//! Beat times are kept as offsets from `start_epoch` rather than as absolute
//! epoch seconds: at present-day epochs an `f64` only resolves ~0.2 µs, which
//! is too coarse to keep `offset[k+1] - offset[k] == interval[k+1] / 1000`.

use chrono::{DateTime, NaiveDateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const RR_CSV_HEADER: [&str; 3] = ["timestamp", "rr_interval_ms", "heart_rate_bpm"];
pub const HR_CSV_HEADER: [&str; 4] = ["time_s", "time_min", "heart_rate_bpm", "timestamp"];

const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Debug, Error, PartialEq)]
pub enum SeriesError {
    #[error("malformed header: expected `timestamp,rr_interval_ms,heart_rate_bpm`, found `{0}`")]
    MalformedHeader(String),
    #[error("row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("row {0}: RR interval must be positive")]
    NonPositiveInterval(usize),
    #[error("row {0}: timestamp does not increase")]
    NonMonotonicTimestamp(usize),
    #[error("series is empty")]
    EmptySeries,
    #[error("every beat was rejected by the cleaning policy")]
    AllBeatsRejected,
    #[error("invalid cleaning policy: {0}")]
    InvalidPolicy(String),
    #[error("grid step must be positive, got {0}")]
    InvalidGridStep(f64),
    #[error("csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for SeriesError {
    fn from(e: csv::Error) -> Self {
        SeriesError::Csv(e.to_string())
    }
}

/// Beat-to-beat interval series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RrSeries {
    /// Seconds since the Unix epoch (UTC) at which the first interval began.
    start_epoch: f64,
    /// RR intervals in milliseconds.
    intervals: Vec<f64>,
    /// Beat time of each interval's closing beat, seconds after `start_epoch`.
    offsets: Vec<f64>,
}

impl RrSeries {
    /// Builds a series from intervals, deriving beat times by cumulative sum.
    pub fn new(start_epoch: f64, intervals: Vec<f64>) -> Result<Self, SeriesError> {
        if let Some(i) = intervals.iter().position(|&rr| !(rr > 0.0 && rr.is_finite())) {
            return Err(SeriesError::NonPositiveInterval(i + 1));
        }
        let mut acc = 0.0;
        let offsets = intervals
            .iter()
            .map(|rr| {
                acc += rr / 1000.0;
                acc
            })
            .collect();
        Ok(Self {
            start_epoch,
            intervals,
            offsets,
        })
    }

    pub fn empty(start_epoch: f64) -> Self {
        Self {
            start_epoch,
            intervals: Vec::new(),
            offsets: Vec::new(),
        }
    }

    pub fn start_epoch(&self) -> f64 {
        self.start_epoch
    }

    pub fn intervals(&self) -> &[f64] {
        &self.intervals
    }

    /// Beat times in seconds relative to [`start_epoch`](Self::start_epoch).
    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    /// Absolute beat time of beat `k` in epoch seconds.
    pub fn timestamp(&self, k: usize) -> f64 {
        self.start_epoch + self.offsets[k]
    }

    pub fn timestamps(&self) -> impl Iterator<Item = f64> + '_ {
        self.offsets.iter().map(move |o| self.start_epoch + o)
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Seconds from `start_epoch` to the last beat.
    pub fn duration(&self) -> f64 {
        self.offsets.last().copied().unwrap_or(0.0)
    }
}

/// Heart rate sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HrSeries {
    /// Absolute sample times, epoch seconds.
    pub sample_times: Vec<f64>,
    pub bpm: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CleaningPolicy {
    pub min_rr_ms: f64,
    pub max_rr_ms: f64,
    /// Maximum deviation from the running median, as a fraction of it.
    pub max_relative_jump: f64,
}

impl Default for CleaningPolicy {
    fn default() -> Self {
        Self {
            min_rr_ms: 300.0,
            max_rr_ms: 2000.0,
            max_relative_jump: 0.2,
        }
    }
}

impl CleaningPolicy {
    pub fn validate(&self) -> Result<(), SeriesError> {
        if !(self.min_rr_ms > 0.0 && self.min_rr_ms < self.max_rr_ms) {
            return Err(SeriesError::InvalidPolicy(format!(
                "need 0 < min_rr_ms < max_rr_ms, got {} and {}",
                self.min_rr_ms, self.max_rr_ms
            )));
        }
        if !(self.max_relative_jump > 0.0) {
            return Err(SeriesError::InvalidPolicy(
                "max_relative_jump must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    BelowMinimum,
    AboveMaximum,
    Jump,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    /// Index of the beat in the input series.
    pub index: usize,
    pub rr_ms: f64,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub rejected: Vec<Rejection>,
}

/// Beats on either side of the current one in the running median.
const MEDIAN_HALF_WIDTH: usize = 5;

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Removes out-of-range beats and beats that jump away from the running
/// 11-beat median, repeating the jump test until nothing more is rejected.
pub fn clean_rr(
    series: &RrSeries,
    policy: &CleaningPolicy,
) -> Result<(RrSeries, CleaningReport), SeriesError> {
    policy.validate()?;
    if series.is_empty() {
        return Err(SeriesError::EmptySeries);
    }

    let mut report = CleaningReport::default();
    // (original index, rr)
    let mut kept: Vec<(usize, f64)> = Vec::with_capacity(series.len());
    for (i, &rr) in series.intervals.iter().enumerate() {
        let reason = if rr < policy.min_rr_ms {
            Some(RejectReason::BelowMinimum)
        } else if rr > policy.max_rr_ms {
            Some(RejectReason::AboveMaximum)
        } else {
            None
        };
        match reason {
            Some(reason) => report.rejected.push(Rejection {
                index: i,
                rr_ms: rr,
                reason,
            }),
            None => kept.push((i, rr)),
        }
    }

    loop {
        let n = kept.len();
        let mut scratch = Vec::with_capacity(2 * MEDIAN_HALF_WIDTH + 1);
        let mut next = Vec::with_capacity(n);
        let mut removed = false;
        for k in 0..n {
            let lo = k.saturating_sub(MEDIAN_HALF_WIDTH);
            let hi = (k + MEDIAN_HALF_WIDTH + 1).min(n);
            scratch.clear();
            scratch.extend(kept[lo..hi].iter().map(|&(_, rr)| rr));
            let med = median(&mut scratch);
            let (index, rr) = kept[k];
            if (rr - med).abs() / med > policy.max_relative_jump {
                report.rejected.push(Rejection {
                    index,
                    rr_ms: rr,
                    reason: RejectReason::Jump,
                });
                removed = true;
            } else {
                next.push((index, rr));
            }
        }
        kept = next;
        if !removed || kept.is_empty() {
            break;
        }
    }

    if kept.is_empty() {
        return Err(SeriesError::AllBeatsRejected);
    }
    report.rejected.sort_by_key(|r| r.index);
    let cleaned = RrSeries::new(
        series.start_epoch,
        kept.into_iter().map(|(_, rr)| rr).collect(),
    )?;
    Ok((cleaned, report))
}

/// Linear interpolation of RR (ms) at time `t` (seconds after `start_epoch`),
/// with each interval placed at the time of its closing beat. Values outside
/// the beat span are clamped to the first/last interval.
pub(crate) fn interpolate_rr(offsets: &[f64], intervals: &[f64], t: f64, hint: &mut usize) -> f64 {
    let n = offsets.len();
    if t <= offsets[0] {
        return intervals[0];
    }
    if t >= offsets[n - 1] {
        return intervals[n - 1];
    }
    let mut k = (*hint).min(n - 2);
    while k > 0 && offsets[k] > t {
        k -= 1;
    }
    while offsets[k + 1] < t {
        k += 1;
    }
    *hint = k;
    let (t0, t1) = (offsets[k], offsets[k + 1]);
    let w = (t - t0) / (t1 - t0);
    intervals[k] + w * (intervals[k + 1] - intervals[k])
}

/// Heart rate on a uniform grid from the first to the last beat.
pub fn derive_hr(series: &RrSeries, grid_step_s: f64) -> Result<HrSeries, SeriesError> {
    if !(grid_step_s > 0.0 && grid_step_s.is_finite()) {
        return Err(SeriesError::InvalidGridStep(grid_step_s));
    }
    if series.is_empty() {
        return Err(SeriesError::EmptySeries);
    }
    let first = series.offsets[0];
    let span = series.duration() - first;
    let count = (span / grid_step_s + 1e-9).floor() as usize + 1;
    let mut hint = 0;
    let mut sample_times = Vec::with_capacity(count);
    let mut bpm = Vec::with_capacity(count);
    for k in 0..count {
        let t = first + k as f64 * grid_step_s;
        let rr = interpolate_rr(&series.offsets, &series.intervals, t, &mut hint);
        sample_times.push(series.start_epoch + t);
        bpm.push(60_000.0 / rr);
    }
    Ok(HrSeries { sample_times, bpm })
}

fn parse_timestamp(field: &str, row: usize) -> Result<f64, SeriesError> {
    let field = field.trim();
    if let Ok(epoch) = field.parse::<f64>() {
        return Ok(epoch);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(field) {
        return Ok(dt.timestamp() as f64 + f64::from(dt.timestamp_subsec_nanos()) * 1e-9);
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(field, fmt) {
            let dt = naive.and_utc();
            return Ok(dt.timestamp() as f64 + f64::from(dt.timestamp_subsec_nanos()) * 1e-9);
        }
    }
    Err(SeriesError::MalformedRow {
        row,
        reason: format!("unrecognised timestamp `{field}`"),
    })
}

/// Formats epoch seconds as RFC 3339 UTC, rounded to the microsecond and
/// printed with the shortest of 0, 3 or 6 fractional digits.
pub fn format_timestamp(epoch_s: f64) -> String {
    let micros = (epoch_s * 1e6).round() as i64;
    let dt = DateTime::<Utc>::from_timestamp_micros(micros).unwrap_or_default();
    dt.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

/// Parses an RR CSV document. Row numbers in errors count data rows from 1.
pub fn parse_rr_csv(text: &str) -> Result<RrSeries, SeriesError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = match records.next() {
        Some(h) => h?,
        None => return Err(SeriesError::MalformedHeader(String::new())),
    };
    if header.iter().collect::<Vec<_>>() != RR_CSV_HEADER {
        return Err(SeriesError::MalformedHeader(
            header.iter().collect::<Vec<_>>().join(","),
        ));
    }

    let mut first_timestamp = None;
    let mut last_timestamp = f64::NEG_INFINITY;
    let mut intervals = Vec::new();
    for (i, record) in records.enumerate() {
        let row = i + 1;
        let record = record?;
        if record.len() < 2 {
            return Err(SeriesError::MalformedRow {
                row,
                reason: "expected at least two columns".into(),
            });
        }
        let timestamp = parse_timestamp(&record[0], row)?;
        let rr: f64 = record[1].parse().map_err(|_| SeriesError::MalformedRow {
            row,
            reason: format!("unparseable interval `{}`", &record[1]),
        })?;
        if !(rr > 0.0 && rr.is_finite()) {
            return Err(SeriesError::NonPositiveInterval(row));
        }
        if timestamp <= last_timestamp {
            return Err(SeriesError::NonMonotonicTimestamp(row));
        }
        last_timestamp = timestamp;
        first_timestamp.get_or_insert(timestamp);
        intervals.push(rr);
    }

    match first_timestamp {
        Some(t0) => RrSeries::new(t0 - intervals[0] / 1000.0, intervals),
        None => Ok(RrSeries::empty(0.0)),
    }
}

/// Writes the RR CSV form: one row per beat, CRLF line endings, bpm derived
/// from the interval.
pub fn export_rr_csv(series: &RrSeries) -> String {
    let mut out = String::with_capacity(48 * (series.len() + 1));
    out.push_str(&RR_CSV_HEADER.join(","));
    out.push_str("\r\n");
    for (t, rr) in series.timestamps().zip(&series.intervals) {
        out.push_str(&format!(
            "{},{:.3},{:.3}\r\n",
            format_timestamp(t),
            rr,
            60_000.0 / rr
        ));
    }
    out
}

/// Writes the HR CSV form with elapsed time measured from the series start.
pub fn export_hr_csv(hr: &HrSeries, start_epoch: f64) -> String {
    let mut out = String::with_capacity(48 * (hr.bpm.len() + 1));
    out.push_str(&HR_CSV_HEADER.join(","));
    out.push_str("\r\n");
    for (&t, &bpm) in hr.sample_times.iter().zip(&hr.bpm) {
        let elapsed = t - start_epoch;
        out.push_str(&format!(
            "{:.3},{:.4},{:.3},{}\r\n",
            elapsed,
            elapsed / 60.0,
            bpm,
            format_timestamp(t)
        ));
    }
    out
}

/// Calendar position of an instant in a fixed-offset local time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalTime {
    /// Local days since 1970-01-01.
    pub day_number: i64,
    /// 0 = Monday … 6 = Sunday.
    pub weekday: u32,
    /// Seconds since local midnight, in `[0, 86400)`.
    pub seconds_of_day: f64,
}

impl LocalTime {
    pub fn at(epoch_s: f64, utc_offset_h: f64) -> Self {
        let local = epoch_s + utc_offset_h * 3600.0;
        let day_number = (local / SECONDS_PER_DAY).floor() as i64;
        let mut seconds_of_day = local - day_number as f64 * SECONDS_PER_DAY;
        if seconds_of_day >= SECONDS_PER_DAY {
            seconds_of_day -= SECONDS_PER_DAY;
        }
        // 1970-01-01 was a Thursday.
        let weekday = (day_number + 3).rem_euclid(7) as u32;
        Self {
            day_number,
            weekday,
            seconds_of_day: seconds_of_day.max(0.0),
        }
    }

    pub fn hour(&self) -> u32 {
        ((self.seconds_of_day / 3600.0) as u32).min(23)
    }

    pub fn fractional_hour(&self) -> f64 {
        self.seconds_of_day / 3600.0
    }

    pub fn is_weekend(&self) -> bool {
        self.weekday >= 5
    }
}

pub const WEEKDAY_NAMES: [&str; 7] = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"];
