//! Seeded synthetic RR generator.
//!
//! Heart rate is modelled in bpm as a baseline plus a circadian cosine and
//! exercise bouts. Beats are emitted by integrate-and-fire over that rate,
//! then each interval gets respiratory sinus arrhythmia and white noise added
//! in the millisecond domain.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

use crate::timeseries::{LocalTime, RrSeries};

/// 2024-01-01T00:00:00Z, a Monday.
pub const DEFAULT_START_EPOCH: f64 = 1_704_067_200.0;

const ONSET_S: f64 = 300.0;
const RECOVERY_TAU_S: f64 = 180.0;
const RECOVERY_CUTOFF_S: f64 = 10.0 * RECOVERY_TAU_S;
const MIN_HR_BPM: f64 = 30.0;
const MIN_RR_MS: f64 = 200.0;
/// Hours before Saturday/Monday midnight over which the weekend phase shift ramps in/out.
const WEEKEND_RAMP_H: f64 = 4.0;
const BOUT_WINDOW_H: (f64, f64) = (7.0, 21.0);
const MAX_PLACEMENT_ATTEMPTS: usize = 100;

const SCHEDULE_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("cannot place {bouts} non-overlapping exercise bouts on day {day}")]
    ScheduleInfeasible { day: u32, bouts: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub days: u32,
    pub baseline_bpm: f64,
    pub circadian_amplitude_bpm: f64,
    /// Local hour of the circadian heart-rate minimum.
    pub circadian_trough_hour: f64,
    pub rsa_amplitude_ms: f64,
    pub respiratory_hz: f64,
    /// Poisson mean of exercise bouts per day.
    pub exercise_bouts_per_day: f64,
    pub exercise_peak_delta_bpm: f64,
    pub exercise_duration_min: (f64, f64),
    pub noise_sd_ms: f64,
    /// Circadian phase delay applied on Saturday and Sunday.
    pub weekend_shift_hours: f64,
    pub start_epoch: f64,
    pub utc_offset_h: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            days: 7,
            baseline_bpm: 62.0,
            circadian_amplitude_bpm: 10.0,
            circadian_trough_hour: 4.0,
            rsa_amplitude_ms: 35.0,
            respiratory_hz: 0.25,
            exercise_bouts_per_day: 1.0,
            exercise_peak_delta_bpm: 55.0,
            exercise_duration_min: (20.0, 60.0),
            noise_sd_ms: 8.0,
            weekend_shift_hours: 1.5,
            start_epoch: DEFAULT_START_EPOCH,
            utc_offset_h: 0.0,
            seed: 42,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |msg: &str| Err(SynthError::InvalidConfig(msg.to_string()));
        if self.days < 1 {
            return bad("days must be at least 1");
        }
        if !(self.baseline_bpm > MIN_HR_BPM && self.baseline_bpm < 250.0) {
            return bad("baseline_bpm must lie in (30, 250)");
        }
        let amplitudes = [
            self.circadian_amplitude_bpm,
            self.rsa_amplitude_ms,
            self.exercise_peak_delta_bpm,
            self.noise_sd_ms,
            self.exercise_bouts_per_day,
        ];
        if amplitudes.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return bad("amplitudes, noise and bout rate must be finite and non-negative");
        }
        if !(self.respiratory_hz > 0.0 && self.respiratory_hz < 0.5) {
            return bad("respiratory_hz must lie in (0, 0.5)");
        }
        let (lo, hi) = self.exercise_duration_min;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad("exercise_duration_min must be a positive, ordered range");
        }
        if !(self.circadian_trough_hour.is_finite()
            && self.weekend_shift_hours.is_finite()
            && self.start_epoch.is_finite()
            && self.utc_offset_h.is_finite())
        {
            return bad("times and offsets must be finite");
        }
        Ok(())
    }

    fn end_offset(&self) -> f64 {
        f64::from(self.days) * 86_400.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bout {
    /// Seconds after the series start.
    pub start_s: f64,
    pub duration_s: f64,
    pub peak_delta_bpm: f64,
}

impl Bout {
    fn envelope(&self, t: f64) -> f64 {
        let dt = t - self.start_s;
        if dt <= 0.0 {
            0.0
        } else if dt < ONSET_S.min(self.duration_s) {
            self.peak_delta_bpm * dt / ONSET_S
        } else if dt < self.duration_s {
            self.peak_delta_bpm * (self.duration_s / ONSET_S).min(1.0)
        } else {
            let at_end = self.peak_delta_bpm * (self.duration_s / ONSET_S).min(1.0);
            at_end * (-(dt - self.duration_s) / RECOVERY_TAU_S).exp()
        }
    }

    fn active_until(&self) -> f64 {
        self.start_s + self.duration_s + RECOVERY_CUTOFF_S
    }

    fn overlaps(&self, other: &Bout) -> bool {
        self.start_s < other.start_s + other.duration_s
            && other.start_s < self.start_s + self.duration_s
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws the exercise schedule: Poisson bouts per day, uniform start times in
/// 07:00–21:00 local, re-drawn on overlap.
pub fn bout_schedule(config: &GeneratorConfig, seed: u64) -> Result<Vec<Bout>, SynthError> {
    config.validate()?;
    let mut rng = stream_rng(seed, SCHEDULE_STREAM);
    let poisson = if config.exercise_bouts_per_day > 0.0 {
        Some(
            Poisson::new(config.exercise_bouts_per_day)
                .map_err(|e| SynthError::InvalidConfig(e.to_string()))?,
        )
    } else {
        None
    };

    let start_local = LocalTime::at(config.start_epoch, config.utc_offset_h);
    let (dur_lo, dur_hi) = config.exercise_duration_min;
    let mut bouts: Vec<Bout> = Vec::new();
    for day in 0..config.days {
        let count = poisson.map_or(0, |p| p.sample(&mut rng) as usize);
        let midnight = f64::from(day) * 86_400.0 - start_local.seconds_of_day;
        let day_start = bouts.len();
        for _ in 0..count {
            let duration_s = 60.0 * (dur_lo + (dur_hi - dur_lo) * rng.random::<f64>());
            let peak_delta_bpm = config.exercise_peak_delta_bpm * rng.random_range(0.6..=1.0);
            let mut placed = None;
            for _ in 0..MAX_PLACEMENT_ATTEMPTS {
                let hour = rng.random_range(BOUT_WINDOW_H.0..BOUT_WINDOW_H.1);
                let candidate = Bout {
                    start_s: midnight + hour * 3600.0,
                    duration_s,
                    peak_delta_bpm,
                };
                if !bouts[day_start..].iter().any(|b| b.overlaps(&candidate)) {
                    placed = Some(candidate);
                    break;
                }
            }
            match placed {
                Some(b) => bouts.push(b),
                None => return Err(SynthError::ScheduleInfeasible { day, bouts: count }),
            }
        }
        bouts[day_start..].sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
    }
    bouts.retain(|b| b.start_s >= 0.0 && b.start_s < config.end_offset());
    Ok(bouts)
}

/// Instantaneous heart rate model (bpm) as a function of seconds after start.
struct RateModel<'a> {
    config: &'a GeneratorConfig,
    bouts: &'a [Bout],
    start_seconds_of_day: f64,
    start_weekday: u32,
}

impl<'a> RateModel<'a> {
    fn new(config: &'a GeneratorConfig, bouts: &'a [Bout]) -> Self {
        let local = LocalTime::at(config.start_epoch, config.utc_offset_h);
        Self {
            config,
            bouts,
            start_seconds_of_day: local.seconds_of_day,
            start_weekday: local.weekday,
        }
    }

    /// 0 on weekdays, 1 on weekends, ramping over the hours before each switch.
    fn weekend_weight(&self, weekday: u32, hour: f64) -> f64 {
        let ramp_start = 24.0 - WEEKEND_RAMP_H;
        match weekday {
            4 if hour >= ramp_start => (hour - ramp_start) / WEEKEND_RAMP_H,
            5 => 1.0,
            6 if hour >= ramp_start => 1.0 - (hour - ramp_start) / WEEKEND_RAMP_H,
            6 => 1.0,
            _ => 0.0,
        }
    }

    fn bpm(&self, t: f64) -> f64 {
        let c = self.config;
        let local = self.start_seconds_of_day + t;
        let day = (local / 86_400.0).floor();
        let hour = (local - day * 86_400.0) / 3600.0;
        let weekday = (self.start_weekday as i64 + day as i64).rem_euclid(7) as u32;
        let trough = c.circadian_trough_hour + c.weekend_shift_hours * self.weekend_weight(weekday, hour);
        let circadian = -c.circadian_amplitude_bpm * (2.0 * PI * (hour - trough) / 24.0).cos();
        let exercise: f64 = self
            .bouts
            .iter()
            .filter(|b| t > b.start_s && t < b.active_until())
            .map(|b| b.envelope(t))
            .sum();
        (c.baseline_bpm + circadian + exercise).max(MIN_HR_BPM)
    }

    /// Beats elapsed over `[t, t + dt]`, by Simpson's rule.
    fn beats_over(&self, t: f64, dt: f64) -> f64 {
        dt * (self.bpm(t) + 4.0 * self.bpm(t + 0.5 * dt) + self.bpm(t + dt)) / 360.0
    }

    /// Time until the integrated rate reaches one beat.
    fn next_interval(&self, t: f64) -> f64 {
        let mut dt = 60.0 / self.bpm(t);
        for _ in 0..4 {
            let residual = self.beats_over(t, dt) - 1.0;
            if residual == 0.0 {
                break;
            }
            dt -= residual * 60.0 / self.bpm(t + dt);
            if residual.abs() < 1e-12 {
                break;
            }
        }
        dt
    }
}

/// Generates the full series described by `config`.
pub fn generate_week(config: &GeneratorConfig) -> Result<RrSeries, SynthError> {
    generate_with_schedule(config).map(|(series, _)| series)
}

/// Like [`generate_week`], also returning the exercise schedule used.
pub fn generate_with_schedule(
    config: &GeneratorConfig,
) -> Result<(RrSeries, Vec<Bout>), SynthError> {
    config.validate()?;
    let bouts = bout_schedule(config, config.seed)?;
    let model = RateModel::new(config, &bouts);
    let mut rng = stream_rng(config.seed, NOISE_STREAM);
    let noise = if config.noise_sd_ms > 0.0 {
        Some(Normal::new(0.0, config.noise_sd_ms).map_err(|e| SynthError::InvalidConfig(e.to_string()))?)
    } else {
        None
    };

    let end = config.end_offset();
    let omega = 2.0 * PI * config.respiratory_hz;
    let mut intervals = Vec::with_capacity((end * config.baseline_bpm / 60.0 * 1.1) as usize);
    // Each interval is integrated from the previous emitted (modulated) beat,
    // so beat times never drift away from the HR trajectory.
    let mut t = 0.0;
    loop {
        let dt = model.next_interval(t);
        let mut rr = dt * 1000.0;
        if config.rsa_amplitude_ms > 0.0 {
            rr += config.rsa_amplitude_ms * (omega * (t + dt)).sin();
        }
        if let Some(n) = &noise {
            rr += n.sample(&mut rng);
        }
        // Microsecond grid: the 3-decimal CSV export is then lossless.
        let rr = (rr.max(MIN_RR_MS) * 1000.0).round() / 1000.0;
        if t + rr / 1000.0 > end {
            break;
        }
        t += rr / 1000.0;
        intervals.push(rr);
    }
    let series = RrSeries::new(config.start_epoch, intervals)
        .map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
    Ok((series, bouts))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet(baseline: f64) -> GeneratorConfig {
        GeneratorConfig {
            baseline_bpm: baseline,
            circadian_amplitude_bpm: 0.0,
            rsa_amplitude_ms: 0.0,
            exercise_bouts_per_day: 0.0,
            noise_sd_ms: 0.0,
            weekend_shift_hours: 0.0,
            days: 1,
            ..Default::default()
        }
    }

    #[test]
    fn flat_sixty_bpm_gives_exact_seconds() {
        let s = generate_week(&quiet(60.0)).unwrap();
        assert_eq!(s.len(), 86_400);
        assert!(s.intervals().iter().all(|&rr| rr == 1000.0));
    }

    #[test]
    fn zero_bout_rate_gives_empty_schedule() {
        assert!(bout_schedule(&quiet(60.0), 7).unwrap().is_empty());
    }

    #[test]
    fn schedule_is_reproducible_and_non_overlapping() {
        let cfg = GeneratorConfig {
            exercise_bouts_per_day: 3.0,
            ..Default::default()
        };
        let a = bout_schedule(&cfg, 99).unwrap();
        assert_eq!(a, bout_schedule(&cfg, 99).unwrap());
        for (i, x) in a.iter().enumerate() {
            for y in &a[i + 1..] {
                assert!(!x.overlaps(y));
            }
            let hour = (x.start_s % 86_400.0) / 3600.0;
            assert!((7.0..21.0).contains(&hour));
        }
    }

    #[test]
    fn crowded_schedule_is_infeasible() {
        let cfg = GeneratorConfig {
            exercise_bouts_per_day: 60.0,
            exercise_duration_min: (60.0, 60.0),
            ..Default::default()
        };
        assert!(matches!(
            bout_schedule(&cfg, 1),
            Err(SynthError::ScheduleInfeasible { .. })
        ));
    }

    #[test]
    fn invalid_configs() {
        for cfg in [
            GeneratorConfig { days: 0, ..Default::default() },
            GeneratorConfig { respiratory_hz: 0.5, ..Default::default() },
            GeneratorConfig { rsa_amplitude_ms: -1.0, ..Default::default() },
            GeneratorConfig { exercise_duration_min: (30.0, 10.0), ..Default::default() },
        ] {
            assert!(matches!(generate_week(&cfg), Err(SynthError::InvalidConfig(_))));
        }
    }

    #[test]
    fn envelope_shape() {
        let b = Bout { start_s: 0.0, duration_s: 1200.0, peak_delta_bpm: 50.0 };
        assert_eq!(b.envelope(150.0), 25.0);
        assert_eq!(b.envelope(600.0), 50.0);
        assert!((b.envelope(1200.0 + RECOVERY_TAU_S) - 50.0 / std::f64::consts::E).abs() < 1e-9);
    }
}
