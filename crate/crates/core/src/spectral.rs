//! Tachogram resampling, Hann-tapered periodograms, band powers and the
//! sliding-window spectrogram.
//!
//! One-sided densities are in ms²/Hz and normalised so that
//! `Σ power[k] · Δf == mean((x - x̄)² · w²) / mean(w²)` for window `w`.

use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

use crate::timeseries::{interpolate_rr, RrSeries};

pub const DEFAULT_RESAMPLE_HZ: f64 = 4.0;
pub const MIN_SEGMENT_LEN: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum SpectralError {
    #[error("need at least 2 beats, got {0}")]
    TooFewBeats(usize),
    #[error("segment of {0} samples is shorter than the minimum of 64")]
    SegmentTooShort(usize),
    #[error("tachogram spans {duration_s:.1} s, shorter than one {window_s} s window")]
    TooShort { duration_s: f64, window_s: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandDefinition {
    pub vlf: (f64, f64),
    pub lf: (f64, f64),
    pub hf: (f64, f64),
}

impl Default for BandDefinition {
    fn default() -> Self {
        Self {
            vlf: (0.003, 0.04),
            lf: (0.04, 0.15),
            hf: (0.15, 0.4),
        }
    }
}

impl BandDefinition {
    pub fn named(&self) -> [(&'static str, (f64, f64)); 3] {
        [("VLF", self.vlf), ("LF", self.lf), ("HF", self.hf)]
    }

    /// Frequencies separating adjacent bands.
    pub fn boundaries(&self) -> [f64; 2] {
        [self.lf.0, self.hf.0]
    }
}

/// RR values on a uniform time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tachogram {
    /// Epoch seconds of the first sample.
    pub t0: f64,
    pub hz: f64,
    pub values: Vec<f64>,
}

impl Tachogram {
    pub fn duration(&self) -> f64 {
        self.values.len() as f64 / self.hz
    }
}

/// Linearly interpolates RR(t) onto a `hz` grid from the first to the last beat.
pub fn resample_rr(series: &RrSeries, hz: f64) -> Result<Tachogram, SpectralError> {
    if !(hz > 0.0 && hz.is_finite()) {
        return Err(SpectralError::InvalidParameter(format!("sample rate {hz}")));
    }
    if series.len() < 2 {
        return Err(SpectralError::TooFewBeats(series.len()));
    }
    let offsets = series.offsets();
    let first = offsets[0];
    let span = series.duration() - first;
    let count = (span * hz + 1e-9).floor() as usize + 1;
    let mut hint = 0;
    let values = (0..count)
        .map(|k| interpolate_rr(offsets, series.intervals(), first + k as f64 / hz, &mut hint))
        .collect();
    Ok(Tachogram {
        t0: series.start_epoch() + first,
        hz,
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub freqs: Vec<f64>,
    /// One-sided density, ms²/Hz.
    pub power: Vec<f64>,
}

impl Spectrum {
    pub fn df(&self) -> f64 {
        self.freqs.get(1).copied().unwrap_or(0.0) - self.freqs[0]
    }

    /// Rectangle-rule total, the quantity fixed by the normalisation.
    pub fn total_power(&self) -> f64 {
        self.power.iter().sum::<f64>() * self.df()
    }

    pub fn argmax_in(&self, band: (f64, f64)) -> Option<f64> {
        self.freqs
            .iter()
            .zip(&self.power)
            .filter(|(f, _)| **f >= band.0 && **f <= band.1)
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(f, _)| *f)
    }
}

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Reusable periodogram for a fixed segment length.
pub struct Periodogram {
    len: usize,
    hz: f64,
    window: Vec<f64>,
    window_power: f64,
    fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl Periodogram {
    pub fn new(len: usize, hz: f64) -> Result<Self, SpectralError> {
        if len < MIN_SEGMENT_LEN {
            return Err(SpectralError::SegmentTooShort(len));
        }
        if !(hz > 0.0 && hz.is_finite()) {
            return Err(SpectralError::InvalidParameter(format!("sample rate {hz}")));
        }
        let window = hann(len);
        let window_power = window.iter().map(|w| w * w).sum::<f64>() / len as f64;
        let fft = FftPlanner::new().plan_fft_forward(len);
        Ok(Self {
            len,
            hz,
            window,
            window_power,
            fft,
        })
    }

    pub fn freqs(&self) -> Vec<f64> {
        (0..=self.len / 2)
            .map(|k| k as f64 * self.hz / self.len as f64)
            .collect()
    }

    /// Mean-removed, tapered, one-sided density of `segment`.
    pub fn power(&self, segment: &[f64]) -> Result<Vec<f64>, SpectralError> {
        if segment.len() != self.len {
            return Err(SpectralError::InvalidParameter(format!(
                "segment length {} differs from planned {}",
                segment.len(),
                self.len
            )));
        }
        let n = self.len;
        let mean = segment.iter().sum::<f64>() / n as f64;
        let mut buf: Vec<Complex<f64>> = segment
            .iter()
            .zip(&self.window)
            .map(|(x, w)| Complex::new((x - mean) * w, 0.0))
            .collect();
        self.fft.process(&mut buf);
        let scale = 1.0 / (self.hz * n as f64 * self.window_power);
        let half = n / 2;
        Ok((0..=half)
            .map(|k| {
                let p = buf[k].norm_sqr() * scale;
                if k == 0 || (n.is_multiple_of(2) && k == half) {
                    p
                } else {
                    2.0 * p
                }
            })
            .collect())
    }
}

/// Periodogram of a single segment sampled at `hz`.
pub fn psd_window(segment: &[f64], hz: f64) -> Result<Spectrum, SpectralError> {
    let p = Periodogram::new(segment.len(), hz)?;
    Ok(Spectrum {
        freqs: p.freqs(),
        power: p.power(segment)?,
    })
}

/// Integral of the piecewise-linear density between `lo` and `hi`.
fn integrate(freqs: &[f64], power: &[f64], lo: f64, hi: f64) -> f64 {
    let value_at = |k: usize, f: f64| {
        let w = (f - freqs[k]) / (freqs[k + 1] - freqs[k]);
        power[k] + w * (power[k + 1] - power[k])
    };
    let mut total = 0.0;
    for k in 0..freqs.len().saturating_sub(1) {
        let (a, b) = (freqs[k].max(lo), freqs[k + 1].min(hi));
        if b <= a {
            continue;
        }
        total += 0.5 * (b - a) * (value_at(k, a) + value_at(k, b));
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandPowers {
    pub vlf_ms2: f64,
    pub lf_ms2: f64,
    pub hf_ms2: f64,
    /// `None` when the HF power is zero.
    pub lf_hf_ratio: Option<f64>,
}

/// Trapezoidal band integrals of a one-sided spectrum.
pub fn band_powers(freqs: &[f64], power: &[f64], bands: &BandDefinition) -> BandPowers {
    let vlf_ms2 = integrate(freqs, power, bands.vlf.0, bands.vlf.1);
    let lf_ms2 = integrate(freqs, power, bands.lf.0, bands.lf.1);
    let hf_ms2 = integrate(freqs, power, bands.hf.0, bands.hf.1);
    BandPowers {
        vlf_ms2,
        lf_ms2,
        hf_ms2,
        lf_hf_ratio: (hf_ms2 > 0.0).then(|| lf_ms2 / hf_ms2),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrogram {
    /// Epoch seconds of each window start.
    pub window_starts: Vec<f64>,
    pub freqs: Vec<f64>,
    /// `power[window][bin]`, ms²/Hz.
    pub power: Vec<Vec<f64>>,
    pub band_defs: BandDefinition,
    pub hz: f64,
    pub window_s: f64,
    pub step_s: f64,
}

impl Spectrogram {
    /// Bins below one cycle per window cannot be resolved; VLF values there are unreliable.
    pub fn reliable_from_hz(&self) -> f64 {
        1.0 / self.window_s
    }

    pub fn band_powers(&self) -> Vec<BandPowers> {
        self.power
            .iter()
            .map(|p| band_powers(&self.freqs, p, &self.band_defs))
            .collect()
    }

    /// Copy restricted to frequencies `<= max_hz`, for compact export.
    pub fn cropped(&self, max_hz: f64) -> Spectrogram {
        let keep = self.freqs.partition_point(|&f| f <= max_hz + 1e-12);
        Spectrogram {
            window_starts: self.window_starts.clone(),
            freqs: self.freqs[..keep].to_vec(),
            power: self.power.iter().map(|p| p[..keep].to_vec()).collect(),
            ..self.clone()
        }
    }

    /// Averages each group of `factor` consecutive windows, for display.
    pub fn pooled(&self, factor: usize) -> Spectrogram {
        let factor = factor.max(1);
        if factor == 1 {
            return self.clone();
        }
        let power = self
            .power
            .chunks(factor)
            .map(|group| {
                let mut acc = vec![0.0; self.freqs.len()];
                for row in group {
                    for (a, v) in acc.iter_mut().zip(row) {
                        *a += v;
                    }
                }
                acc.iter().map(|a| a / group.len() as f64).collect()
            })
            .collect();
        Spectrogram {
            window_starts: self.window_starts.iter().step_by(factor).copied().collect(),
            power,
            step_s: self.step_s * factor as f64,
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let windows: Vec<_> = self
            .window_starts
            .iter()
            .zip(&self.power)
            .map(|(t0, p)| {
                let rounded: Vec<f64> = p.iter().map(|&v| round_sig(v, 6)).collect();
                serde_json::json!({ "t0": t0, "power": rounded })
            })
            .collect();
        serde_json::json!({
            "hz": self.hz,
            "window_s": self.window_s,
            "step_s": self.step_s,
            "reliable_from_hz": self.reliable_from_hz(),
            "freqs": self.freqs,
            "windows": windows,
            "bands": {
                "vlf": [self.band_defs.vlf.0, self.band_defs.vlf.1],
                "lf": [self.band_defs.lf.0, self.band_defs.lf.1],
                "hf": [self.band_defs.hf.0, self.band_defs.hf.1],
            },
        })
    }
}

fn round_sig(v: f64, digits: i32) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    let mag = v.abs().log10().floor() as i32;
    let scale = 10f64.powi(digits - 1 - mag);
    (v * scale).round() / scale
}

/// One periodogram per `window_s` window, advancing by `step_s`; partial
/// tail windows are dropped.
pub fn spectrogram(
    tachogram: &Tachogram,
    window_s: f64,
    step_s: f64,
) -> Result<Spectrogram, SpectralError> {
    let hz = tachogram.hz;
    let win = (window_s * hz).round() as usize;
    let step = (step_s * hz).round() as usize;
    if step == 0 || win == 0 || step > win {
        return Err(SpectralError::InvalidParameter(format!(
            "window {window_s} s / step {step_s} s at {hz} Hz"
        )));
    }
    let n = tachogram.values.len();
    if n < win {
        return Err(SpectralError::TooShort {
            duration_s: tachogram.duration(),
            window_s,
        });
    }
    let periodogram = Periodogram::new(win, hz)?;
    let count = (n - win) / step + 1;
    let power = (0..count)
        .into_par_iter()
        .map(|i| periodogram.power(&tachogram.values[i * step..i * step + win]))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Spectrogram {
        window_starts: (0..count)
            .map(|i| tachogram.t0 + (i * step) as f64 / hz)
            .collect(),
        freqs: periodogram.freqs(),
        power,
        band_defs: BandDefinition::default(),
        hz,
        window_s,
        step_s,
    })
}
