//! Heart-rate-variability analysis toolkit.
//!
//! The crate is organised around [`timeseries::RrSeries`], a sequence of
//! beat-to-beat intervals. Every analysis module consumes it:
//!
//! - [`synthgen`] produces seeded week-long synthetic series,
//! - [`hrvmetrics`] computes time-domain statistics and windowed feature matrices,
//! - [`circadian`] aggregates beats into hour-by-weekday grids and clock-face point sets,
//! - [`recurrence`] builds delay-embedded recurrence matrices,
//! - [`spectral`] resamples the tachogram and computes PSD spectrograms and band powers,
//! - [`embedding`] is an exact t-SNE over feature matrices,
//! - [`poincare`] computes SD1/SD2 and the confidence ellipse,
//! - [`render`] turns all of the above into deterministic SVG documents.

pub mod circadian;
pub mod embedding;
pub mod hrvmetrics;
pub mod poincare;
pub mod recurrence;
pub mod render;
pub mod spectral;
pub mod synthgen;
pub mod timeseries;

pub use timeseries::{HrSeries, RrSeries};
