//! Optional TOML run configuration. Every section is optional; flags win.

use heartscape::embedding::{TsneConfig, SWEEP_PERPLEXITIES};
use heartscape::hrvmetrics::WindowSpec;
use heartscape::recurrence::RecurrenceConfig;
use heartscape::synthgen::GeneratorConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralSettings {
    pub hz: f64,
    pub window_s: f64,
    pub step_s: f64,
}

impl Default for SpectralSettings {
    fn default() -> Self {
        Self {
            hz: 4.0,
            window_s: 300.0,
            step_s: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    pub perplexities: Vec<f64>,
    /// Uniform subsample cap on feature rows; `None` uses the command default.
    pub max_rows: Option<usize>,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            perplexities: SWEEP_PERPLEXITIES.to_vec(),
            max_rows: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoincareSettings {
    pub level: f64,
    /// Pairs drawn in the SVG; statistics always use every pair.
    pub max_points: usize,
}

impl Default for PoincareSettings {
    fn default() -> Self {
        Self {
            level: 0.95,
            max_points: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderSettings {
    pub heatmap_palette: String,
    pub clock_palette: String,
    pub recurrence_palette: String,
    pub spectrogram_palette: String,
    pub poincare_palette: String,
    pub tsne_palette: String,
    /// Beats drawn per clock face.
    pub clock_max_points: usize,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            heatmap_palette: "twilight".into(),
            clock_palette: "aurora_green".into(),
            recurrence_palette: "mona_lisa".into(),
            spectrogram_palette: "van_gogh".into(),
            poincare_palette: "plasma_layers".into(),
            tsne_palette: "twilight".into(),
            clock_max_points: 4000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub generator: GeneratorConfig,
    pub windows: WindowSpec,
    pub recurrence: RecurrenceConfig,
    pub spectral: SpectralSettings,
    pub tsne: TsneConfig,
    pub sweep: SweepSettings,
    pub poincare: PoincareSettings,
    pub render: RenderSettings,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_sections_keep_defaults() {
        let cfg: RunConfig = toml::from_str(
            "[generator]\ndays = 3\n[recurrence]\nthreshold = { epsilon = 25.0 }\n[sweep]\nperplexities = [10.0]\n",
        )
        .unwrap();
        assert_eq!(cfg.generator.days, 3);
        assert_eq!(cfg.generator.baseline_bpm, GeneratorConfig::default().baseline_bpm);
        assert_eq!(cfg.sweep.perplexities, vec![10.0]);
        assert_eq!(cfg.recurrence.embed_dim, 3);
        assert!(toml::from_str::<RunConfig>("[bogus]\nx = 1\n").is_err());
    }
}
