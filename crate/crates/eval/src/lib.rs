//! Persona-based questionnaire administration and scoring for visualization
//! prototypes.
//!
//! The scoring core ([`scoring`], [`verify`]) is pure. [`administer`] talks to
//! a JSON-over-HTTP model endpoint or, offline, to canned fixtures.

pub mod administer;
pub mod likert;
pub mod persona;
pub mod scale;
pub mod scoring;
pub mod verify;

pub use administer::{
    administer, administer_all, build_prompt, parse_labels, Backoff, EvalConfig, EvalError, EvalRequest, FixtureEntry,
    FixtureTransport, HttpTransport, Job, ScaleResponse, Transport, TransportError,
};
pub use likert::{likert_value, LikertAnswer, LikertLabel, UnknownLabel};
pub use persona::{default_personas, persona_by_name, PersonaProfile, VlatLevel, PERSONA_GENERATION_PROMPT};
pub use scale::{Scale, ScaleId, BEAUVIS, PREVIS};
pub use scoring::{score_beauvis, score_previs, score_scale, NamedScore, PrevisScores, ScoringError, SubscaleScore};
pub use verify::{pearson, verify_tables, CellStatus, PrintedTables, VerificationReport, VerifyError};

/// Visualization ids in reporting order, with display titles.
pub const VISUALIZATIONS: [(&str, &str); 5] = [
    ("heatmap", "circadian heatmap"),
    ("recurrence", "recurrence plot"),
    ("spectrogram", "power spectral density spectrogram"),
    ("poincare", "Poincaré plot"),
    ("tsne", "t-SNE embedding"),
];

pub fn visualization_rank(id: &str) -> usize {
    VISUALIZATIONS
        .iter()
        .position(|(v, _)| *v == id)
        .unwrap_or(VISUALIZATIONS.len())
}

pub fn visualization_title(id: &str) -> &str {
    VISUALIZATIONS
        .iter()
        .find(|(v, _)| *v == id)
        .map_or(id, |(_, t)| t)
}
