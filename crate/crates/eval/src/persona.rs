//! Reader personas spanning visualization literacy levels.

use serde::{Deserialize, Serialize};
use std::fmt::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VlatLevel {
    High,
    ModerateHigh,
    Moderate,
    Low,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonaProfile {
    pub name: String,
    pub title: String,
    pub vlat_level: VlatLevel,
    pub demographics: String,
    /// Mini-VLAT level line.
    pub mini_vlat: String,
    pub goals: Vec<String>,
    pub challenges: Vec<String>,
    pub preferences: Vec<String>,
}

impl PersonaProfile {
    /// Plain-text block placed at the top of every questionnaire prompt.
    pub fn prompt_block(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{}", self.title);
        let _ = writeln!(s, "Demographics: {}", self.demographics);
        let _ = writeln!(s, "Mini-VLAT Level: {}", self.mini_vlat);
        for (heading, lines) in [
            ("Context & Goals", &self.goals),
            ("Challenges", &self.challenges),
            ("Preferred Visualizations", &self.preferences),
        ] {
            let _ = writeln!(s, "{heading}:");
            for l in lines {
                let _ = writeln!(s, "- {l}");
            }
        }
        s
    }
}

const PERSONAS_JSON: &str = include_str!("../data/personas.json");

/// The four canonical personas, most to least literate.
pub fn default_personas() -> Vec<PersonaProfile> {
    serde_json::from_str(PERSONAS_JSON).expect("bundled persona data is valid")
}

pub fn persona_by_name(name: &str) -> Option<PersonaProfile> {
    default_personas().into_iter().find(|p| p.name == name)
}

/// Template for regenerating a persona set with a model.
pub const PERSONA_GENERATION_PROMPT: &str = "Generate four distinct user personas who consume heart rate data, differentiating them by their levels of visualization literacy using the Mini-VLAT framework as the reference. For each persona, provide a fictional name, demographic background, their specific visualization literacy level based on Mini-VLAT dimensions, and their goals and motivations for using heart rate data. Describe the typical context in which each persona engages with heart rate data (for example, personal health tracking, athletic training, or medical monitoring), along with the challenges or limitations they face when interpreting visualizations. Indicate their preferred visualization types or design features, if applicable. Present the four personas in a structured format.";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_levels_in_order() {
        let p = default_personas();
        let levels: Vec<_> = p.iter().map(|p| p.vlat_level).collect();
        assert_eq!(
            levels,
            [VlatLevel::High, VlatLevel::ModerateHigh, VlatLevel::Moderate, VlatLevel::Low]
        );
        assert!(p[0].prompt_block().contains("Competitive marathon runner"));
    }
}
