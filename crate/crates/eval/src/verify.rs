//! Recomputing printed result tables from item-level answers.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

use crate::administer::ScaleResponse;
use crate::persona::default_personas;
use crate::scale::ScaleId;
use crate::scoring::{ScoringError, SubscaleScore};
use crate::visualization_rank;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("responses do not cover {} printed cells, first: {}", missing.len(), missing.first().map(String::as_str).unwrap_or("?"))]
    IncompleteCoverage { missing: Vec<String> },
    #[error("response {cell}: {source}")]
    Scoring { cell: String, source: ScoringError },
    #[error("bad printed table: {0}")]
    Tables(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrintedCell {
    pub persona: String,
    pub visualization: String,
    pub scale: ScaleId,
    pub subscale: String,
    pub printed: SubscaleScore,
}

impl PrintedCell {
    fn key(&self) -> String {
        format!("{}/{}/{}", self.persona, self.visualization, self.subscale)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrintedTables {
    pub cells: Vec<PrintedCell>,
}

const PRINTED_JSON: &str = include_str!("../data/printed_tables.json");

impl PrintedTables {
    /// Published BeauVis scores and PREVis subscale means for the four default
    /// personas and five visualizations.
    pub fn bundled() -> Self {
        Self::from_json(PRINTED_JSON).expect("bundled tables are valid")
    }

    pub fn from_json(text: &str) -> Result<Self, VerifyError> {
        let cells = serde_json::from_str(text).map_err(|e| VerifyError::Tables(e.to_string()))?;
        Ok(Self { cells })
    }

    pub fn get(&self, persona: &str, visualization: &str, subscale: &str) -> Option<SubscaleScore> {
        self.cells
            .iter()
            .find(|c| c.persona == persona && c.visualization == visualization && c.subscale == subscale)
            .map(|c| c.printed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CellStatus {
    Match,
    Mismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCheck {
    pub persona: String,
    pub visualization: String,
    pub scale: ScaleId,
    pub subscale: String,
    pub computed: SubscaleScore,
    pub printed: SubscaleScore,
    pub status: CellStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrandMean {
    pub persona: String,
    /// Mean of the recomputed BeauVis scores across visualizations.
    pub computed: Option<f64>,
    pub printed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub variant: String,
    /// Where the Understand series came from: recomputed responses or the printed table.
    pub understand_source: String,
    pub cells: usize,
    pub computed: Option<f64>,
    pub printed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub cells: Vec<CellCheck>,
    pub matched: usize,
    pub mismatched: usize,
    pub grand_means: Vec<GrandMean>,
    pub correlation: Correlation,
}

impl VerificationReport {
    pub fn mismatches(&self) -> impl Iterator<Item = &CellCheck> {
        self.cells.iter().filter(|c| c.status == CellStatus::Mismatch)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# Table verification\n");
        let _ = writeln!(
            s,
            "{} of {} cells match; {} mismatch.\n",
            self.matched,
            self.cells.len(),
            self.mismatched
        );
        let _ = writeln!(s, "| Persona | Visualization | Scale | Subscale | Computed | Printed | Status |");
        let _ = writeln!(s, "|---|---|---|---|---|---|---|");
        for c in &self.cells {
            let status = match c.status {
                CellStatus::Match => "MATCH",
                CellStatus::Mismatch => "MISMATCH",
            };
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} | {} | {} |",
                c.persona, c.visualization, c.scale, c.subscale, c.computed, c.printed, status
            );
        }
        let fmt = |v: Option<f64>, d: usize| v.map_or("n/a".to_string(), |x| format!("{x:.d$}"));
        let _ = writeln!(s, "\n## BeauVis grand means by persona\n");
        let _ = writeln!(s, "| Persona | Computed | Printed |");
        let _ = writeln!(s, "|---|---|---|");
        for g in &self.grand_means {
            let _ = writeln!(s, "| {} | {} | {} |", g.persona, fmt(g.computed, 2), fmt(g.printed, 2));
        }
        let c = &self.correlation;
        let _ = writeln!(s, "\n## Correlation\n");
        let _ = writeln!(
            s,
            "Pearson r, {} ({} cells, Understand from {}): computed {}, printed {}",
            c.variant,
            c.cells,
            c.understand_source,
            fmt(c.computed, 3),
            fmt(c.printed, 3)
        );
        s
    }
}

/// Pearson correlation; `None` when either series is constant or lengths differ.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Checks every printed cell of each scale present in `responses` (BeauVis is
/// always required) against aggregates recomputed from the item answers.
pub fn verify_tables(responses: &[ScaleResponse], printed: &PrintedTables) -> Result<VerificationReport, VerifyError> {
    let mut recomputed: BTreeMap<(String, String, String), SubscaleScore> = BTreeMap::new();
    for r in responses {
        let cell = format!("{}/{}/{}", r.persona, r.visualization, r.scale);
        let scores = r
            .recompute()
            .map_err(|source| VerifyError::Scoring { cell, source })?;
        for s in scores {
            recomputed.insert((r.persona.clone(), r.visualization.clone(), s.subscale), s.score);
        }
    }
    let has_previs = responses.iter().any(|r| r.scale == ScaleId::Previs);

    let persona_rank: BTreeMap<String, usize> = default_personas()
        .into_iter()
        .enumerate()
        .map(|(k, p)| (p.name, k))
        .collect();
    let mut targets: Vec<&PrintedCell> = printed
        .cells
        .iter()
        .filter(|c| c.scale == ScaleId::Beauvis || has_previs)
        .collect();
    targets.sort_by_key(|c| {
        (
            c.scale,
            visualization_rank(&c.visualization),
            persona_rank.get(&c.persona).copied().unwrap_or(usize::MAX),
        )
    });

    let mut missing = Vec::new();
    let mut cells = Vec::new();
    for t in targets {
        match recomputed.get(&(t.persona.clone(), t.visualization.clone(), t.subscale.clone())) {
            None => missing.push(t.key()),
            Some(&computed) => cells.push(CellCheck {
                persona: t.persona.clone(),
                visualization: t.visualization.clone(),
                scale: t.scale,
                subscale: t.subscale.clone(),
                computed,
                printed: t.printed,
                status: if computed == t.printed {
                    CellStatus::Match
                } else {
                    CellStatus::Mismatch
                },
            }),
        }
    }
    if cells.is_empty() && missing.is_empty() {
        missing.push("BeauVis cells".to_string());
    }
    if !missing.is_empty() {
        return Err(VerifyError::IncompleteCoverage { missing });
    }

    let beauvis: Vec<&CellCheck> = cells.iter().filter(|c| c.scale == ScaleId::Beauvis).collect();
    let mut personas: Vec<&str> = beauvis.iter().map(|c| c.persona.as_str()).collect();
    personas.sort_by_key(|p| persona_rank.get(*p).copied().unwrap_or(usize::MAX));
    personas.dedup();
    let grand_means = personas
        .iter()
        .map(|&p| {
            let row: Vec<&&CellCheck> = beauvis.iter().filter(|c| c.persona == p).collect();
            let computed: Vec<f64> = row.iter().filter_map(|c| c.computed.value()).collect();
            let shown: Vec<f64> = row.iter().filter_map(|c| c.printed.value()).collect();
            GrandMean {
                persona: p.to_string(),
                computed: mean(&computed),
                printed: mean(&shown),
            }
        })
        .collect();

    let mut bx = Vec::new();
    let mut ux = Vec::new();
    let mut bp = Vec::new();
    let mut up = Vec::new();
    for c in &beauvis {
        let printed_u = printed.get(&c.persona, &c.visualization, "Understand").and_then(|s| s.value());
        let computed_u = if has_previs {
            recomputed
                .get(&(c.persona.clone(), c.visualization.clone(), "Understand".to_string()))
                .and_then(|s| s.value())
        } else {
            printed_u
        };
        if let (Some(b), Some(u)) = (c.computed.value(), computed_u) {
            bx.push(b);
            ux.push(u);
        }
        if let (Some(b), Some(u)) = (c.printed.value(), printed_u) {
            bp.push(b);
            up.push(u);
        }
    }
    let correlation = Correlation {
        variant: "BeauVis score vs PREVis Understand mean".to_string(),
        understand_source: if has_previs { "recomputed" } else { "printed" }.to_string(),
        cells: bx.len(),
        computed: pearson(&bx, &ux),
        printed: pearson(&bp, &up),
    };

    let matched = cells.iter().filter(|c| c.status == CellStatus::Match).count();
    Ok(VerificationReport {
        mismatched: cells.len() - matched,
        matched,
        cells,
        grand_means,
        correlation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_correlation_is_one() {
        let x = [1.0, 2.5, 3.0, 7.0];
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(pearson(&x, &[1.0; 4]), None);
    }

    #[test]
    fn bundled_tables_have_every_cell() {
        let t = PrintedTables::bundled();
        assert_eq!(t.cells.iter().filter(|c| c.scale == ScaleId::Beauvis).count(), 20);
        assert_eq!(t.cells.iter().filter(|c| c.scale == ScaleId::Previs).count(), 80);
        assert_eq!(t.get("Robert Kim", "heatmap", "DataFeat").unwrap().to_string(), "N/A*");
    }
}
