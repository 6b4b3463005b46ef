//! Reproducing the published questionnaire tables from their item labels.

use heartscape_eval::{
    administer_all, default_personas, likert_value, score_beauvis, verify_tables, CellStatus, EvalConfig,
    FixtureTransport, Job, LikertAnswer, PrintedTables, ScaleId, VerifyError, PERSONA_GENERATION_PROMPT,
    VISUALIZATIONS,
};
use std::path::PathBuf;

fn fixture_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/appendixD.json")
}

fn offline_responses() -> Vec<heartscape_eval::ScaleResponse> {
    let transport = FixtureTransport::from_path(&fixture_path()).unwrap();
    let jobs: Vec<Job> = default_personas()
        .into_iter()
        .flat_map(|p| {
            VISUALIZATIONS.iter().map(move |(v, _)| Job {
                persona: p.clone(),
                visualization: v.to_string(),
                scale: ScaleId::Beauvis,
                image: None,
            })
        })
        .collect();
    administer_all(jobs, &transport, &EvalConfig::default())
        .into_iter()
        .map(|(_, r)| r.unwrap())
        .collect()
}

fn cell<'a>(r: &'a heartscape_eval::VerificationReport, persona: &str, viz: &str) -> &'a heartscape_eval::verify::CellCheck {
    r.cells
        .iter()
        .find(|c| c.persona == persona && c.visualization == viz && c.scale == ScaleId::Beauvis)
        .unwrap()
}

#[test]
fn sarah_heatmap_row_scores_5_8() {
    let labels = ["Agree", "Agree", "Slightly agree", "Agree", "Agree"];
    let values: Vec<u8> = labels.iter().map(|l| likert_value(l).unwrap().unwrap()).collect();
    assert_eq!(values, [6, 6, 5, 6, 6]);
    let answers: Vec<LikertAnswer> = labels
        .iter()
        .enumerate()
        .map(|(k, l)| LikertAnswer::new(format!("BV{}", k + 1), l.parse().unwrap()))
        .collect();
    assert_eq!(score_beauvis(&answers).unwrap().to_string(), "5.8");
}

#[test]
fn offline_fixture_yields_twenty_ordered_responses() {
    let responses = offline_responses();
    assert_eq!(responses.len(), 20);
    assert_eq!(responses[0].persona, "Sarah Chen");
    assert_eq!(responses[0].visualization, "heatmap");
    assert_eq!(responses[0].aggregates[0].score.to_string(), "5.8");
    assert_eq!(responses[19].persona, "Robert Kim");
    assert_eq!(responses[19].visualization, "tsne");
    for r in &responses {
        assert_eq!(r.recompute().unwrap(), r.aggregates);
        assert_eq!(r.meta.model, "offline-fixture");
        assert_eq!(r.meta.timestamp, None);
        assert_eq!(r.meta.attempts, 1);
    }
}

#[test]
fn verification_flags_the_inconsistent_cells() {
    let report = verify_tables(&offline_responses(), &PrintedTables::bundled()).unwrap();
    assert_eq!(report.cells.len(), 20);
    let sarah = cell(&report, "Sarah Chen", "heatmap");
    assert_eq!((sarah.status, sarah.computed.to_string()), (CellStatus::Match, "5.8".into()));
    for (p, v, computed, printed) in [
        ("Marcus Thompson", "heatmap", "4.6", "4.4"),
        ("Sarah Chen", "recurrence", "4.4", "4.2"),
        ("Robert Kim", "heatmap", "1.2", "1.4"),
    ] {
        let c = cell(&report, p, v);
        assert_eq!(c.status, CellStatus::Mismatch, "{p}/{v}");
        assert_eq!(c.computed.to_string(), computed);
        assert_eq!(c.printed.to_string(), printed);
    }
    // Recomputing by hand from the label rows: three further rows disagree with
    // their printed score as well.
    let mut flagged: Vec<(String, String)> = report
        .mismatches()
        .map(|c| (c.persona.clone(), c.visualization.clone()))
        .collect();
    flagged.sort();
    assert_eq!(report.matched, 14);
    assert_eq!(flagged.len(), 6);
    let md = report.to_markdown();
    assert!(md.contains("| Marcus Thompson | heatmap | beauvis | BeauVis | 4.6 | 4.4 | MISMATCH |"));
    let json: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
    assert_eq!(json["mismatched"], 6);
}

#[test]
fn printed_grand_means_match_the_quoted_averages() {
    let report = verify_tables(&offline_responses(), &PrintedTables::bundled()).unwrap();
    let g = &report.grand_means;
    assert_eq!(g[0].persona, "Sarah Chen");
    assert!((g[0].printed.unwrap() - 4.96).abs() < 1e-12);
    assert_eq!(g[3].persona, "Robert Kim");
    assert!((g[3].printed.unwrap() - 1.32).abs() < 1e-12);
    // computed: Sarah (5.8+4.4+5.4+5.8+3.8)/5
    assert!((g[0].computed.unwrap() - 5.04).abs() < 1e-12);
}

#[test]
fn correlation_is_reported_for_twenty_cells() {
    let report = verify_tables(&offline_responses(), &PrintedTables::bundled()).unwrap();
    let c = &report.correlation;
    assert_eq!(c.cells, 20);
    assert_eq!(c.understand_source, "printed");
    let r = c.computed.unwrap();
    assert!(r > 0.8 && r <= 1.0, "{r}");
}

#[test]
fn missing_cells_are_reported() {
    let mut responses = offline_responses();
    responses.remove(3);
    match verify_tables(&responses, &PrintedTables::bundled()) {
        Err(VerifyError::IncompleteCoverage { missing }) => assert_eq!(missing.len(), 1),
        other => panic!("expected coverage error, got {other:?}"),
    }
    assert!(matches!(
        verify_tables(&[], &PrintedTables::bundled()),
        Err(VerifyError::IncompleteCoverage { .. })
    ));
}

#[test]
fn bundled_personas_are_verbatim() {
    let p = default_personas();
    assert_eq!(
        p[0].demographics,
        "34-year-old data analyst, Master's degree in Statistics, lives in San Francisco"
    );
    assert_eq!(
        p[3].preferences[1],
        "Simple text-based alerts (\u{201c}Your heart rate is normal\u{201d} vs \u{201c}Consult your doctor\u{201d})"
    );
    assert_eq!(p[2].challenges.len(), 4);
    assert_eq!(p[3].preferences.len(), 5);
    assert!(PERSONA_GENERATION_PROMPT.starts_with("Generate four distinct user personas who consume heart rate data"));
    assert!(PERSONA_GENERATION_PROMPT.ends_with("Present the four personas in a structured format."));
}
