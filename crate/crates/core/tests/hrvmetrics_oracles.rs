use heartscape::hrvmetrics::{
    pnn50, rmssd, sdnn, standardize, window_features, FeatureMatrix, WindowSpec, N_FEATURES,
};
use heartscape::poincare::{sd1_sd2, PoincarePairs};
use heartscape::synthgen::{generate_week, GeneratorConfig};
use heartscape::timeseries::RrSeries;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn oracle_sd(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

fn oracle_rmssd(x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for k in 1..x.len() {
        acc += (x[k] - x[k - 1]).powi(2);
    }
    (acc / (x.len() - 1) as f64).sqrt()
}

fn oracle_pnn50(x: &[f64]) -> f64 {
    let mut count = 0;
    for k in 1..x.len() {
        if (x[k] - x[k - 1]).abs() > 50.0 {
            count += 1;
        }
    }
    f64::from(count) / (x.len() - 1) as f64
}

proptest! {
    #[test]
    fn statistics_match_brute_force(x in prop::collection::vec(300.0f64..2000.0, 2..500)) {
        prop_assert!((sdnn(&x).unwrap() - oracle_sd(&x)).abs() < 1e-9);
        prop_assert!((rmssd(&x).unwrap() - oracle_rmssd(&x)).abs() < 1e-9);
        prop_assert_eq!(pnn50(&x).unwrap(), oracle_pnn50(&x));
    }

    #[test]
    fn rmssd_is_sqrt2_sd1(x in prop::collection::vec(300.0f64..2000.0, 2..500)) {
        let sd1 = sd1_sd2(&PoincarePairs::from_intervals(&x).unwrap()).unwrap().sd1_ms;
        prop_assert!((rmssd(&x).unwrap() - 2f64.sqrt() * sd1).abs() < 1e-9);
    }
}

#[test]
fn boundary_examples() {
    assert_eq!(sdnn(&[800.0, 1000.0]).unwrap(), 100.0);
    let alt: Vec<f64> = (0..20).map(|k| if k % 2 == 0 { 800.0 } else { 850.0 }).collect();
    assert_eq!(pnn50(&alt).unwrap(), 0.0);
}

#[test]
fn week_window_count_matches_counting_oracle() {
    let series = generate_week(&GeneratorConfig::default()).unwrap();
    let spec = WindowSpec::default();
    let wf = window_features(&series, &spec, 0.0).unwrap();
    let expected = ((series.duration() - 300.0) / 30.0).floor() as usize + 1;
    assert_eq!(wf.positions, expected);
    assert_eq!(wf.matrix.len() + wf.dropped.len(), expected);
    assert_eq!(wf.matrix.len(), wf.matrix.context.len());
}

#[test]
fn saturday_windows_are_weekend() {
    // 2024-01-06 is a Saturday.
    let saturday = 1_704_499_200.0;
    let series = RrSeries::new(saturday + 3600.0, vec![900.0; 4000]).unwrap();
    let wf = window_features(&series, &WindowSpec::default(), 0.0).unwrap();
    assert!(!wf.matrix.is_empty());
    assert!(wf.matrix.values.iter().all(|r| r[7] == 1.0));
    assert!(wf.matrix.context.iter().all(|c| c.is_weekend));
}

#[test]
fn midpoint_hour_encoding() {
    // Window [05:57:30, 06:02:30) has its midpoint at 06:00.
    let start = 1_704_067_200.0 + 6.0 * 3600.0 - 150.0;
    let series = RrSeries::new(start, vec![1000.0; 400]).unwrap();
    let wf = window_features(&series, &WindowSpec::default(), 0.0).unwrap();
    let row = wf.matrix.values[0];
    let angle = 2.0 * std::f64::consts::PI * 6.0 / 24.0;
    assert!((row[5] - angle.sin()).abs() < 1e-12);
    assert!((row[6] - angle.cos()).abs() < 1e-12);
}

#[test]
fn prepending_one_step_shifts_rows_by_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rr: Vec<f64> = (0..3000).map(|_| rng.random_range(600.0..1100.0)).collect();
    let start = 1_704_067_200.0 + 5000.0;
    let base = RrSeries::new(start, rr.clone()).unwrap();
    let mut longer = vec![1000.0; 30];
    longer.extend(&rr);
    let shifted = RrSeries::new(start - 30.0, longer).unwrap();

    let spec = WindowSpec::default();
    let a = window_features(&base, &spec, 0.0).unwrap().matrix;
    let b = window_features(&shifted, &spec, 0.0).unwrap().matrix;
    assert_eq!(b.len(), a.len() + 1);
    // The last prepended beat closes exactly at the original start, so it also
    // falls in the first shared window; from the second one on the beat sets agree.
    for k in 1..a.len() {
        assert!((a.context[k].window_start - b.context[k + 1].window_start).abs() < 1e-6);
        for c in 0..N_FEATURES {
            assert!(
                (a.values[k][c] - b.values[k + 1][c]).abs() < 1e-6,
                "row {k} col {c}: {} vs {}",
                a.values[k][c],
                b.values[k + 1][c]
            );
        }
    }
}

#[test]
fn standardize_is_idempotent() {
    let series = generate_week(&GeneratorConfig {
        days: 2,
        ..Default::default()
    })
    .unwrap();
    let m = window_features(&series, &WindowSpec::default(), 0.0).unwrap().matrix;
    let once = standardize(&m).unwrap();
    let twice = standardize(&FeatureMatrix {
        scaling: None,
        ..once.clone()
    })
    .unwrap();
    for (r1, r2) in once.values.iter().zip(&twice.values) {
        for c in 0..N_FEATURES {
            assert!((r1[c] - r2[c]).abs() < 1e-9);
        }
    }
    // Non-constant standardized columns have zero mean and unit population sd.
    for c in 0..7 {
        let col: Vec<f64> = once.values.iter().map(|r| r[c]).collect();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        assert!(mean.abs() < 1e-9);
        assert!((oracle_sd(&col) - 1.0).abs() < 1e-9);
    }
}
