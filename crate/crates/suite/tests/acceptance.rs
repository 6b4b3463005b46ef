//! Acceptance gates. Each criterion runs at its stated tolerance and time
//! budget and prints one PASS/FAIL line; the binary exits non-zero if any fail.

use heartscape::circadian::{week_grid, GridMetric};
use heartscape::embedding::{
    grid_sweep, kl_divergence, kl_gradient, perplexity_affinities, silhouette, tsne, TsneConfig, TsneRun,
};
use heartscape::hrvmetrics::{rmssd, standardize, window_features, WindowSpec};
use heartscape::poincare::{confidence_ellipse, poincare_pairs, sd1_sd2, PoincarePairs};
use heartscape::recurrence::{delay_embed, recurrence_matrix, RecurrenceConfig, Threshold};
use heartscape::spectral::{hann, resample_rr, spectrogram};
use heartscape::synthgen::{generate_week, GeneratorConfig};
use heartscape_eval::{score_beauvis, FixtureEntry, LikertAnswer, PrintedTables, ScaleId, SubscaleScore};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::collections::BTreeSet;
use std::f64::consts::FRAC_1_SQRT_2;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

type Outcome = Result<String, String>;
/// Id, name, time budget, check.
type Criterion = (u8, &'static str, Duration, fn() -> Outcome);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn workspace_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

/// The three cells whose printed value disagrees with its own label row.
const KNOWN_INCONSISTENT: [(&str, &str); 3] = [
    ("Marcus Thompson", "heatmap"),
    ("Sarah Chen", "recurrence"),
    ("Robert Kim", "heatmap"),
];

fn known_inconsistent() -> BTreeSet<(String, String)> {
    KNOWN_INCONSISTENT.iter().map(|(p, v)| (p.to_string(), v.to_string())).collect()
}

/// Scores every fixture row in process; returns the match count and the mismatched cells.
fn score_fixture() -> Result<(usize, BTreeSet<(String, String)>), String> {
    let text = std::fs::read_to_string(workspace_file("fixtures/appendixD.json")).map_err(|e| e.to_string())?;
    let rows: Vec<FixtureEntry> = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let printed = PrintedTables::bundled();
    let mut matched = 0;
    let mut flagged = BTreeSet::new();
    for row in rows.iter().filter(|r| r.scale == ScaleId::Beauvis) {
        let answers = row
            .labels
            .iter()
            .map(|(code, label)| Ok(LikertAnswer::new(code.clone(), label.parse().map_err(|e| format!("{e}"))?)))
            .collect::<Result<Vec<_>, String>>()?;
        let computed = score_beauvis(&answers).map_err(|e| e.to_string())?;
        let want: SubscaleScore = printed
            .get(&row.persona, &row.visualization, "BeauVis")
            .ok_or_else(|| format!("no printed cell for {}/{}", row.persona, row.visualization))?;
        if computed.to_string() == want.to_string() {
            matched += 1;
        } else {
            flagged.insert((row.persona.clone(), row.visualization.clone()));
        }
    }
    Ok((matched, flagged))
}

fn cell_list(cells: &BTreeSet<(String, String)>) -> String {
    cells.iter().map(|(p, v)| format!("{p}/{v}")).collect::<Vec<_>>().join(", ")
}

fn printed_table_reproduction() -> Outcome {
    let (matched, flagged) = score_fixture()?;
    let detail = format!("{matched}/20 cells reproduce; flagged {}: {}", flagged.len(), cell_list(&flagged));
    check(matched == 17 && flagged == known_inconsistent(), detail)
}

fn sd1_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(2..=5000);
        let rr: Vec<f64> = (0..n).map(|_| rng.random_range(300.0..2000.0)).collect();
        let sd1 = sd1_sd2(&PoincarePairs::from_intervals(&rr).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?
            .sd1_ms;
        let r = rmssd(&rr).map_err(|e| e.to_string())?;
        worst = worst.max((sd1 - r / 2f64.sqrt()).abs());
    }
    check(worst < 1e-9, format!("worst |sd1 - rmssd/sqrt2| = {worst:.3e} ms"))
}

fn ellipse_coverage() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let along = Normal::new(0.0, 55.0).unwrap();
    let across = Normal::new(0.0, 18.0).unwrap();
    let pairs = PoincarePairs {
        pairs: (0..100_000)
            .map(|_| {
                let u = along.sample(&mut rng);
                let v = across.sample(&mut rng);
                (850.0 + (u - v) * FRAC_1_SQRT_2, 850.0 + (u + v) * FRAC_1_SQRT_2)
            })
            .collect(),
    };
    let e = confidence_ellipse(&pairs, 0.95).map_err(|e| e.to_string())?;
    let inside = pairs.pairs.iter().filter(|p| e.contains(p.0, p.1)).count();
    let rate = inside as f64 / 1e5;
    check((0.945..=0.955).contains(&rate), format!("coverage {rate:.4}"))
}

fn lf_hf(respiratory_hz: f64) -> Result<f64, String> {
    let cfg = GeneratorConfig {
        respiratory_hz,
        ..Default::default()
    };
    let tach = resample_rr(&generate_week(&cfg).map_err(|e| e.to_string())?, 4.0).map_err(|e| e.to_string())?;
    let bp = spectrogram(&tach, 300.0, 300.0).map_err(|e| e.to_string())?.band_powers();
    let lf: f64 = bp.iter().map(|b| b.lf_ms2).sum();
    let hf: f64 = bp.iter().map(|b| b.hf_ms2).sum();
    Ok(lf / hf)
}

fn spectral() -> Outcome {
    let series = generate_week(&GeneratorConfig::default()).map_err(|e| e.to_string())?;
    let t0 = Instant::now();
    let tach = resample_rr(&series, 4.0).map_err(|e| e.to_string())?;
    let sg = spectrogram(&tach, 300.0, 30.0).map_err(|e| e.to_string())?;
    let build = t0.elapsed();

    let win = (300.0 * tach.hz) as usize;
    let step = (30.0 * tach.hz) as usize;
    let w = hann(win);
    let w2: f64 = w.iter().map(|v| v * v).sum();
    let df = sg.freqs[1] - sg.freqs[0];
    let mut worst_parseval: f64 = 0.0;
    for (k, p) in sg.power.iter().enumerate() {
        let seg = &tach.values[k * step..k * step + win];
        let mean = seg.iter().sum::<f64>() / win as f64;
        let energy: f64 = seg.iter().zip(&w).map(|(x, w)| ((x - mean) * w).powi(2)).sum::<f64>() / w2;
        let total = p.iter().sum::<f64>() * df;
        worst_parseval = worst_parseval.max(((total - energy) / energy).abs());
    }

    let hf = sg.band_defs.hf;
    let in_band = sg
        .power
        .iter()
        .filter(|p| {
            let peak = sg
                .freqs
                .iter()
                .zip(p.iter())
                .filter(|(f, _)| (hf.0..=hf.1).contains(*f))
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(f, _)| *f);
            peak.is_some_and(|f| (0.23..=0.27).contains(&f))
        })
        .count();
    let hf_share = in_band as f64 / sg.power.len() as f64;

    let ratio = lf_hf(0.10)? / lf_hf(0.25)?;
    let detail = format!(
        "parseval worst rel {worst_parseval:.2e}; HF peak in [0.23,0.27] for {:.1}% of {} windows; \
         LF/HF rises {ratio:.1}x at 0.10 Hz; week spectrogram {:.2}s",
        100.0 * hf_share,
        sg.power.len(),
        build.as_secs_f64()
    );
    check(
        worst_parseval < 1e-6 && hf_share >= 0.9 && ratio >= 5.0 && build < Duration::from_secs(60),
        detail,
    )
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn recurrence() -> Outcome {
    let series = generate_week(&GeneratorConfig {
        days: 1,
        ..Default::default()
    })
    .map_err(|e| e.to_string())?;
    let rr = &series.intervals()[5000..6002];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let inputs = [
        ("rr-embedded", delay_embed(rr, 3, 1).map_err(|e| e.to_string())?),
        (
            "uniform",
            (0..1000).map(|_| (0..3).map(|_| rng.random_range(600.0..1100.0)).collect()).collect(),
        ),
    ];
    let mut notes = Vec::new();
    let mut ok = true;
    for (name, states) in &inputs {
        assert_eq!(states.len(), 1000);
        for target in [0.05, 0.10, 0.20] {
            let cfg = RecurrenceConfig {
                threshold: Threshold::TargetRate(target),
                ..Default::default()
            };
            let m = recurrence_matrix(states, &cfg).map_err(|e| e.to_string())?;
            let mut recount = 0usize;
            let mut agree = true;
            for i in 0..m.n {
                agree &= m.get(i, i);
                for j in 0..m.n {
                    let hit = euclid(&states[i.min(j)], &states[i.max(j)]) <= m.epsilon_used;
                    agree &= m.get(i, j) == hit && m.get(i, j) == m.get(j, i);
                    recount += usize::from(hit);
                }
            }
            let rate = recount as f64 / (m.n * m.n) as f64;
            ok &= agree && rate == m.rate && (rate - target).abs() <= 0.005;
            notes.push(format!("{name}@{target}: {rate:.4}"));
        }
    }
    check(ok, format!("rates {}", notes.join(", ")))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn gaussian_rows(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    (0..n).map(|_| (0..d).map(|_| normal.sample(&mut rng)).collect()).collect()
}

fn affinity_perplexity_error() -> Result<f64, String> {
    let x = gaussian_rows(60, 5, 61);
    let n = x.len();
    let mut worst: f64 = 0.0;
    for perplexity in [5.0, 15.0, 30.0] {
        let aff = perplexity_affinities(&x, perplexity).map_err(|e| e.to_string())?;
        for i in 0..n {
            let w: Vec<f64> = (0..n)
                .map(|j| if i == j { 0.0 } else { (-aff.betas[i] * sq_dist(&x[i], &x[j])).exp() })
                .collect();
            let z: f64 = w.iter().sum();
            let h: f64 = w.iter().filter(|&&v| v > 0.0).map(|v| -(v / z) * (v / z).log2()).sum();
            worst = worst.max(((2f64.powf(h) - perplexity) / perplexity).abs());
        }
    }
    Ok(worst)
}

fn gradient_error() -> Result<f64, String> {
    let x = gaussian_rows(10, 4, 62);
    let cfg = TsneConfig {
        perplexity: 2.5,
        ..Default::default()
    };
    let mut run = TsneRun::new(&x, &cfg).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    // Check in the exaggerated phase and after it.
    for stop in [100, 400] {
        while run.iteration() < stop {
            run.step().map_err(|e| e.to_string())?;
        }
        let aff = run.affinities().clone();
        let y = run.coordinates().to_vec();
        let analytic = kl_gradient(&aff, &y, 2, 1.0);
        let h = 1e-5;
        let (mut num, mut den) = (0.0, 0.0);
        for k in 0..y.len() {
            let (mut plus, mut minus) = (y.clone(), y.clone());
            plus[k] += h;
            minus[k] -= h;
            let fd = (kl_divergence(&aff, &plus, 2) - kl_divergence(&aff, &minus, 2)) / (2.0 * h);
            num += (fd - analytic[k]).powi(2);
            den += analytic[k].powi(2);
        }
        worst = worst.max((num / den).sqrt());
    }
    Ok(worst)
}

fn one_nn_agreement(points: &[Vec<f64>], labels: &[usize]) -> f64 {
    let hits = (0..points.len())
        .filter(|&i| {
            let nn = (0..points.len())
                .filter(|&j| j != i)
                .min_by(|&a, &b| sq_dist(&points[i], &points[a]).total_cmp(&sq_dist(&points[i], &points[b])))
                .unwrap();
            labels[nn] == labels[i]
        })
        .count();
    hits as f64 / points.len() as f64
}

fn cluster_agreement() -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(63);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let centres = [[0.0, 0.0, 0.0, 0.0], [10.0, 0.0, 0.0, 0.0], [5.0, 8.66, 0.0, 0.0]];
    let (mut x, mut labels) = (Vec::new(), Vec::new());
    for (c, centre) in centres.iter().enumerate() {
        for _ in 0..60 {
            x.push(centre.iter().map(|m| m + normal.sample(&mut rng)).collect::<Vec<f64>>());
            labels.push(c);
        }
    }
    let e = tsne(
        &x,
        &TsneConfig {
            perplexity: 15.0,
            ..Default::default()
        },
    )
    .map_err(|e| e.to_string())?;
    Ok(one_nn_agreement(&e.points, &labels))
}

fn tsne_gates() -> Outcome {
    let affinity = affinity_perplexity_error()?;
    let gradient = gradient_error()?;
    let clusters = cluster_agreement()?;

    // Default week, standardized window features thinned to 2000 rows.
    let series = generate_week(&GeneratorConfig::default()).map_err(|e| e.to_string())?;
    let matrix = standardize(&window_features(&series, &WindowSpec::default(), 0.0).map_err(|e| e.to_string())?.matrix)
        .map_err(|e| e.to_string())?;
    let n = matrix.len();
    let keep: Vec<usize> = (0..2000.min(n)).map(|i| i * n / 2000.min(n)).collect();
    let rows: Vec<Vec<f64>> = keep.iter().map(|&i| matrix.values[i].to_vec()).collect();
    let weekend: Vec<usize> = keep.iter().map(|&i| usize::from(matrix.context[i].is_weekend)).collect();
    let t0 = Instant::now();
    let runs = grid_sweep(&rows, &[5.0, 15.0, 30.0], 2, &TsneConfig::default()).map_err(|e| e.to_string())?;
    let sweep = t0.elapsed();
    let sil = silhouette(&runs[2].points, &weekend).ok_or("weekend labels form a single class")?;

    let detail = format!(
        "2^H rel err {affinity:.1e}; gradient rel err {gradient:.1e}; 3-cluster 1-NN {clusters:.3}; \
         weekend silhouette {sil:.3} at p=30; sweep of {} rows {:.1}s",
        rows.len(),
        sweep.as_secs_f64()
    );
    check(
        affinity < 1e-4 && gradient < 1e-4 && clusters >= 0.95 && sil > 0.0 && sweep < Duration::from_secs(180),
        detail,
    )
}

fn poincare_band() -> Outcome {
    let series = generate_week(&GeneratorConfig::default()).map_err(|e| e.to_string())?;
    let s = sd1_sd2(&poincare_pairs(&series).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let ratio = s.ratio.ok_or("degenerate SD2")?;
    check(
        (0.1..=0.5).contains(&ratio),
        format!("SD1 {:.1} ms, SD2 {:.1} ms, ratio {ratio:.3}", s.sd1_ms, s.sd2_ms),
    )
}

/// Runs the `heartscape` command line in process.
fn run_cli(args: &[&str]) -> Result<(), String> {
    let code = heartscape_cli::run(std::iter::once("heartscape").chain(args.iter().copied()));
    if code == 0 {
        Ok(())
    } else {
        Err(format!("{args:?} exited {code}"))
    }
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut manifests = Vec::new();
    let mut slowest = Duration::ZERO;
    for run in ["a", "b"] {
        let dir = tmp.path().join(run);
        let t0 = Instant::now();
        run_cli(&["pipeline", "--seed", "42", "--out", dir.to_str().unwrap()])?;
        slowest = slowest.max(t0.elapsed());
        let text = std::fs::read_to_string(dir.join("manifest.json")).map_err(|e| e.to_string())?;
        let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        manifests.push(v["outputs"].clone());
    }
    let outputs = manifests[0].as_array().map_or(0, Vec::len);
    let svgs = manifests[0]
        .as_array()
        .map_or(0, |o| o.iter().filter(|r| r["path"].as_str().is_some_and(|p| p.ends_with(".svg"))).count());
    check(
        manifests[0] == manifests[1] && outputs > 0 && slowest < Duration::from_secs(300),
        format!(
            "{outputs} artifacts ({svgs} SVG) hash-identical: {}; slowest pipeline {:.1}s",
            manifests[0] == manifests[1],
            slowest.as_secs_f64()
        ),
    )
}

fn circadian() -> Outcome {
    let series = generate_week(&GeneratorConfig::default()).map_err(|e| e.to_string())?;
    let grid = week_grid(&series, GridMetric::MeanBpm, 0.0).map_err(|e| e.to_string())?;
    let minima: Vec<usize> = grid
        .values
        .iter()
        .filter_map(|day| {
            day.iter()
                .enumerate()
                .filter_map(|(h, v)| v.map(|v| (h, v)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(h, _)| h)
        })
        .collect();
    let hits = minima.iter().filter(|h| (2..=6).contains(*h)).count();
    check(hits >= 6, format!("minimum-HR hour per weekday {minima:?}; {hits}/7 in 02-06"))
}

fn offline_evaluation() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let eval_dir = tmp.path().join("eval");
    let verify_dir = tmp.path().join("verify");
    let fixture = workspace_file("fixtures/appendixD.json");
    run_cli(&["evaluate", "--offline", fixture.to_str().unwrap(), "--out", eval_dir.to_str().unwrap()])?;
    let responses = eval_dir.join("responses.json");
    run_cli(&["verify", "--responses", responses.to_str().unwrap(), "--out", verify_dir.to_str().unwrap()])?;
    let md = std::fs::read_to_string(verify_dir.join("verification.md")).map_err(|e| e.to_string())?;
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(verify_dir.join("verification.json")).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let flagged: BTreeSet<(String, String)> = report["cells"]
        .as_array()
        .ok_or("report has no cells")?
        .iter()
        .filter(|c| c["status"] == "MISMATCH")
        .map(|c| (c["persona"].as_str().unwrap_or("").to_string(), c["visualization"].as_str().unwrap_or("").to_string()))
        .collect();
    let named_rows = KNOWN_INCONSISTENT
        .iter()
        .all(|(p, v)| md.lines().any(|l| l.starts_with(&format!("| {p} | {v} |")) && l.contains("MISMATCH")));
    // The emitted report must be the one criterion 1 computes, named cells included.
    let (_, in_process) = score_fixture()?;
    check(
        flagged == in_process && named_rows && known_inconsistent().is_subset(&flagged),
        format!(
            "offline report equals in-process scoring: {}; flags {}: {}",
            flagged == in_process,
            flagged.len(),
            cell_list(&flagged)
        ),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "printed BeauVis table reproduction", Duration::from_secs(1), printed_table_reproduction),
        (2, "SD1 equals RMSSD/sqrt2", Duration::from_secs(10), sd1_identity),
        (3, "95% ellipse coverage", Duration::from_secs(5), ellipse_coverage),
        (4, "spectral correctness", Duration::from_secs(600), spectral),
        (5, "recurrence calibration", Duration::from_secs(5), recurrence),
        (6, "t-SNE quality gates", Duration::from_secs(600), tsne_gates),
        (7, "Poincare SD1/SD2 band", Duration::from_secs(60), poincare_band),
        (8, "pipeline determinism", Duration::from_secs(600), determinism),
        (9, "circadian trough", Duration::from_secs(60), circadian),
        (10, "offline evaluate + verify", Duration::from_secs(60), offline_evaluation),
    ];
    let mut failed = Vec::new();
    for (id, name, budget, f) in criteria {
        let t0 = Instant::now();
        let outcome = f();
        let elapsed = t0.elapsed();
        let (pass, mut detail) = match outcome {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        let in_time = elapsed <= budget;
        if !in_time {
            detail.push_str(&format!("; over budget of {}s", budget.as_secs()));
        }
        let verdict = if pass && in_time { "PASS" } else { "FAIL" };
        println!("{verdict} {id:>2} {name} [{:.2}s] {detail}", elapsed.as_secs_f64());
        if verdict == "FAIL" {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("all 10 acceptance criteria pass");
    } else {
        println!("failing criteria: {failed:?}");
        std::process::exit(1);
    }
}
