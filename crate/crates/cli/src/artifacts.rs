//! Analysis-to-file steps shared by the single-purpose subcommands and `pipeline`.

use heartscape::circadian::{clock_points, day_count, week_grid, GridMetric};
use heartscape::embedding::{grid_sweep, silhouette, TsneConfig};
use heartscape::hrvmetrics::{standardize, window_features, FeatureMatrix, WindowSpec};
use heartscape::poincare::{confidence_ellipse, poincare_pairs, sd1_sd2};
use heartscape::recurrence::{analyze, RecurrenceConfig};
use heartscape::render::{
    render_clock, render_grid, render_matrix, render_scatter, render_spectrogram, Coloring, MatrixView,
    PoincareOverlay, RenderSpec, Scatter,
};
use heartscape::spectral::{resample_rr, spectrogram};
use heartscape::timeseries::{derive_hr, export_hr_csv, export_rr_csv, WEEKDAY_NAMES};
use heartscape::RrSeries;
use serde_json::json;
use std::fmt::Write as _;

use crate::config::{PoincareSettings, RenderSettings, SpectralSettings};
use crate::manifest::Outputs;
use crate::CliError;

/// Evenly spaced indices keeping at most `max` of `n`.
pub fn thin(n: usize, max: usize) -> Vec<usize> {
    if n <= max || max == 0 {
        (0..n).collect()
    } else {
        (0..max).map(|i| i * n / max).collect()
    }
}

fn data<E: std::fmt::Display>(what: &str) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Data(format!("{what}: {e}"))
}

pub fn rr_csv(out: &mut Outputs, name: &str, series: &RrSeries) -> Result<(), CliError> {
    out.write(name, export_rr_csv(series).as_bytes())
}

pub fn hr_csv(out: &mut Outputs, name: &str, series: &RrSeries, step_s: f64) -> Result<(), CliError> {
    let hr = derive_hr(series, step_s).map_err(data("heart rate"))?;
    out.write(name, export_hr_csv(&hr, series.start_epoch()).as_bytes())
}

pub fn features(series: &RrSeries, windows: &WindowSpec, utc_offset_h: f64) -> Result<FeatureMatrix, CliError> {
    Ok(window_features(series, windows, utc_offset_h)
        .map_err(data("features"))?
        .matrix)
}

pub fn heatmap(
    out: &mut Outputs,
    series: &RrSeries,
    metric: GridMetric,
    utc_offset_h: f64,
    render: &RenderSettings,
) -> Result<(), CliError> {
    let grid = week_grid(series, metric, utc_offset_h).map_err(data("heatmap"))?;
    let title = match metric {
        GridMetric::MeanBpm => "Mean heart rate (bpm) by weekday and hour",
        GridMetric::RmssdMs => "RMSSD (ms) by weekday and hour",
    };
    let spec = RenderSpec::new(&render.heatmap_palette, title).with_labels("local hour", "weekday");
    out.write("heatmap.svg", render_grid(&grid, &spec).map_err(data("heatmap"))?.as_bytes())?;
    out.write_json("heatmap.json", &grid.to_json())
}

/// One clock face per local day (or just the 1-based `day`), each thinned to the render cap.
pub fn clocks(
    out: &mut Outputs,
    series: &RrSeries,
    day: Option<u32>,
    utc_offset_h: f64,
    render: &RenderSettings,
) -> Result<(), CliError> {
    let days: Vec<u32> = match day {
        Some(0) => return Err(CliError::Usage("--day counts from 1".into())),
        Some(d) => vec![d - 1],
        None => (0..day_count(series, utc_offset_h)).collect(),
    };
    for d in days {
        let mut clock = clock_points(series, d, utc_offset_h).map_err(data("clock"))?;
        let keep = thin(clock.points.len(), render.clock_max_points);
        clock.points = keep.iter().map(|&i| clock.points[i]).collect();
        let spec = RenderSpec::new(&render.clock_palette, "RR intervals around the clock").with_size(640.0, 560.0);
        let svg = render_clock(&clock, &spec).map_err(data("clock"))?;
        out.write(&format!("clock/day_{}.svg", d + 1), svg.as_bytes())?;
    }
    Ok(())
}

pub fn recurrence(
    out: &mut Outputs,
    series: &RrSeries,
    config: &RecurrenceConfig,
    graded: bool,
    render: &RenderSettings,
) -> Result<(), CliError> {
    let a = analyze(series.intervals(), config).map_err(data("recurrence"))?;
    let spec = RenderSpec::new(&render.recurrence_palette, "Recurrence plot of RR intervals")
        .with_size(640.0, 560.0)
        .with_labels("state index", "state index");
    let svg = render_matrix(MatrixView::Binary(&a.matrix), &spec).map_err(data("recurrence"))?;
    out.write("recurrence.svg", svg.as_bytes())?;
    if graded {
        let svg = render_matrix(MatrixView::Graded(&a.distances), &spec).map_err(data("recurrence"))?;
        out.write("recurrence_distances.svg", svg.as_bytes())?;
    }
    out.write_json("recurrence.json", &a.matrix.to_json(a.decimation))
}

pub fn spectro(
    out: &mut Outputs,
    series: &RrSeries,
    settings: &SpectralSettings,
    render: &RenderSettings,
) -> Result<(), CliError> {
    let tach = resample_rr(series, settings.hz).map_err(data("resampling"))?;
    let sg = spectrogram(&tach, settings.window_s, settings.step_s).map_err(data("spectrogram"))?;
    let spec = RenderSpec::new(&render.spectrogram_palette, "RR power spectral density")
        .with_labels("time", "frequency (Hz)");
    out.write("spectrogram.svg", render_spectrogram(&sg, &spec).map_err(data("spectrogram"))?.as_bytes())?;
    out.write_json("spectrogram.json", &sg.cropped(0.5).to_json())
}

pub fn poincare(
    out: &mut Outputs,
    series: &RrSeries,
    settings: &PoincareSettings,
    render: &RenderSettings,
) -> Result<(), CliError> {
    let pairs = poincare_pairs(series).map_err(data("poincare"))?;
    let mut summary = sd1_sd2(&pairs).map_err(data("poincare"))?;
    if summary.ellipse.is_some() && settings.level != 0.95 {
        summary.ellipse = Some(confidence_ellipse(&pairs, settings.level).map_err(data("poincare"))?);
    }
    let points = thin(pairs.len(), settings.max_points)
        .into_iter()
        .map(|i| pairs.pairs[i])
        .collect();
    let scatter = Scatter {
        points,
        coloring: Coloring::Density,
        poincare: Some(PoincareOverlay {
            centroid: summary.centroid,
            ellipse: summary.ellipse,
        }),
    };
    let spec = RenderSpec::new(&render.poincare_palette, "Poincaré plot")
        .with_size(640.0, 560.0)
        .with_labels("RR(n) ms", "RR(n+1) ms");
    out.write("poincare.svg", render_scatter(&scatter, &spec).map_err(data("poincare"))?.as_bytes())?;
    let mut doc = summary.to_json();
    doc["pairs"] = json!(pairs.len());
    doc["pairs_drawn"] = json!(scatter.points.len());
    out.write_json("poincare.json", &doc)
}

fn perplexity_tag(p: f64) -> String {
    format!("p{p}").replace('.', "_")
}

/// Standardizes `matrix`, subsamples to `max_rows` and writes one CSV and three
/// colorings per perplexity, plus `sweep.json`.
pub fn tsne_sweep(
    out: &mut Outputs,
    dir: &str,
    matrix: &FeatureMatrix,
    perplexities: &[f64],
    base: &TsneConfig,
    max_rows: usize,
    render: &RenderSettings,
) -> Result<(), CliError> {
    let standardized = standardize(matrix).map_err(data("features"))?;
    let keep = thin(standardized.len(), max_rows);
    let rows: Vec<Vec<f64>> = keep.iter().map(|&i| standardized.values[i].to_vec()).collect();
    let ctx: Vec<_> = keep.iter().map(|&i| standardized.context[i]).collect();
    let runs = grid_sweep(&rows, perplexities, base.out_dims, base).map_err(data("t-SNE"))?;

    let weekend: Vec<usize> = ctx.iter().map(|c| usize::from(c.is_weekend)).collect();
    let hours: Vec<f64> = ctx.iter().map(|c| c.local_hour).collect();
    let day_labels: Vec<usize> = ctx.iter().map(|c| c.day_index as usize).collect();
    let n_days = day_labels.iter().max().map_or(0, |d| d + 1);
    let day_names: Vec<String> = (0..n_days)
        .map(|d| {
            let weekday = ctx.iter().find(|c| c.day_index as usize == d).map(|c| c.weekday as usize);
            match weekday {
                Some(w) => format!("day {} ({})", d + 1, WEEKDAY_NAMES[w]),
                None => format!("day {}", d + 1),
            }
        })
        .collect();

    let mut entries = Vec::new();
    for run in &runs {
        let p = run.config.perplexity;
        let tag = perplexity_tag(p);
        let mut csv = String::from("row_index,window_start,x,y");
        if base.out_dims == 3 {
            csv.push_str(",z");
        }
        csv.push_str(",hour,is_weekend\r\n");
        for ((&row, c), pt) in keep.iter().zip(&ctx).zip(&run.points) {
            let _ = write!(csv, "{row},{:.3}", c.window_start);
            for v in pt {
                let _ = write!(csv, ",{v:.6}");
            }
            let _ = write!(csv, ",{:.4},{}\r\n", c.local_hour, u8::from(c.is_weekend));
        }
        let csv_name = format!("{dir}tsne_{tag}.csv");
        out.write(&csv_name, csv.as_bytes())?;

        let xy: Vec<(f64, f64)> = run.points.iter().map(|p| (p[0], p[1])).collect();
        let colorings = [
            (
                "weekend",
                Coloring::Categorical {
                    labels: weekend.clone(),
                    names: vec!["weekday".into(), "weekend".into()],
                },
            ),
            (
                "hour",
                Coloring::Continuous {
                    values: hours.clone(),
                    name: "local hour".into(),
                },
            ),
            (
                "day",
                Coloring::Categorical {
                    labels: day_labels.clone(),
                    names: day_names.clone(),
                },
            ),
        ];
        let mut svgs = Vec::new();
        for (name, coloring) in colorings {
            let spec = RenderSpec::new(&render.tsne_palette, &format!("t-SNE of window features, perplexity {p}"))
                .with_size(720.0, 560.0)
                .with_labels("t-SNE 1", "t-SNE 2");
            let scatter = Scatter {
                points: xy.clone(),
                coloring,
                poincare: None,
            };
            let svg_name = format!("{dir}tsne_{tag}_{name}.svg");
            out.write(&svg_name, render_scatter(&scatter, &spec).map_err(data("t-SNE"))?.as_bytes())?;
            svgs.push(svg_name);
        }
        entries.push(json!({
            "perplexity": p,
            "seed": run.config.seed,
            "csv": csv_name,
            "svgs": svgs,
            "final_kl": run.final_kl(),
            "kl_trace": run.kl_trace,
            "weekend_silhouette": silhouette(&run.points, &weekend),
        }));
    }
    out.write_json(
        &format!("{dir}sweep.json"),
        &json!({
            "rows_total": standardized.len(),
            "rows_embedded": rows.len(),
            "max_rows": max_rows,
            "out_dims": base.out_dims,
            "runs": entries,
        }),
    )
}
