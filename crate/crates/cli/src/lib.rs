//! Library side of the `heartscape` binary: argument grammar, dispatch and
//! artifact writing. [`run`] is the whole program minus process exit.

mod artifacts;
mod config;
mod manifest;

use clap::{Args, Parser, Subcommand, ValueEnum};
use heartscape::circadian::GridMetric;
use heartscape::recurrence::{Norm, Threshold};
use heartscape::synthgen::generate_week;
use heartscape::timeseries::{clean_rr, parse_rr_csv, CleaningPolicy};
use heartscape::RrSeries;
use heartscape_eval::{
    administer_all, default_personas, persona_by_name, verify_tables, EvalConfig, EvalError, FixtureTransport,
    HttpTransport, Job, PrintedTables, ScaleId, ScaleResponse, Transport, TransportError, VISUALIZATIONS,
};
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use thiserror::Error;

use config::RunConfig;
use manifest::Outputs;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Transport(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Transport(_) => 4,
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Transport(TransportError::NoFixture { .. }) => CliError::Data(e.to_string()),
            EvalError::Transport(_) => CliError::Transport(e.to_string()),
            EvalError::NotConfigured(_) => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "heartscape", version, about = "Heart rate variability analyses and visualizations")]
struct Cli {
    /// TOML run configuration; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic RR series as CSV.
    Generate(GenerateArgs),
    /// Sliding-window feature matrix as CSV.
    Metrics(MetricsArgs),
    /// Weekday by hour heatmap.
    Heatmap(HeatmapArgs),
    /// 24-hour clock faces, one per day.
    Clock(ClockArgs),
    /// Recurrence plot and matrix export.
    Recurrence(RecurrenceArgs),
    /// Power spectral density spectrogram.
    Spectrogram(SpectrogramArgs),
    /// t-SNE embedding of window features over a perplexity sweep.
    Tsne(TsneArgs),
    /// Poincaré plot with SD1/SD2 and confidence ellipse.
    Poincare(PoincareArgs),
    /// Administer questionnaires to personas (fixture or network mode).
    Evaluate(EvaluateArgs),
    /// Check questionnaire responses against the published tables.
    Verify(VerifyArgs),
    /// Generate a week and run every analysis.
    Pipeline(PipelineArgs),
}

#[derive(Args, Debug, Clone)]
struct SynthArgs {
    /// Random seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    days: Option<u32>,
    /// Local time offset from UTC, hours.
    #[arg(long, allow_hyphen_values = true)]
    utc_offset_h: Option<f64>,
}

#[derive(Args, Debug, Clone)]
struct Source {
    /// RR CSV to analyse; a synthetic series is generated when omitted.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Run the artifact filter over the input first.
    #[arg(long)]
    clean: bool,
    #[command(flatten)]
    synth: SynthArgs,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[command(flatten)]
    synth: SynthArgs,
    #[arg(long)]
    baseline_bpm: Option<f64>,
    #[arg(long)]
    circadian_amplitude_bpm: Option<f64>,
    #[arg(long)]
    rsa_amplitude_ms: Option<f64>,
    #[arg(long)]
    respiratory_hz: Option<f64>,
    #[arg(long)]
    exercise_bouts_per_day: Option<f64>,
    #[arg(long)]
    noise_sd_ms: Option<f64>,
    #[arg(long)]
    weekend_shift_hours: Option<f64>,
    /// Also write `<stem>_hr.csv` on a regular grid.
    #[arg(long)]
    hr: bool,
    #[arg(long, default_value_t = 60.0)]
    hr_step_s: f64,
    /// Output RR CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct MetricsArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long)]
    window_s: Option<f64>,
    #[arg(long)]
    step_s: Option<f64>,
    /// Z-score the feature columns.
    #[arg(long)]
    standardize: bool,
    /// Output feature CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MetricArg {
    MeanBpm,
    RmssdMs,
}

#[derive(Args, Debug)]
struct HeatmapArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, value_enum, default_value = "mean-bpm")]
    metric: MetricArg,
    #[arg(long)]
    palette: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ClockArgs {
    #[command(flatten)]
    source: Source,
    /// Single day to draw, counting from 1; all days by default.
    #[arg(long)]
    day: Option<u32>,
    #[arg(long)]
    max_points: Option<usize>,
    #[arg(long)]
    palette: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum NormArg {
    Euclidean,
    Max,
}

#[derive(Args, Debug)]
struct RecurrenceArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    delay: Option<usize>,
    /// Fixed proximity radius in ms (overrides --target-rate).
    #[arg(long, conflicts_with = "target_rate")]
    epsilon: Option<f64>,
    #[arg(long)]
    target_rate: Option<f64>,
    #[arg(long)]
    max_points: Option<usize>,
    #[arg(long, value_enum)]
    norm: Option<NormArg>,
    /// Also render the unthresholded distance matrix.
    #[arg(long)]
    graded: bool,
    #[arg(long)]
    palette: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SpectrogramArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long)]
    hz: Option<f64>,
    #[arg(long)]
    window_s: Option<f64>,
    #[arg(long)]
    step_s: Option<f64>,
    #[arg(long)]
    palette: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct TsneFlags {
    /// Perplexity to run; repeat for a sweep. Defaults to 5, 15 and 30.
    #[arg(long = "perplexity")]
    perplexities: Vec<f64>,
    #[arg(long)]
    dims: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Uniformly subsample feature rows to at most this many.
    #[arg(long)]
    max_rows: Option<usize>,
}

#[derive(Args, Debug)]
struct TsneArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    tsne: TsneFlags,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PoincareArgs {
    #[command(flatten)]
    source: Source,
    /// Confidence level of the ellipse.
    #[arg(long)]
    level: Option<f64>,
    #[arg(long)]
    max_points: Option<usize>,
    #[arg(long)]
    palette: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScaleArg {
    Beauvis,
    Previs,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Answer from a fixture file instead of the network.
    #[arg(long, conflicts_with = "network")]
    offline: Option<PathBuf>,
    /// Query the endpoint named by EVAL_ENDPOINT.
    #[arg(long)]
    network: bool,
    /// Directory holding `<visualization>.svg` or `.png` images.
    #[arg(long)]
    images: Option<PathBuf>,
    /// Scales to administer in network mode.
    #[arg(long = "scale", value_enum)]
    scales: Vec<ScaleArg>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// `responses.json` written by `evaluate`.
    #[arg(long)]
    responses: PathBuf,
    /// Printed tables to compare against; the bundled ones by default.
    #[arg(long)]
    tables: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PipelineArgs {
    #[command(flatten)]
    synth: SynthArgs,
    #[command(flatten)]
    tsne: TsneFlags,
    #[arg(long)]
    out: PathBuf,
}

fn apply_synth(cfg: &mut RunConfig, s: &SynthArgs) {
    if let Some(seed) = s.seed {
        cfg.generator.seed = seed;
        cfg.tsne.seed = seed;
    }
    if let Some(d) = s.days {
        cfg.generator.days = d;
    }
    if let Some(o) = s.utc_offset_h {
        cfg.generator.utc_offset_h = o;
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn synthesize(cfg: &RunConfig) -> Result<RrSeries, CliError> {
    generate_week(&cfg.generator).map_err(|e| CliError::Usage(e.to_string()))
}

/// Loads or generates the series an analysis runs on; returns it with the input list.
fn load_series(source: &Source, cfg: &mut RunConfig) -> Result<(RrSeries, Vec<String>), CliError> {
    apply_synth(cfg, &source.synth);
    let (series, inputs) = match &source.input {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let series = parse_rr_csv(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            (series, vec![path.display().to_string()])
        }
        None => (synthesize(cfg)?, Vec::new()),
    };
    if source.clean {
        let (clean, report) =
            clean_rr(&series, &CleaningPolicy::default()).map_err(|e| CliError::Data(e.to_string()))?;
        eprintln!("cleaning removed {} of {} beats", report.rejected.len(), series.len());
        return Ok((clean, inputs));
    }
    Ok((series, inputs))
}

fn config_json(cfg: &RunConfig) -> serde_json::Value {
    serde_json::to_value(cfg).expect("config serializes")
}

fn apply_tsne(cfg: &mut RunConfig, t: &TsneFlags) {
    if !t.perplexities.is_empty() {
        cfg.sweep.perplexities = t.perplexities.clone();
    }
    set(&mut cfg.tsne.out_dims, t.dims);
    set(&mut cfg.tsne.iterations, t.iterations);
    set(&mut cfg.tsne.learning_rate, t.learning_rate);
    if t.max_rows.is_some() {
        cfg.sweep.max_rows = t.max_rows;
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Generate(a) => {
            apply_synth(&mut cfg, &a.synth);
            let g = &mut cfg.generator;
            set(&mut g.baseline_bpm, a.baseline_bpm);
            set(&mut g.circadian_amplitude_bpm, a.circadian_amplitude_bpm);
            set(&mut g.rsa_amplitude_ms, a.rsa_amplitude_ms);
            set(&mut g.respiratory_hz, a.respiratory_hz);
            set(&mut g.exercise_bouts_per_day, a.exercise_bouts_per_day);
            set(&mut g.noise_sd_ms, a.noise_sd_ms);
            set(&mut g.weekend_shift_hours, a.weekend_shift_hours);
            let series = synthesize(&cfg)?;
            let (mut out, name) = Outputs::for_file(&a.out)?;
            artifacts::rr_csv(&mut out, &name, &series)?;
            if a.hr {
                let stem = a.out.file_stem().and_then(|s| s.to_str()).unwrap_or("rr");
                artifacts::hr_csv(&mut out, &format!("{stem}_hr.csv"), &series, a.hr_step_s)?;
            }
            let config = serde_json::json!({ "generator": cfg.generator, "hr_step_s": a.hr.then_some(a.hr_step_s) });
            out.finish("generate", Some(cfg.generator.seed), Vec::new(), config)?;
        }
        Command::Metrics(a) => {
            let (series, inputs) = load_series(&a.source, &mut cfg)?;
            set(&mut cfg.windows.length_s, a.window_s);
            set(&mut cfg.windows.step_s, a.step_s);
            let mut matrix = artifacts::features(&series, &cfg.windows, cfg.generator.utc_offset_h)?;
            if a.standardize {
                matrix = heartscape::hrvmetrics::standardize(&matrix).map_err(|e| CliError::Data(e.to_string()))?;
            }
            let (mut out, name) = Outputs::for_file(&a.out)?;
            out.write(&name, matrix.to_csv().as_bytes())?;
            let config = serde_json::json!({ "generator": cfg.generator, "windows": cfg.windows, "standardize": a.standardize });
            out.finish("metrics", Some(cfg.generator.seed), inputs, config)?;
        }
        Command::Heatmap(a) => {
            let (series, inputs) = load_series(&a.source, &mut cfg)?;
            set(&mut cfg.render.heatmap_palette, a.palette);
            let metric = match a.metric {
                MetricArg::MeanBpm => GridMetric::MeanBpm,
                MetricArg::RmssdMs => GridMetric::RmssdMs,
            };
            let mut out = Outputs::in_dir(&a.out)?;
            artifacts::heatmap(&mut out, &series, metric, cfg.generator.utc_offset_h, &cfg.render)?;
            let config = serde_json::json!({ "generator": cfg.generator, "metric": metric, "render": cfg.render });
            out.finish("heatmap", Some(cfg.generator.seed), inputs, config)?;
        }
        Command::Clock(a) => {
            let (series, inputs) = load_series(&a.source, &mut cfg)?;
            set(&mut cfg.render.clock_palette, a.palette);
            set(&mut cfg.render.clock_max_points, a.max_points);
            let mut out = Outputs::in_dir(&a.out)?;
            artifacts::clocks(&mut out, &series, a.day, cfg.generator.utc_offset_h, &cfg.render)?;
            let config = serde_json::json!({ "generator": cfg.generator, "day": a.day, "render": cfg.render });
            out.finish("clock", Some(cfg.generator.seed), inputs, config)?;
        }
        Command::Recurrence(a) => {
            let (series, inputs) = load_series(&a.source, &mut cfg)?;
            let r = &mut cfg.recurrence;
            set(&mut r.embed_dim, a.embed_dim);
            set(&mut r.delay, a.delay);
            set(&mut r.max_points, a.max_points);
            if let Some(e) = a.epsilon {
                r.threshold = Threshold::Epsilon(e);
            } else if let Some(t) = a.target_rate {
                r.threshold = Threshold::TargetRate(t);
            }
            set(
                &mut r.norm,
                a.norm.map(|n| match n {
                    NormArg::Euclidean => Norm::Euclidean,
                    NormArg::Max => Norm::Max,
                }),
            );
            r.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            set(&mut cfg.render.recurrence_palette, a.palette);
            let mut out = Outputs::in_dir(&a.out)?;
            artifacts::recurrence(&mut out, &series, &cfg.recurrence, a.graded, &cfg.render)?;
            let config = serde_json::json!({ "generator": cfg.generator, "recurrence": cfg.recurrence, "render": cfg.render });
            out.finish("recurrence", Some(cfg.generator.seed), inputs, config)?;
        }
        Command::Spectrogram(a) => {
            let (series, inputs) = load_series(&a.source, &mut cfg)?;
            set(&mut cfg.spectral.hz, a.hz);
            set(&mut cfg.spectral.window_s, a.window_s);
            set(&mut cfg.spectral.step_s, a.step_s);
            set(&mut cfg.render.spectrogram_palette, a.palette);
            let mut out = Outputs::in_dir(&a.out)?;
            artifacts::spectro(&mut out, &series, &cfg.spectral, &cfg.render)?;
            let config = serde_json::json!({ "generator": cfg.generator, "spectral": cfg.spectral, "render": cfg.render });
            out.finish("spectrogram", Some(cfg.generator.seed), inputs, config)?;
        }
        Command::Tsne(a) => {
            let (series, inputs) = load_series(&a.source, &mut cfg)?;
            apply_tsne(&mut cfg, &a.tsne);
            let max_rows = cfg.sweep.max_rows.unwrap_or(5000);
            let matrix = artifacts::features(&series, &cfg.windows, cfg.generator.utc_offset_h)?;
            let mut out = Outputs::in_dir(&a.out)?;
            artifacts::tsne_sweep(&mut out, "", &matrix, &cfg.sweep.perplexities, &cfg.tsne, max_rows, &cfg.render)?;
            let config = serde_json::json!({
                "generator": cfg.generator, "windows": cfg.windows, "tsne": cfg.tsne,
                "perplexities": cfg.sweep.perplexities, "max_rows": max_rows, "render": cfg.render,
            });
            out.finish("tsne", Some(cfg.tsne.seed), inputs, config)?;
        }
        Command::Poincare(a) => {
            let (series, inputs) = load_series(&a.source, &mut cfg)?;
            set(&mut cfg.poincare.level, a.level);
            set(&mut cfg.poincare.max_points, a.max_points);
            set(&mut cfg.render.poincare_palette, a.palette);
            let mut out = Outputs::in_dir(&a.out)?;
            artifacts::poincare(&mut out, &series, &cfg.poincare, &cfg.render)?;
            let config = serde_json::json!({ "generator": cfg.generator, "poincare": cfg.poincare, "render": cfg.render });
            out.finish("poincare", Some(cfg.generator.seed), inputs, config)?;
        }
        Command::Evaluate(a) => evaluate(a)?,
        Command::Verify(a) => {
            let text = std::fs::read_to_string(&a.responses).map_err(|e| CliError::io(&a.responses, e))?;
            let responses: Vec<ScaleResponse> = serde_json::from_str(&text)
                .map_err(|e| CliError::Data(format!("{}: {e}", a.responses.display())))?;
            let tables = match &a.tables {
                Some(p) => {
                    let t = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                    PrintedTables::from_json(&t).map_err(|e| CliError::Data(e.to_string()))?
                }
                None => PrintedTables::bundled(),
            };
            let report = verify_tables(&responses, &tables).map_err(|e| CliError::Data(e.to_string()))?;
            let mut out = Outputs::in_dir(&a.out)?;
            out.write("verification.md", report.to_markdown().as_bytes())?;
            out.write_json("verification.json", &report)?;
            let mut inputs = vec![a.responses.display().to_string()];
            inputs.extend(a.tables.iter().map(|p| p.display().to_string()));
            out.finish("verify", None, inputs, serde_json::json!({ "tables": if a.tables.is_some() { "file" } else { "bundled" } }))?;
            eprintln!("{} of {} cells match", report.matched, report.cells.len());
        }
        Command::Pipeline(a) => {
            apply_synth(&mut cfg, &a.synth);
            apply_tsne(&mut cfg, &a.tsne);
            let max_rows = cfg.sweep.max_rows.unwrap_or(2000);
            let series = synthesize(&cfg)?;
            let offset = cfg.generator.utc_offset_h;
            let mut out = Outputs::in_dir(&a.out)?;
            artifacts::rr_csv(&mut out, "rr.csv", &series)?;
            let matrix = artifacts::features(&series, &cfg.windows, offset)?;
            out.write("features.csv", matrix.to_csv().as_bytes())?;
            artifacts::heatmap(&mut out, &series, GridMetric::MeanBpm, offset, &cfg.render)?;
            artifacts::clocks(&mut out, &series, None, offset, &cfg.render)?;
            artifacts::recurrence(&mut out, &series, &cfg.recurrence, false, &cfg.render)?;
            artifacts::spectro(&mut out, &series, &cfg.spectral, &cfg.render)?;
            artifacts::poincare(&mut out, &series, &cfg.poincare, &cfg.render)?;
            artifacts::tsne_sweep(&mut out, "tsne/", &matrix, &cfg.sweep.perplexities, &cfg.tsne, max_rows, &cfg.render)?;
            let mut config = config_json(&cfg);
            config["sweep"]["max_rows"] = serde_json::json!(max_rows);
            let manifest = out.finish("pipeline", Some(cfg.generator.seed), Vec::new(), config)?;
            eprintln!("wrote {} artifacts to {}", manifest.outputs.len(), a.out.display());
        }
    }
    Ok(())
}

fn image_for(dir: &Path, viz: &str) -> Result<PathBuf, CliError> {
    ["png", "svg", "jpg"]
        .iter()
        .map(|ext| dir.join(format!("{viz}.{ext}")))
        .find(|p| p.is_file())
        .ok_or_else(|| CliError::Data(format!("no image for {viz} in {}", dir.display())))
}

fn evaluate(a: EvaluateArgs) -> Result<(), CliError> {
    let config = EvalConfig::default();
    let (transport, jobs, mode): (Box<dyn Transport>, Vec<Job>, &str) = match (&a.offline, a.network) {
        (Some(fixture), _) => {
            let t = FixtureTransport::from_path(fixture)?;
            let jobs = t
                .keys()
                .map(|(persona, viz, scale)| {
                    let persona = persona_by_name(persona)
                        .ok_or_else(|| CliError::Data(format!("fixture names unknown persona {persona:?}")))?;
                    let image = a.images.as_deref().map(|d| image_for(d, viz)).transpose()?;
                    Ok(Job {
                        persona,
                        visualization: viz.clone(),
                        scale: *scale,
                        image,
                    })
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            (Box::new(t), jobs, "offline")
        }
        (None, true) => {
            let dir = a
                .images
                .as_deref()
                .ok_or_else(|| CliError::Usage("--network needs --images <dir>".into()))?;
            let t = HttpTransport::from_env()?;
            let scales: Vec<ScaleId> = if a.scales.is_empty() {
                vec![ScaleId::Beauvis, ScaleId::Previs]
            } else {
                a.scales
                    .iter()
                    .map(|s| match s {
                        ScaleArg::Beauvis => ScaleId::Beauvis,
                        ScaleArg::Previs => ScaleId::Previs,
                    })
                    .collect()
            };
            let mut jobs = Vec::new();
            for persona in default_personas() {
                for (viz, _) in VISUALIZATIONS {
                    for &scale in &scales {
                        jobs.push(Job {
                            persona: persona.clone(),
                            visualization: viz.to_string(),
                            scale,
                            image: Some(image_for(dir, viz)?),
                        });
                    }
                }
            }
            (Box::new(t), jobs, "network")
        }
        (None, false) => {
            return Err(CliError::Usage(
                "evaluate needs --offline <fixture.json> or --network".into(),
            ))
        }
    };
    let results = administer_all(jobs, transport.as_ref(), &config);
    let mut responses = Vec::new();
    let mut failures = Vec::new();
    let mut first_error = None;
    for (job, r) in results {
        match r {
            Ok(resp) => responses.push(resp),
            Err(e) => {
                failures.push(serde_json::json!({
                    "persona": job.persona.name, "visualization": job.visualization,
                    "scale": job.scale, "error": e.to_string(),
                }));
                first_error.get_or_insert(e);
            }
        }
    }
    let mut out = Outputs::in_dir(&a.out)?;
    out.write_json("responses.json", &responses)?;
    let mut md = String::from("| Persona | Visualization | Scale | Scores |\n|---|---|---|---|\n");
    for r in &responses {
        let scores: Vec<String> = r.aggregates.iter().map(|s| format!("{} {}", s.subscale, s.score)).collect();
        md.push_str(&format!("| {} | {} | {} | {} |\n", r.persona, r.visualization, r.scale, scores.join(", ")));
    }
    out.write("responses.md", md.as_bytes())?;
    if !failures.is_empty() {
        out.write_json("failures.json", &failures)?;
    }
    let inputs = a.offline.iter().map(|p| p.display().to_string()).collect();
    out.finish("evaluate", None, inputs, serde_json::json!({ "mode": mode, "model": transport.model() }))?;
    match first_error {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

/// Parses `args` (program name first), runs the subcommand and returns the exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_errors_map_to_exit_codes() {
        let status = EvalError::Transport(TransportError::Status {
            status: 503,
            body: String::new(),
        });
        assert_eq!(CliError::from(status).exit_code(), 4);
        let missing = EvalError::Transport(TransportError::NoFixture {
            persona: "Sarah Chen".into(),
            visualization: "heatmap".into(),
            scale: ScaleId::Previs,
        });
        assert_eq!(CliError::from(missing).exit_code(), 3);
        assert_eq!(CliError::from(EvalError::NotConfigured("EVAL_ENDPOINT")).exit_code(), 2);
    }
}
