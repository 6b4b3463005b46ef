//! Deterministic SVG documents for every chart type.
//!
//! Documents are assembled as plain strings with fixed float precision, so the
//! same input and [`RenderSpec`] always produce the same bytes. Palettes are
//! fixed hex-stop tables interpolated linearly in sRGB.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circadian::{ClockPoints, WeekGrid};
use crate::poincare::Ellipse;
use crate::recurrence::{DistanceMatrix, RecurrenceMatrix};
use crate::spectral::Spectrogram;
use crate::timeseries::WEEKDAY_NAMES;

#[derive(Debug, Error, PartialEq)]
pub enum RenderError {
    #[error("unknown palette {0:?}")]
    UnknownPalette(String),
    #[error("invalid palette: {0}")]
    InvalidPalette(String),
    #[error("invalid render spec: {0}")]
    InvalidSpec(String),
    #[error("{0} labels for {1} points")]
    LabelMismatch(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rgb(pub u8, pub u8, pub u8);

impl Rgb {
    pub fn from_hex(hex: u32) -> Self {
        Rgb((hex >> 16) as u8, (hex >> 8) as u8, hex as u8)
    }

    pub fn hex(&self) -> String {
        format!("#{:02x}{:02x}{:02x}", self.0, self.1, self.2)
    }

    /// WCAG relative luminance.
    pub fn luminance(&self) -> f64 {
        let lin = |c: u8| {
            let c = f64::from(c) / 255.0;
            if c <= 0.04045 {
                c / 12.92
            } else {
                ((c + 0.055) / 1.055).powf(2.4)
            }
        };
        0.2126 * lin(self.0) + 0.7152 * lin(self.1) + 0.0722 * lin(self.2)
    }
}

pub const PALETTE_NAMES: [&str; 6] = [
    "twilight",
    "aurora_green",
    "mona_lisa",
    "van_gogh",
    "plasma_layers",
    "categorical10",
];

const TWILIGHT: [(f64, u32); 5] = [
    (0.0, 0x1b1a3a),
    (0.25, 0x3d2c6b),
    (0.5, 0x8c3f7c),
    (0.75, 0xe07a5f),
    (1.0, 0xf9e0a8),
];
const AURORA_GREEN: [(f64, u32); 5] = [
    (0.0, 0x0b1d2a),
    (0.3, 0x0f4c5c),
    (0.6, 0x2a9d6f),
    (0.85, 0x7fdc8c),
    (1.0, 0xd9f7c8),
];
// Every channel rises between stops, so luminance never decreases.
const MONA_LISA: [(f64, u32); 6] = [
    (0.0, 0x1a140e),
    (0.2, 0x3b2f1e),
    (0.4, 0x5c4b2e),
    (0.6, 0x857248),
    (0.8, 0xb5a27a),
    (1.0, 0xe8dcc0),
];
const VAN_GOGH: [(f64, u32); 5] = [
    (0.0, 0x0c1445),
    (0.3, 0x1f3b8c),
    (0.55, 0x3f7cac),
    (0.75, 0xc9b037),
    (1.0, 0xf6e27a),
];
const PLASMA_LAYERS: [(f64, u32); 5] = [
    (0.0, 0x0d0887),
    (0.25, 0x6a00a8),
    (0.5, 0xb12a90),
    (0.75, 0xe16462),
    (1.0, 0xfca636),
];
pub const CATEGORICAL10: [u32; 10] = [
    0x4e79a7, 0xf28e2b, 0xe15759, 0x76b7b2, 0x59a14f, 0xedc948, 0xb07aa1, 0xff9da7, 0x9c755f,
    0xbab0ac,
];

#[derive(Debug, Clone, PartialEq)]
pub struct Palette {
    pub name: String,
    pub stops: Vec<(f64, Rgb)>,
}

impl Palette {
    pub fn new(name: &str, stops: Vec<(f64, Rgb)>) -> Result<Self, RenderError> {
        let covers = stops.first().is_some_and(|s| s.0 == 0.0) && stops.last().is_some_and(|s| s.0 == 1.0);
        if !covers {
            return Err(RenderError::InvalidPalette("stops must cover t = 0 and t = 1".into()));
        }
        if stops.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(RenderError::InvalidPalette("stop positions must increase".into()));
        }
        Ok(Self {
            name: name.to_string(),
            stops,
        })
    }

    pub fn named(name: &str) -> Result<Self, RenderError> {
        let table: Vec<(f64, u32)> = match name {
            "twilight" => TWILIGHT.to_vec(),
            "aurora_green" => AURORA_GREEN.to_vec(),
            "mona_lisa" => MONA_LISA.to_vec(),
            "van_gogh" => VAN_GOGH.to_vec(),
            "plasma_layers" => PLASMA_LAYERS.to_vec(),
            "categorical10" => CATEGORICAL10
                .iter()
                .enumerate()
                .map(|(k, &c)| (k as f64 / 9.0, c))
                .collect(),
            other => return Err(RenderError::UnknownPalette(other.to_string())),
        };
        Self::new(
            name,
            table.into_iter().map(|(t, c)| (t, Rgb::from_hex(c))).collect(),
        )
    }

    pub fn at(&self, t: f64) -> Rgb {
        let t = if t.is_nan() { 0.0 } else { t.clamp(0.0, 1.0) };
        let k = self.stops.partition_point(|s| s.0 <= t);
        if k == 0 {
            return self.stops[0].1;
        }
        if k == self.stops.len() {
            return self.stops[k - 1].1;
        }
        let (t0, a) = self.stops[k - 1];
        let (t1, b) = self.stops[k];
        let f = (t - t0) / (t1 - t0);
        let mix = |x: u8, y: u8| (f64::from(x) + (f64::from(y) - f64::from(x)) * f).round() as u8;
        Rgb(mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
    }
}

/// Color of palette `name` at `t` (clamped to `[0, 1]`).
pub fn colormap(name: &str, t: f64) -> Result<Rgb, RenderError> {
    Ok(Palette::named(name)?.at(t))
}

pub fn categorical(k: usize) -> Rgb {
    Rgb::from_hex(CATEGORICAL10[k % CATEGORICAL10.len()])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margins {
    pub top: f64,
    pub right: f64,
    pub bottom: f64,
    pub left: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderSpec {
    pub width_px: f64,
    pub height_px: f64,
    pub margins: Margins,
    pub palette: String,
    pub log_scale: bool,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
}

impl RenderSpec {
    pub fn new(palette: &str, title: &str) -> Self {
        Self {
            width_px: 800.0,
            height_px: 420.0,
            margins: Margins {
                top: 48.0,
                right: 110.0,
                bottom: 56.0,
                left: 72.0,
            },
            palette: palette.to_string(),
            log_scale: false,
            title: title.to_string(),
            x_label: String::new(),
            y_label: String::new(),
        }
    }

    pub fn with_size(mut self, width: f64, height: f64) -> Self {
        self.width_px = width;
        self.height_px = height;
        self
    }

    pub fn with_labels(mut self, x: &str, y: &str) -> Self {
        self.x_label = x.to_string();
        self.y_label = y.to_string();
        self
    }

    pub fn validate(&self) -> Result<(), RenderError> {
        let m = &self.margins;
        let ok = self.width_px > m.left + m.right
            && self.height_px > m.top + m.bottom
            && [m.top, m.right, m.bottom, m.left].iter().all(|v| *v >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(RenderError::InvalidSpec("dimensions must leave a positive plot area".into()))
        }
    }

    fn plot(&self) -> Rect {
        let m = &self.margins;
        Rect {
            x: m.left,
            y: m.top,
            w: self.width_px - m.left - m.right,
            h: self.height_px - m.top - m.bottom,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Rect {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

/// Two-decimal formatting without a negative zero.
fn f(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

struct Svg {
    out: String,
}

impl Svg {
    fn begin(spec: &RenderSpec) -> Self {
        let mut out = String::new();
        let (w, h) = (f(spec.width_px), f(spec.height_px));
        let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif">"#
        );
        let _ = writeln!(out, r##"<rect class="background" x="0" y="0" width="{w}" height="{h}" fill="#ffffff"/>"##);
        let mut svg = Self { out };
        if !spec.title.is_empty() {
            svg.text(spec.width_px / 2.0, 26.0, &spec.title, "title", 16.0, "middle");
        }
        svg
    }

    fn raw(&mut self, s: &str) {
        self.out.push_str(s);
        self.out.push('\n');
    }

    fn rect(&mut self, class: &str, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(
            self.out,
            r#"<rect class="{class}" x="{}" y="{}" width="{}" height="{}" fill="{fill}"/>"#,
            f(x),
            f(y),
            f(w),
            f(h)
        );
    }

    fn line(&mut self, class: &str, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64) {
        let _ = writeln!(
            self.out,
            r#"<line class="{class}" x1="{}" y1="{}" x2="{}" y2="{}" stroke="{stroke}" stroke-width="{}"/>"#,
            f(x1),
            f(y1),
            f(x2),
            f(y2),
            f(width)
        );
    }

    fn circle(&mut self, class: &str, cx: f64, cy: f64, r: f64, fill: &str) {
        let _ = writeln!(
            self.out,
            r#"<circle class="{class}" cx="{}" cy="{}" r="{}" fill="{fill}"/>"#,
            f(cx),
            f(cy),
            f(r)
        );
    }

    fn text(&mut self, x: f64, y: f64, text: &str, class: &str, size: f64, anchor: &str) {
        let _ = writeln!(
            self.out,
            r#"<text class="{class}" x="{}" y="{}" font-size="{}" text-anchor="{anchor}">{}</text>"#,
            f(x),
            f(y),
            f(size),
            escape(text)
        );
    }

    fn rotated_text(&mut self, x: f64, y: f64, text: &str, class: &str) {
        let _ = writeln!(
            self.out,
            r#"<text class="{class}" x="{x}" y="{y}" font-size="12.00" text-anchor="middle" transform="rotate(-90 {x} {y})">{}</text>"#,
            escape(text),
            x = f(x),
            y = f(y)
        );
    }

    fn axis_labels(&mut self, spec: &RenderSpec, plot: Rect) {
        if !spec.x_label.is_empty() {
            self.text(plot.x + plot.w / 2.0, spec.height_px - 12.0, &spec.x_label, "axis-label", 12.0, "middle");
        }
        if !spec.y_label.is_empty() {
            self.rotated_text(18.0, plot.y + plot.h / 2.0, &spec.y_label, "axis-label");
        }
    }

    /// Vertical gradient bar right of the plot with min/max annotations.
    fn legend(&mut self, spec: &RenderSpec, palette: &Palette, plot: Rect, lo: &str, hi: &str) {
        self.raw(r#"<defs><linearGradient id="legend-gradient" x1="0" y1="1" x2="0" y2="0">"#);
        for (t, c) in &palette.stops {
            let _ = writeln!(self.out, r#"<stop offset="{}" stop-color="{}"/>"#, f(*t), c.hex());
        }
        self.raw("</linearGradient></defs>");
        let x = spec.width_px - spec.margins.right + 24.0;
        let _ = writeln!(
            self.out,
            r##"<rect class="legend" x="{}" y="{}" width="14.00" height="{}" fill="url(#legend-gradient)" stroke="#444444" stroke-width="0.50"/>"##,
            f(x),
            f(plot.y),
            f(plot.h)
        );
        self.text(x + 20.0, plot.y + 10.0, &format!("max {hi}"), "legend-max", 11.0, "start");
        self.text(x + 20.0, plot.y + plot.h, &format!("min {lo}"), "legend-min", 11.0, "start");
    }

    fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

fn normalise(v: f64, lo: f64, hi: f64, log: bool) -> f64 {
    let tx = |x: f64| if log { x.max(1e-12).log10() } else { x };
    let (v, lo, hi) = (tx(v), tx(lo), tx(hi));
    if hi > lo {
        (v - lo) / (hi - lo)
    } else {
        0.5
    }
}

fn fmt_value(v: f64) -> String {
    format!("{v:.1}")
}

/// "Nice" tick positions covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let raw = (hi - lo) / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn tick_label(v: f64) -> String {
    if (v - v.round()).abs() < 1e-9 {
        format!("{}", v.round() as i64)
    } else {
        format!("{v:.2}")
    }
}

/// 7 × 24 weekday/hour heatmap; missing cells are hatched, never interpolated.
pub fn render_grid(grid: &WeekGrid, spec: &RenderSpec) -> Result<String, RenderError> {
    spec.validate()?;
    let palette = Palette::named(&spec.palette)?;
    let plot = spec.plot();
    let (lo, hi) = grid.range().unwrap_or((0.0, 0.0));
    let mut svg = Svg::begin(spec);
    svg.raw(r##"<defs><pattern id="hatch" width="6" height="6" patternUnits="userSpaceOnUse" patternTransform="rotate(45)"><rect width="6" height="6" fill="#d9d9d9"/><line x1="0" y1="0" x2="0" y2="6" stroke="#9a9a9a" stroke-width="2"/></pattern></defs>"##);
    let (cw, ch) = (plot.w / 24.0, plot.h / 7.0);
    for (d, row) in grid.values.iter().enumerate() {
        for (h, value) in row.iter().enumerate() {
            let (x, y) = (plot.x + h as f64 * cw, plot.y + d as f64 * ch);
            match value {
                Some(v) => {
                    let fill = palette.at(normalise(*v, lo, hi, spec.log_scale)).hex();
                    svg.rect("cell", x, y, cw, ch, &fill);
                }
                None => svg.rect("cell missing", x, y, cw, ch, "url(#hatch)"),
            }
        }
    }
    for h in (0..24).step_by(3) {
        svg.text(plot.x + (h as f64 + 0.5) * cw, plot.y + plot.h + 16.0, &format!("{h:02}"), "tick", 11.0, "middle");
    }
    for (d, name) in WEEKDAY_NAMES.iter().enumerate() {
        svg.text(plot.x - 8.0, plot.y + (d as f64 + 0.65) * ch, name, "tick", 11.0, "end");
    }
    svg.axis_labels(spec, plot);
    svg.legend(spec, &palette, plot, &fmt_value(lo), &fmt_value(hi));
    Ok(svg.finish())
}

/// One day of beats on a 24-hour dial, midnight at the top, clockwise.
pub fn render_clock(clock: &ClockPoints, spec: &RenderSpec) -> Result<String, RenderError> {
    spec.validate()?;
    let palette = Palette::named(&spec.palette)?;
    let plot = spec.plot();
    let (cx, cy) = (plot.x + plot.w / 2.0, plot.y + plot.h / 2.0);
    let radius = plot.w.min(plot.h) / 2.0;
    let inner = 0.15 * radius;
    let mut svg = Svg::begin(spec);
    let _ = writeln!(
        svg.out,
        r##"<circle class="dial" cx="{}" cy="{}" r="{}" fill="none" stroke="#888888" stroke-width="1.00"/>"##,
        f(cx),
        f(cy),
        f(radius)
    );
    for h in 0..24 {
        let a = std::f64::consts::TAU * f64::from(h) / 24.0;
        let (s, c) = a.sin_cos();
        let len = if h % 6 == 0 { 10.0 } else { 5.0 };
        svg.line("hour-tick", cx + s * radius, cy - c * radius, cx + s * (radius - len), cy - c * (radius - len), "#888888", 1.0);
        if h % 6 == 0 {
            svg.text(cx + s * (radius + 14.0), cy - c * (radius + 14.0) + 4.0, &format!("{h:02}:00"), "tick", 11.0, "middle");
        }
    }
    svg.raw(r#"<g class="points" fill-opacity="0.70">"#);
    for p in &clock.points {
        let r = inner + (radius - inner) * p.radius;
        let (s, c) = p.angle_rad.sin_cos();
        svg.circle("pt", cx + s * r, cy - c * r, 1.2, &palette.at(p.radius).hex());
    }
    svg.raw("</g>");
    svg.text(cx, plot.y + plot.h + 30.0, &clock.day_label, "day-label", 12.0, "middle");
    svg.legend(
        spec,
        &palette,
        plot,
        &format!("{} ms", fmt_value(clock.rr_range.0)),
        &format!("{} ms", fmt_value(clock.rr_range.1)),
    );
    Ok(svg.finish())
}

/// Matrix to draw: a thresholded recurrence matrix or graded distances.
#[derive(Debug, Clone, Copy)]
pub enum MatrixView<'a> {
    Binary(&'a RecurrenceMatrix),
    Graded(&'a DistanceMatrix),
}

/// Largest number of display cells per matrix side.
pub const MAX_MATRIX_CELLS: usize = 200;

impl MatrixView<'_> {
    fn n(&self) -> usize {
        match self {
            MatrixView::Binary(m) => m.n,
            MatrixView::Graded(d) => d.n,
        }
    }

    /// Mean over a block, on a dark-is-recurrent scale in `[0, 1]`.
    fn block_value(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>, max: f64) -> f64 {
        let count = (rows.len() * cols.len()) as f64;
        let mut acc = 0.0;
        for i in rows {
            for j in cols.clone() {
                acc += match self {
                    MatrixView::Binary(m) => f64::from(u8::from(!m.get(i, j))),
                    MatrixView::Graded(d) => {
                        if max > 0.0 {
                            d.get(i, j) / max
                        } else {
                            0.0
                        }
                    }
                };
            }
        }
        acc / count
    }
}

/// Block size used to pool an `n × n` matrix for display.
pub fn matrix_block(n: usize) -> usize {
    n.div_ceil(MAX_MATRIX_CELLS).max(1)
}

/// Recurrence plot: dark cells recur, light cells are novel states.
pub fn render_matrix(view: MatrixView<'_>, spec: &RenderSpec) -> Result<String, RenderError> {
    spec.validate()?;
    let palette = Palette::named(&spec.palette)?;
    let plot = spec.plot();
    let n = view.n();
    let block = matrix_block(n);
    let cells = n.div_ceil(block);
    let side = plot.w.min(plot.h);
    let cs = side / cells as f64;
    let max = match view {
        MatrixView::Graded(d) => d.max(),
        MatrixView::Binary(_) => 1.0,
    };
    let mut svg = Svg::begin(spec);
    let _ = writeln!(svg.out, r#"<g class="matrix" data-n="{n}" data-block="{block}">"#);
    for bi in 0..cells {
        let rows = bi * block..((bi + 1) * block).min(n);
        for bj in 0..cells {
            let cols = bj * block..((bj + 1) * block).min(n);
            let v = view.block_value(rows.clone(), cols, max);
            // Row 0 at the bottom so the time axes grow up and to the right.
            let y = plot.y + side - (bi + 1) as f64 * cs;
            svg.rect("cell", plot.x + bj as f64 * cs, y, cs, cs, &palette.at(v).hex());
        }
    }
    svg.raw("</g>");
    svg.axis_labels(spec, plot);
    let (lo, hi) = match view {
        MatrixView::Binary(_) => ("recurrent".to_string(), "novel".to_string()),
        MatrixView::Graded(_) => ("0".to_string(), fmt_value(max)),
    };
    svg.legend(spec, &palette, plot, &lo, &hi);
    Ok(svg.finish())
}

/// Largest number of time columns drawn for a spectrogram.
pub const MAX_SPECTROGRAM_COLUMNS: usize = 200;
/// Upper frequency shown.
pub const SPECTROGRAM_MAX_HZ: f64 = 0.5;

/// Time-frequency heatmap of log power with band boundaries and labels.
pub fn render_spectrogram(sg: &Spectrogram, spec: &RenderSpec) -> Result<String, RenderError> {
    spec.validate()?;
    let palette = Palette::named(&spec.palette)?;
    let plot = spec.plot();
    let factor = sg.window_starts.len().div_ceil(MAX_SPECTROGRAM_COLUMNS).max(1);
    let shown = sg.cropped(SPECTROGRAM_MAX_HZ).pooled(factor);
    let f_max = shown.freqs.last().copied().unwrap_or(SPECTROGRAM_MAX_HZ).max(1e-9);
    let df = if shown.freqs.len() > 1 { shown.freqs[1] - shown.freqs[0] } else { f_max };
    let logs: Vec<Vec<f64>> = shown
        .power
        .iter()
        .map(|p| p.iter().map(|v| (v + 1e-12).log10()).collect())
        .collect();
    let (lo, hi) = logs
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let cols = logs.len().max(1);
    let cw = plot.w / cols as f64;
    let y_of = |hz: f64| plot.y + plot.h - (hz / (f_max + df / 2.0)) * plot.h;
    let mut svg = Svg::begin(spec);
    let _ = writeln!(svg.out, r#"<g class="spectrogram" data-pool="{factor}">"#);
    for (c, col) in logs.iter().enumerate() {
        for (k, v) in col.iter().enumerate() {
            let f0 = (shown.freqs[k] - df / 2.0).max(0.0);
            let f1 = shown.freqs[k] + df / 2.0;
            let (y1, y0) = (y_of(f1), y_of(f0));
            let fill = palette.at(normalise(*v, lo, hi, false)).hex();
            svg.rect("cell", plot.x + c as f64 * cw, y1, cw, y0 - y1, &fill);
        }
    }
    svg.raw("</g>");
    for b in sg.band_defs.boundaries() {
        let y = y_of(b);
        svg.line("band-boundary", plot.x, y, plot.x + plot.w, y, "#ffffff", 1.5);
    }
    for (name, (b0, b1)) in sg.band_defs.named() {
        let mid = 0.5 * (b0 + b1.min(f_max));
        svg.text(plot.x + plot.w + 6.0, y_of(mid) + 4.0, name, "band-label", 11.0, "start");
    }
    for t in ticks(0.0, f_max, 5) {
        svg.text(plot.x - 6.0, y_of(t) + 4.0, &format!("{t:.2}"), "tick", 10.0, "end");
    }
    if let (Some(first), Some(last)) = (sg.window_starts.first(), sg.window_starts.last()) {
        let span_h = (last - first) / 3600.0;
        for t in ticks(0.0, span_h, 7) {
            let x = plot.x + if span_h > 0.0 { t / span_h * plot.w } else { 0.0 };
            svg.text(x, plot.y + plot.h + 16.0, &tick_label(t), "tick", 10.0, "middle");
        }
    }
    svg.axis_labels(spec, plot);
    svg.legend(spec, &palette, plot, &format!("{lo:.1}"), &format!("{hi:.1}"));
    Ok(svg.finish())
}

/// How scatter points are colored.
#[derive(Debug, Clone, PartialEq)]
pub enum Coloring {
    /// One category per point, with a legend entry per name.
    Categorical { labels: Vec<usize>, names: Vec<String> },
    /// Continuous value per point mapped through the `RenderSpec` palette.
    Continuous { values: Vec<f64>, name: String },
    /// Three alpha layers by local point density.
    Density,
}

/// Poincaré overlays: identity line plus ellipse, or a centroid cross when
/// the ellipse is undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct PoincareOverlay {
    pub centroid: (f64, f64),
    pub ellipse: Option<Ellipse>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scatter {
    pub points: Vec<(f64, f64)>,
    pub coloring: Coloring,
    pub poincare: Option<PoincareOverlay>,
}

const DENSITY_BINS: usize = 64;
const DENSITY_ALPHA: [f64; 3] = [0.25, 0.55, 0.9];

/// Density level (0, 1, 2) of each point from its bin's share of the busiest bin.
pub fn density_levels(points: &[(f64, f64)], x: (f64, f64), y: (f64, f64)) -> Vec<usize> {
    let bin = |v: f64, (lo, hi): (f64, f64)| {
        if hi > lo {
            (((v - lo) / (hi - lo)) * DENSITY_BINS as f64).clamp(0.0, DENSITY_BINS as f64 - 1.0) as usize
        } else {
            0
        }
    };
    let mut counts = vec![0usize; DENSITY_BINS * DENSITY_BINS];
    let cells: Vec<usize> = points
        .iter()
        .map(|&(px, py)| bin(px, x) * DENSITY_BINS + bin(py, y))
        .collect();
    for &c in &cells {
        counts[c] += 1;
    }
    let max = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    cells
        .iter()
        .map(|&c| {
            let share = counts[c] as f64 / max;
            if share >= 2.0 / 3.0 {
                2
            } else if share >= 1.0 / 3.0 {
                1
            } else {
                0
            }
        })
        .collect()
}

fn extent(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = if hi > lo { 0.05 * (hi - lo) } else { lo.abs().max(1.0) * 0.05 };
    (lo - pad, hi + pad)
}

/// Scatter plot; every input point is drawn exactly once.
pub fn render_scatter(scatter: &Scatter, spec: &RenderSpec) -> Result<String, RenderError> {
    spec.validate()?;
    let palette = Palette::named(&spec.palette)?;
    let n = scatter.points.len();
    match &scatter.coloring {
        Coloring::Categorical { labels, .. } if labels.len() != n => {
            return Err(RenderError::LabelMismatch(labels.len(), n))
        }
        Coloring::Continuous { values, .. } if values.len() != n => {
            return Err(RenderError::LabelMismatch(values.len(), n))
        }
        _ => {}
    }
    let plot = spec.plot();
    let (mut xr, mut yr) = (
        extent(scatter.points.iter().map(|p| p.0)),
        extent(scatter.points.iter().map(|p| p.1)),
    );
    let mut area = plot;
    if scatter.poincare.is_some() {
        // Shared square axes so the identity line sits at 45°.
        let mut lo = xr.0.min(yr.0);
        let mut hi = xr.1.max(yr.1);
        if let Some(e) = scatter.poincare.as_ref().and_then(|p| p.ellipse) {
            let r = e.semi_axis_identity.max(e.semi_axis_perp);
            lo = lo.min(e.center.0.min(e.center.1) - r);
            hi = hi.max(e.center.0.max(e.center.1) + r);
        }
        xr = (lo, hi);
        yr = (lo, hi);
        let side = plot.w.min(plot.h);
        area = Rect { w: side, h: side, ..plot };
    }
    let sx = |v: f64| area.x + (v - xr.0) / (xr.1 - xr.0) * area.w;
    let sy = |v: f64| area.y + area.h - (v - yr.0) / (yr.1 - yr.0) * area.h;

    let mut svg = Svg::begin(spec);
    let _ = writeln!(
        svg.out,
        r##"<rect class="frame" x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#888888" stroke-width="0.50"/>"##,
        f(area.x),
        f(area.y),
        f(area.w),
        f(area.h)
    );
    for t in ticks(xr.0, xr.1, 6) {
        svg.text(sx(t), area.y + area.h + 16.0, &tick_label(t), "tick", 10.0, "middle");
    }
    for t in ticks(yr.0, yr.1, 6) {
        svg.text(area.x - 6.0, sy(t) + 4.0, &tick_label(t), "tick", 10.0, "end");
    }
    if scatter.poincare.is_some() {
        svg.line("identity", sx(xr.0), sy(xr.0), sx(xr.1), sy(xr.1), "#666666", 1.0);
    }

    match &scatter.coloring {
        Coloring::Density => {
            let levels = density_levels(&scatter.points, xr, yr);
            for (level, alpha) in DENSITY_ALPHA.iter().enumerate() {
                let fill = palette.at(0.2 + 0.35 * level as f64).hex();
                let _ = writeln!(svg.out, r#"<g class="layer-{level}" fill-opacity="{}">"#, f(*alpha));
                for (p, _) in scatter.points.iter().zip(&levels).filter(|(_, &l)| l == level) {
                    svg.circle("pt", sx(p.0), sy(p.1), 1.5, &fill);
                }
                svg.raw("</g>");
            }
        }
        Coloring::Categorical { labels, names } => {
            svg.raw(r#"<g class="points" fill-opacity="0.75">"#);
            for (p, &l) in scatter.points.iter().zip(labels) {
                svg.circle("pt", sx(p.0), sy(p.1), 2.0, &categorical(l).hex());
            }
            svg.raw("</g>");
            let x = spec.width_px - spec.margins.right + 16.0;
            for (k, name) in names.iter().enumerate() {
                let y = plot.y + 8.0 + k as f64 * 16.0;
                svg.rect("legend-swatch", x, y - 8.0, 10.0, 10.0, &categorical(k).hex());
                svg.text(x + 14.0, y + 1.0, name, "legend-entry", 11.0, "start");
            }
        }
        Coloring::Continuous { values, name } => {
            let (lo, hi) = values
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            svg.raw(r#"<g class="points" fill-opacity="0.75">"#);
            for (p, &v) in scatter.points.iter().zip(values) {
                svg.circle("pt", sx(p.0), sy(p.1), 2.0, &palette.at(normalise(v, lo, hi, spec.log_scale)).hex());
            }
            svg.raw("</g>");
            if n > 0 {
                svg.legend(spec, &palette, plot, &format!("{name} {lo:.1}"), &format!("{name} {hi:.1}"));
            }
        }
    }

    if let Some(overlay) = &scatter.poincare {
        match overlay.ellipse {
            Some(e) => {
                let (cx, cy) = (sx(e.center.0), sy(e.center.1));
                let rx = e.semi_axis_identity / (xr.1 - xr.0) * area.w;
                let ry = e.semi_axis_perp / (yr.1 - yr.0) * area.h;
                let _ = writeln!(
                    svg.out,
                    r##"<ellipse class="ellipse" cx="{cx}" cy="{cy}" rx="{}" ry="{}" transform="rotate({} {cx} {cy})" fill="none" stroke="#111111" stroke-width="1.50" stroke-dasharray="6 3"/>"##,
                    f(rx),
                    f(ry),
                    f(-e.rotation_deg),
                    cx = f(cx),
                    cy = f(cy)
                );
            }
            None => {
                let (cx, cy) = (sx(overlay.centroid.0), sy(overlay.centroid.1));
                svg.line("centroid-cross", cx - 8.0, cy, cx + 8.0, cy, "#111111", 1.5);
                svg.line("centroid-cross", cx, cy - 8.0, cx, cy + 8.0, "#111111", 1.5);
            }
        }
    }
    svg.axis_labels(spec, plot);
    Ok(svg.finish())
}
