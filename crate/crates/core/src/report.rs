//! Result charts as standalone SVG, and frames decorated with outcome borders.
//!
//! Every chart is drawn on a fixed 960x540 canvas with coordinates printed at
//! two decimals, so identical inputs give identical bytes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::eval::{ConfusionMatrix, PositiveClass};
use crate::frame_io::{self, DatasetManifest, Frame, FrameIoError};
use crate::parallel;
use crate::pipeline::{self, DetectionRecord, PipelineError, Truth};

pub const WIDTH: f64 = 960.0;
pub const HEIGHT: f64 = 540.0;
pub const BORDER: usize = 5;
pub const DECORATED_DIR: &str = "decorated";

const BLUE: &str = "#1f77b4";
const RED: &str = "#d62728";
const GREEN: &str = "#2ca02c";
const GRAY: &str = "#7f7f7f";
const YELLOW: &str = "#e6b800";
const INK: &str = "#222222";

// Plot area inside the canvas.
const LEFT: f64 = 80.0;
const RIGHT: f64 = 920.0;
const TOP: f64 = 80.0;
const BOTTOM: f64 = 470.0;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{kind} chart needs {field}")]
    MissingInput {
        kind: &'static str,
        field: &'static str,
    },
    #[error(transparent)]
    Io(#[from] FrameIoError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

pub type Result<T, E = ReportError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChartKind {
    DistributionBars,
    Timeline,
    ActualVsDetected,
    ThresholdLine,
    ConfusionHeatmap,
}

impl ChartKind {
    pub const ALL: [ChartKind; 5] = [
        ChartKind::DistributionBars,
        ChartKind::Timeline,
        ChartKind::ActualVsDetected,
        ChartKind::ThresholdLine,
        ChartKind::ConfusionHeatmap,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ChartKind::DistributionBars => "distribution_bars",
            ChartKind::Timeline => "timeline",
            ChartKind::ActualVsDetected => "actual_vs_detected",
            ChartKind::ThresholdLine => "threshold_line",
            ChartKind::ConfusionHeatmap => "confusion_heatmap",
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            ChartKind::DistributionBars => "distribution.svg",
            ChartKind::Timeline => "timeline.svg",
            ChartKind::ActualVsDetected => "actual_vs_detected.svg",
            ChartKind::ThresholdLine => "thresholds.svg",
            ChartKind::ConfusionHeatmap => "confusion.svg",
        }
    }

    pub fn default_title(self) -> &'static str {
        match self {
            ChartKind::DistributionBars => "Distribution of Attack Detection Results",
            ChartKind::Timeline => "Timeline of Detected Attacks",
            ChartKind::ActualVsDetected => "Actual vs Detected Attacks",
            ChartKind::ThresholdLine => "Threshold Values",
            ChartKind::ConfusionHeatmap => "Confusion Matrix",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChartSpec {
    pub kind: ChartKind,
    pub title: String,
    pub output: PathBuf,
}

impl ChartSpec {
    pub fn new(kind: ChartKind, out_dir: &Path) -> Self {
        Self {
            kind,
            title: kind.default_title().to_string(),
            output: out_dir.join(kind.file_name()),
        }
    }
}

/// Attacked-positive counts, ignoring records of unknown truth.
fn tally(records: &[DetectionRecord]) -> ConfusionMatrix {
    let mut m = ConfusionMatrix::from_attacked_counts(0, 0, 0, 0);
    for r in records {
        match (r.truth, r.flagged) {
            (Truth::Attacked, true) => m.tp += 1,
            (Truth::Attacked, false) => m.fn_ += 1,
            (Truth::Clean, true) => m.fp += 1,
            (Truth::Clean, false) => m.tn += 1,
            (Truth::Unknown, _) => {}
        }
    }
    m
}

fn counts(
    kind: ChartKind,
    records: Option<&[DetectionRecord]>,
    matrix: Option<&ConfusionMatrix>,
) -> Result<ConfusionMatrix> {
    match (matrix, records) {
        (Some(m), _) => Ok(m.with_positive(PositiveClass::Attacked)),
        (None, Some(r)) => Ok(tally(r)),
        (None, None) => Err(ReportError::MissingInput {
            kind: kind.as_str(),
            field: "records or confusion matrix",
        }),
    }
}

fn need_records(
    kind: ChartKind,
    records: Option<&[DetectionRecord]>,
) -> Result<&[DetectionRecord]> {
    records.ok_or(ReportError::MissingInput {
        kind: kind.as_str(),
        field: "records",
    })
}

pub fn escape_xml(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c if (c as u32) < 0x20 && c != '\n' && c != '\t' => out.push(' '),
            c => out.push(c),
        }
    }
    out
}

struct Svg {
    buf: String,
}

impl Svg {
    fn new(title: &str) -> Self {
        let mut buf = String::new();
        let _ = write!(
            buf,
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">\n<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"#ffffff\"/>\n"
        );
        let mut svg = Self { buf };
        svg.text(WIDTH / 2.0, 40.0, 20.0, "middle", INK, title);
        svg
    }

    fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, fill: &str, body: &str) {
        let _ = writeln!(
            self.buf,
            "<text x=\"{x:.2}\" y=\"{y:.2}\" font-size=\"{size:.0}\" text-anchor=\"{anchor}\" fill=\"{fill}\">{}</text>",
            escape_xml(body)
        );
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64) {
        let _ = writeln!(
            self.buf,
            "<line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" stroke=\"{stroke}\" stroke-width=\"{width:.1}\"/>"
        );
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str, class: &str) {
        let _ = writeln!(
            self.buf,
            "<rect class=\"{class}\" x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" fill=\"{fill}\" stroke=\"{INK}\" stroke-width=\"0.5\"/>"
        );
    }

    fn circle(&mut self, cx: f64, cy: f64, r: f64, stroke: &str, class: &str) {
        let _ = writeln!(
            self.buf,
            "<circle class=\"{class}\" cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"{r:.1}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"1.5\"/>"
        );
    }

    fn cross(&mut self, cx: f64, cy: f64, r: f64, stroke: &str, class: &str) {
        let _ = writeln!(
            self.buf,
            "<path class=\"{class}\" d=\"M{:.2} {:.2}L{:.2} {:.2}M{:.2} {:.2}L{:.2} {:.2}\" stroke=\"{stroke}\" stroke-width=\"1.5\"/>",
            cx - r,
            cy - r,
            cx + r,
            cy + r,
            cx - r,
            cy + r,
            cx + r,
            cy - r
        );
    }

    fn polyline(&mut self, points: &[(f64, f64)], stroke: &str, dash: bool, class: &str) {
        if points.is_empty() {
            return;
        }
        let mut pts = String::new();
        for (i, (x, y)) in points.iter().enumerate() {
            if i > 0 {
                pts.push(' ');
            }
            let _ = write!(pts, "{x:.2},{y:.2}");
        }
        let dash = if dash {
            " stroke-dasharray=\"6 4\""
        } else {
            ""
        };
        let _ = writeln!(
            self.buf,
            "<polyline class=\"{class}\" points=\"{pts}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"1.5\"{dash}/>"
        );
    }

    fn axes(&mut self, x_label: &str, y_label: &str) {
        self.line(LEFT, BOTTOM, RIGHT, BOTTOM, INK, 1.0);
        self.line(LEFT, TOP, LEFT, BOTTOM, INK, 1.0);
        self.text(
            (LEFT + RIGHT) / 2.0,
            BOTTOM + 45.0,
            14.0,
            "middle",
            INK,
            x_label,
        );
        let _ = writeln!(
            self.buf,
            "<text x=\"20.00\" y=\"{:.2}\" font-size=\"14\" text-anchor=\"middle\" fill=\"{INK}\" transform=\"rotate(-90 20 {:.2})\">{}</text>",
            (TOP + BOTTOM) / 2.0,
            (TOP + BOTTOM) / 2.0,
            escape_xml(y_label)
        );
    }

    fn legend(&mut self, items: &[(&str, &str)]) {
        for (i, (color, label)) in items.iter().enumerate() {
            let x = LEFT + 10.0 + 170.0 * i as f64;
            let _ = writeln!(
                self.buf,
                "<rect x=\"{x:.2}\" y=\"55.00\" width=\"12\" height=\"12\" fill=\"{color}\"/>"
            );
            self.text(x + 18.0, 65.0, 12.0, "start", INK, label);
        }
    }

    fn finish(mut self) -> Vec<u8> {
        self.buf.push_str("</svg>\n");
        self.buf.into_bytes()
    }
}

/// Horizontal position of the `i`-th of `n` records.
fn x_at(i: usize, n: usize) -> f64 {
    if n <= 1 {
        (LEFT + RIGHT) / 2.0
    } else {
        LEFT + 10.0 + (RIGHT - LEFT - 20.0) * i as f64 / (n - 1) as f64
    }
}

fn x_ticks(svg: &mut Svg, records: &[DetectionRecord]) {
    let n = records.len();
    if n == 0 {
        return;
    }
    let step = (n / 10).max(1);
    for i in (0..n).step_by(step) {
        let x = x_at(i, n);
        svg.line(x, BOTTOM, x, BOTTOM + 5.0, INK, 1.0);
        svg.text(
            x,
            BOTTOM + 20.0,
            11.0,
            "middle",
            INK,
            &records[i].frame_index.to_string(),
        );
    }
}

fn distribution(title: &str, m: &ConfusionMatrix) -> Vec<u8> {
    let bars = [
        ("Actual Attack Frames", m.tp + m.fn_, BLUE),
        ("Detected Attack Frames", m.tp + m.fp, RED),
        ("Undetected Attack Frames", m.fn_, RED),
        ("Non-Attacked (Detection)", m.tn + m.fn_, GREEN),
        ("Non-Attacked (Actual)", m.tn + m.fp, GRAY),
    ];
    let mut svg = Svg::new(title);
    svg.axes("Category", "Frames");
    let max = bars.iter().map(|b| b.1).max().unwrap_or(0).max(1) as f64;
    let slot = (RIGHT - LEFT) / bars.len() as f64;
    for (i, (label, count, color)) in bars.iter().enumerate() {
        let h = (BOTTOM - TOP - 30.0) * *count as f64 / max;
        let x = LEFT + slot * i as f64 + slot * 0.2;
        svg.rect(x, BOTTOM - h, slot * 0.6, h, color, "bar");
        svg.text(
            x + slot * 0.3,
            BOTTOM - h - 6.0,
            14.0,
            "middle",
            INK,
            &count.to_string(),
        );
        svg.text(x + slot * 0.3, BOTTOM + 20.0, 12.0, "middle", INK, label);
    }
    svg.finish()
}

fn timeline(title: &str, records: &[DetectionRecord]) -> Vec<u8> {
    let mut svg = Svg::new(title);
    svg.axes("Frame", "Verdict");
    svg.legend(&[(RED, "detected attack"), (GREEN, "non-attacked")]);
    let (hi, lo) = (TOP + 100.0, BOTTOM - 100.0);
    svg.text(LEFT - 8.0, hi + 4.0, 12.0, "end", INK, "attack");
    svg.text(LEFT - 8.0, lo + 4.0, 12.0, "end", INK, "clean");
    x_ticks(&mut svg, records);
    let n = records.len();
    for (i, r) in records.iter().enumerate() {
        if r.flagged {
            svg.cross(x_at(i, n), hi, 4.0, RED, "flagged");
        } else {
            svg.circle(x_at(i, n), lo, 4.0, GREEN, "clean");
        }
    }
    svg.finish()
}

fn actual_vs_detected(title: &str, records: &[DetectionRecord], m: &ConfusionMatrix) -> Vec<u8> {
    let mut svg = Svg::new(title);
    svg.axes("Frame", "Attack");
    svg.legend(&[(BLUE, "actual attack"), (RED, "detected attack")]);
    let (hi, lo) = (TOP + 100.0, BOTTOM - 100.0);
    svg.text(LEFT - 8.0, hi + 4.0, 12.0, "end", INK, "yes");
    svg.text(LEFT - 8.0, lo + 4.0, 12.0, "end", INK, "no");
    x_ticks(&mut svg, records);
    let n = records.len();
    for (i, r) in records.iter().enumerate() {
        let x = x_at(i, n);
        let actual = r.truth == Truth::Attacked;
        svg.cross(x, if actual { hi } else { lo }, 4.0, BLUE, "actual");
        svg.circle(x, if r.flagged { hi } else { lo }, 5.0, RED, "detected");
    }
    let total = m.total();
    let acc = if total == 0 {
        0.0
    } else {
        100.0 * (m.tp + m.tn) as f64 / total as f64
    };
    let summary = format!(
        "actual {}, accurately detected {}, false detected {}, undetected {}, accuracy {acc:.2}%",
        m.tp + m.fn_,
        m.tp,
        m.fp,
        m.fn_
    );
    svg.text(WIDTH / 2.0, HEIGHT - 15.0, 14.0, "middle", INK, &summary);
    svg.finish()
}

fn threshold_line(title: &str, records: &[DetectionRecord]) -> Vec<u8> {
    let mut svg = Svg::new(title);
    svg.axes("Frame", "Score");
    svg.legend(&[
        (BLUE, "score"),
        (GRAY, "threshold"),
        (RED, "false"),
        (GREEN, "accurate"),
        (YELLOW, "undetected"),
    ]);
    let n = records.len();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for r in records {
        lo = lo.min(r.score).min(r.threshold);
        hi = hi.max(r.score).max(r.threshold);
    }
    if !lo.is_finite() || !hi.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.1).max(1e-3);
    let (lo, hi) = (lo - pad, hi + pad);
    let y = |v: f64| BOTTOM - (BOTTOM - TOP - 10.0) * (v - lo) / (hi - lo);
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        svg.line(LEFT - 5.0, y(v), LEFT, y(v), INK, 1.0);
        svg.text(LEFT - 8.0, y(v) + 4.0, 11.0, "end", INK, &format!("{v:.3}"));
    }
    x_ticks(&mut svg, records);
    let scores: Vec<(f64, f64)> = records
        .iter()
        .enumerate()
        .map(|(i, r)| (x_at(i, n), y(r.score)))
        .collect();
    let thresholds: Vec<(f64, f64)> = records
        .iter()
        .enumerate()
        .map(|(i, r)| (x_at(i, n), y(r.threshold)))
        .collect();
    svg.polyline(&scores, BLUE, false, "score");
    svg.polyline(&thresholds, GRAY, true, "threshold");
    for (i, r) in records.iter().enumerate() {
        let marker = match (r.truth, r.flagged) {
            (Truth::Clean, true) => Some((RED, "false")),
            (Truth::Attacked, true) => Some((GREEN, "accurate")),
            (Truth::Attacked, false) => Some((YELLOW, "undetected")),
            _ => None,
        };
        if let Some((color, class)) = marker {
            svg.circle(x_at(i, n), y(r.score), 4.0, color, class);
        }
    }
    svg.finish()
}

/// Cell fill on a white-to-navy ramp, monotone in `t`.
fn ramp(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        lerp(247.0, 8.0),
        lerp(251.0, 48.0),
        lerp(255.0, 107.0)
    )
}

fn heatmap(title: &str, m: &ConfusionMatrix) -> Vec<u8> {
    let mut svg = Svg::new(title);
    // Rows are true labels, columns predictions; clean first.
    let cells = [[m.tn, m.fp], [m.fn_, m.tp]];
    let labels = ["Non-Attacked", "Attacked"];
    let max = cells.iter().flatten().copied().max().unwrap_or(0).max(1) as f64;
    let size = 180.0;
    let x0 = WIDTH / 2.0 - size;
    let y0 = 110.0;
    for (row, counts) in cells.iter().enumerate() {
        for (col, &count) in counts.iter().enumerate() {
            let t = count as f64 / max;
            let (x, y) = (x0 + size * col as f64, y0 + size * row as f64);
            svg.rect(x, y, size, size, &ramp(t), "cell");
            let ink = if t > 0.5 { "#ffffff" } else { INK };
            svg.text(
                x + size / 2.0,
                y + size / 2.0 + 10.0,
                28.0,
                "middle",
                ink,
                &count.to_string(),
            );
        }
        svg.text(
            x0 - 10.0,
            y0 + size * row as f64 + size / 2.0 + 5.0,
            14.0,
            "end",
            INK,
            labels[row],
        );
        svg.text(
            x0 + size * row as f64 + size / 2.0,
            y0 + 2.0 * size + 25.0,
            14.0,
            "middle",
            INK,
            labels[row],
        );
    }
    svg.text(
        WIDTH / 2.0,
        y0 + 2.0 * size + 55.0,
        14.0,
        "middle",
        INK,
        "Predicted label",
    );
    svg.text(x0 - 10.0, y0 - 12.0, 14.0, "end", INK, "True label");
    svg.finish()
}

pub fn render_chart(
    spec: &ChartSpec,
    records: Option<&[DetectionRecord]>,
    matrix: Option<&ConfusionMatrix>,
) -> Result<Vec<u8>> {
    let kind = spec.kind;
    Ok(match kind {
        ChartKind::DistributionBars => distribution(&spec.title, &counts(kind, records, matrix)?),
        ChartKind::Timeline => timeline(&spec.title, need_records(kind, records)?),
        ChartKind::ActualVsDetected => {
            let r = need_records(kind, records)?;
            actual_vs_detected(&spec.title, r, &counts(kind, Some(r), matrix)?)
        }
        ChartKind::ThresholdLine => threshold_line(&spec.title, need_records(kind, records)?),
        ChartKind::ConfusionHeatmap => heatmap(&spec.title, &counts(kind, records, matrix)?),
    })
}

/// Writes all five charts under `out_dir` and returns their paths.
pub fn render_all(
    out_dir: &Path,
    records: &[DetectionRecord],
    matrix: Option<&ConfusionMatrix>,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| FrameIoError::io(out_dir, e))?;
    let mut paths = Vec::new();
    for kind in ChartKind::ALL {
        let spec = ChartSpec::new(kind, out_dir);
        let bytes = render_chart(&spec, Some(records), matrix)?;
        std::fs::write(&spec.output, bytes).map_err(|e| FrameIoError::io(&spec.output, e))?;
        paths.push(spec.output);
    }
    Ok(paths)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    TruePositive,
    FalsePositive,
    TrueNegative,
    FalseNegative,
    Unknown,
}

impl Outcome {
    pub fn of(record: &DetectionRecord) -> Self {
        match (record.truth, record.flagged) {
            (Truth::Attacked, true) => Outcome::TruePositive,
            (Truth::Attacked, false) => Outcome::FalseNegative,
            (Truth::Clean, true) => Outcome::FalsePositive,
            (Truth::Clean, false) => Outcome::TrueNegative,
            (Truth::Unknown, _) => Outcome::Unknown,
        }
    }

    pub fn border_color(self) -> Option<[f64; 3]> {
        match self {
            Outcome::TruePositive => Some([0.0, 1.0, 0.0]),
            Outcome::FalsePositive | Outcome::FalseNegative => Some([1.0, 0.0, 0.0]),
            Outcome::TrueNegative | Outcome::Unknown => None,
        }
    }
}

/// Paints a `BORDER`-pixel ring: every pixel closer than `BORDER` to an edge.
pub fn add_border(frame: &Frame, color: [f64; 3]) -> Frame {
    let (w, h) = (frame.width(), frame.height());
    frame.map_pixels(|i, v| {
        let p = i / 3;
        let (x, y) = (p % w, p / w);
        let edge = x.min(y).min(w - 1 - x).min(h - 1 - y);
        if edge < BORDER {
            color[i % 3]
        } else {
            v
        }
    })
}

/// Writes every frame of the dataset under `out_dir/decorated/`, bordered by
/// outcome. Frames without a border are copied verbatim.
pub fn decorate_frames(
    records: &[DetectionRecord],
    manifest: &DatasetManifest,
    base_dir: &Path,
    out_dir: &Path,
    workers: usize,
) -> Result<usize> {
    pipeline::ensure_aligned(records, manifest)?;
    let root = out_dir.join(DECORATED_DIR);
    let jobs: Vec<_> = records.iter().zip(&manifest.entries).collect();
    let results: Vec<Result<()>> = parallel::install(workers, || {
        jobs.par_iter()
            .map(|(r, e)| {
                let src = base_dir.join(&e.path);
                let dst = root.join(&e.path);
                if let Some(parent) = dst.parent() {
                    std::fs::create_dir_all(parent).map_err(|err| FrameIoError::io(parent, err))?;
                }
                match Outcome::of(r).border_color() {
                    None => {
                        std::fs::copy(&src, &dst).map_err(|err| FrameIoError::io(&dst, err))?;
                    }
                    Some(color) => {
                        let frame = frame_io::read_frame_file(&src, e.index)?;
                        frame_io::write_frame_file(&dst, &add_border(&frame, color))?;
                    }
                }
                Ok(())
            })
            .collect()
    });
    for r in results {
        r?;
    }
    Ok(jobs.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(i: usize, truth: Truth, flagged: bool) -> DetectionRecord {
        DetectionRecord {
            frame_index: i,
            score: 0.4 + 0.01 * i as f64,
            threshold: 0.5,
            flagged,
            truth,
            epsilon: None,
        }
    }

    #[test]
    fn escape_handles_markup() {
        assert_eq!(escape_xml("a<b & \"c\">"), "a&lt;b &amp; &quot;c&quot;&gt;");
    }

    #[test]
    fn ramp_is_monotone() {
        let dark = |s: String| u32::from_str_radix(&s[1..3], 16).unwrap();
        let mut prev = 256;
        for k in 0..=10 {
            let r = dark(ramp(k as f64 / 10.0));
            assert!(r < prev);
            prev = r;
        }
    }

    #[test]
    fn missing_inputs_are_reported() {
        let spec = ChartSpec::new(ChartKind::Timeline, Path::new("."));
        assert!(matches!(
            render_chart(&spec, None, None),
            Err(ReportError::MissingInput {
                kind: "timeline",
                ..
            })
        ));
        let spec = ChartSpec::new(ChartKind::ConfusionHeatmap, Path::new("."));
        assert!(render_chart(&spec, None, None).is_err());
    }

    #[test]
    fn timeline_counts_glyphs() {
        let records = vec![
            rec(0, Truth::Clean, false),
            rec(1, Truth::Attacked, true),
            rec(2, Truth::Clean, true),
        ];
        let spec = ChartSpec::new(ChartKind::Timeline, Path::new("."));
        let svg = String::from_utf8(render_chart(&spec, Some(&records), None).unwrap()).unwrap();
        assert_eq!(svg.matches("class=\"flagged\"").count(), 2);
        assert_eq!(svg.matches("class=\"clean\"").count(), 1);
    }

    #[test]
    fn border_ring_and_interior() {
        let f = Frame::filled(0, 12, 12, 0.5).unwrap();
        let d = add_border(&f, [0.0, 1.0, 0.0]);
        for y in 0..12 {
            for x in 0..12 {
                let ring = x < 5 || y < 5 || x >= 7 || y >= 7;
                let expect = if ring { [0.0, 1.0, 0.0] } else { [0.5; 3] };
                for (c, &e) in expect.iter().enumerate() {
                    assert_eq!(d.get(x, y, c), e, "({x},{y})");
                }
            }
        }
    }
}
