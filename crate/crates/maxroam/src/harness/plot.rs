//! Plots of sweep results, rendered as self-contained SVG files.
//!
//! Three views cover the sweeps the harness is built around:
//!
//! * `bars_vs_p` — grouped bars of the headline metric by sharing ratio,
//!   one bar color per mode, with ±1 standard deviation whiskers over seeds;
//! * `heat_delta_r` — a heatmap of the metric over the update interval ×
//!   target ratio grid;
//! * `lines_selection` — the metric as a function of the target ratio, one
//!   line per selection strategy.
//!
//! The headline metric is the mean best validation F-score when the sweep
//! produced one (binary task families), otherwise the mean final validation
//! loss. Rendering is deterministic: identical sweep files give identical
//! SVG bytes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::sweep::{read_sweep_rows, SweepRow};

/// Which view to render.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    BarsVsP,
    HeatDeltaR,
    LinesSelection,
}

impl PlotKind {
    pub const ALL: [PlotKind; 3] = [
        PlotKind::BarsVsP,
        PlotKind::HeatDeltaR,
        PlotKind::LinesSelection,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            PlotKind::BarsVsP => "bars_vs_p.svg",
            PlotKind::HeatDeltaR => "heat_delta_r.svg",
            PlotKind::LinesSelection => "lines_selection.svg",
        }
    }
}

impl std::fmt::Display for PlotKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            PlotKind::BarsVsP => "bars_vs_p",
            PlotKind::HeatDeltaR => "heat_delta_r",
            PlotKind::LinesSelection => "lines_selection",
        };
        // `pad` rather than `write_str` so width specifiers work.
        f.pad(s)
    }
}

impl std::str::FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bars_vs_p" => Ok(PlotKind::BarsVsP),
            "heat_delta_r" => Ok(PlotKind::HeatDeltaR),
            "lines_selection" => Ok(PlotKind::LinesSelection),
            other => Err(Error::Config(format!(
                "unknown plot kind {other:?}; expected bars_vs_p, heat_delta_r, \
                 or lines_selection"
            ))),
        }
    }
}

/// Renders one view of `sweep_csv` into `out_dir`, returning the SVG path.
pub fn render_plot(kind: PlotKind, sweep_csv: &Path, out_dir: &Path) -> Result<PathBuf> {
    let rows = read_sweep_rows(sweep_csv)?;
    let (metric_name, points) = extract_metric(&rows, sweep_csv)?;
    std::fs::create_dir_all(out_dir)?;
    let svg = match kind {
        PlotKind::BarsVsP => bars_vs_p(&points, metric_name),
        PlotKind::HeatDeltaR => heat_delta_r(&points, metric_name),
        PlotKind::LinesSelection => lines_selection(&points, metric_name),
    };
    let path = out_dir.join(kind.file_name());
    std::fs::write(&path, svg)?;
    Ok(path)
}

/// Renders every view.
pub fn render_all(sweep_csv: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    PlotKind::ALL
        .iter()
        .map(|&kind| render_plot(kind, sweep_csv, out_dir))
        .collect()
}

/// One successful run reduced to the knobs the plots group by.
struct MetricPoint {
    sharing_ratio: f64,
    mode: String,
    delta: f64,
    target_r: f64,
    selection: String,
    value: f64,
}

fn extract_metric(rows: &[SweepRow], source: &Path) -> Result<(&'static str, Vec<MetricPoint>)> {
    let ok_rows: Vec<&SweepRow> = rows.iter().filter(|r| r.status == "ok").collect();
    if ok_rows.is_empty() {
        return Err(Error::Config(format!(
            "{}: no successful rows to plot",
            source.display()
        )));
    }
    let has_f = ok_rows.iter().any(|r| r.mean_best_val_f.is_some());
    let (name, value): (_, fn(&SweepRow) -> Option<f64>) = if has_f {
        ("mean best validation F-score", |r| r.mean_best_val_f)
    } else {
        ("mean final validation loss", |r| r.mean_final_val_loss)
    };
    let points: Vec<MetricPoint> = ok_rows
        .iter()
        .filter_map(|r| {
            value(r).map(|v| MetricPoint {
                sharing_ratio: r.sharing_ratio,
                mode: r.mode.clone(),
                delta: r.delta,
                target_r: r.target_r,
                selection: r.selection.clone(),
                value: v,
            })
        })
        .collect();
    if points.is_empty() {
        return Err(Error::Config(format!(
            "{}: successful rows carry no plottable metric",
            source.display()
        )));
    }
    Ok((name, points))
}

fn unique_sorted(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v.dedup();
    v
}

fn unique_in_order(values: impl Iterator<Item = String>) -> Vec<String> {
    let mut seen = Vec::new();
    for v in values {
        if !seen.contains(&v) {
            seen.push(v);
        }
    }
    seen
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

const PALETTE: [&str; 6] = [
    "#4c78a8", "#f58518", "#54a24b", "#e45756", "#72b7b2", "#b279a2",
];

/// Minimal SVG builder; all drawing goes through it so output stays
/// well-formed and deterministic.
struct Svg {
    width: f64,
    height: f64,
    body: String,
}

impl Svg {
    fn new(width: f64, height: f64) -> Self {
        let mut svg = Svg {
            width,
            height,
            body: String::new(),
        };
        svg.rect(0.0, 0.0, width, height, "#ffffff", None);
        svg
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str, stroke: Option<&str>) {
        let stroke = stroke
            .map(|s| format!(r#" stroke="{s}" stroke-width="1""#))
            .unwrap_or_default();
        writeln!(
            self.body,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{fill}"{stroke}/>"#
        )
        .unwrap();
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64) {
        writeln!(
            self.body,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{stroke}" stroke-width="{width}"/>"#
        )
        .unwrap();
    }

    fn circle(&mut self, x: f64, y: f64, r: f64, fill: &str) {
        writeln!(
            self.body,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r}" fill="{fill}"/>"#
        )
        .unwrap();
    }

    fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, content: &str) {
        let escaped = content
            .replace('&', "&amp;")
            .replace('<', "&lt;")
            .replace('>', "&gt;");
        writeln!(
            self.body,
            r##"<text x="{x:.2}" y="{y:.2}" font-family="sans-serif" font-size="{size}" text-anchor="{anchor}" fill="#1a1a1a">{escaped}</text>"##
        )
        .unwrap();
    }

    fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" \
             viewBox=\"0 0 {} {}\">\n{}</svg>\n",
            self.width, self.height, self.width, self.height, self.body
        )
    }
}

struct Frame {
    left: f64,
    top: f64,
    width: f64,
    height: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn y_pos(&self, value: f64) -> f64 {
        let t = (value - self.y_min) / (self.y_max - self.y_min);
        self.top + self.height * (1.0 - t)
    }
}

/// Axes, y ticks, and labels shared by the bar and line charts.
fn draw_frame(svg: &mut Svg, frame: &Frame, title: &str, x_label: &str, y_label: &str) {
    svg.text(frame.left + frame.width / 2.0, 24.0, 15.0, "middle", title);
    svg.line(
        frame.left,
        frame.top,
        frame.left,
        frame.top + frame.height,
        "#333333",
        1.0,
    );
    svg.line(
        frame.left,
        frame.top + frame.height,
        frame.left + frame.width,
        frame.top + frame.height,
        "#333333",
        1.0,
    );
    for k in 0..=4 {
        let value = frame.y_min + (frame.y_max - frame.y_min) * k as f64 / 4.0;
        let y = frame.y_pos(value);
        svg.line(frame.left - 4.0, y, frame.left, y, "#333333", 1.0);
        svg.line(
            frame.left,
            y,
            frame.left + frame.width,
            y,
            "#e6e6e6",
            0.5,
        );
        svg.text(frame.left - 8.0, y + 4.0, 11.0, "end", &format!("{value:.3}"));
    }
    svg.text(
        frame.left + frame.width / 2.0,
        frame.top + frame.height + 36.0,
        12.0,
        "middle",
        x_label,
    );
    // y-axis label, rotated.
    writeln!(
        svg.body,
        r##"<text x="16" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle" fill="#1a1a1a" transform="rotate(-90 16 {:.2})">{}</text>"##,
        frame.top + frame.height / 2.0,
        frame.top + frame.height / 2.0,
        y_label
    )
    .unwrap();
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for v in values {
        min = min.min(v);
        max = max.max(v);
    }
    let span = (max - min).max(1e-6);
    (min - 0.1 * span, max + 0.1 * span)
}

fn legend(svg: &mut Svg, frame: &Frame, names: &[String]) {
    for (i, name) in names.iter().enumerate() {
        let x = frame.left + frame.width - 110.0;
        let y = frame.top + 14.0 + i as f64 * 16.0;
        svg.rect(x, y - 8.0, 10.0, 10.0, PALETTE[i % PALETTE.len()], None);
        svg.text(x + 15.0, y + 1.0, 11.0, "start", name);
    }
}

fn bars_vs_p(points: &[MetricPoint], metric: &str) -> String {
    let ps = unique_sorted(points.iter().map(|p| p.sharing_ratio));
    let modes = unique_in_order(points.iter().map(|p| p.mode.clone()));
    let mut cells: Vec<(usize, usize, f64, f64)> = Vec::new(); // (p idx, mode idx, mean, std)
    for (pi, &p) in ps.iter().enumerate() {
        for (mi, mode) in modes.iter().enumerate() {
            let values: Vec<f64> = points
                .iter()
                .filter(|pt| pt.sharing_ratio == p && &pt.mode == mode)
                .map(|pt| pt.value)
                .collect();
            if !values.is_empty() {
                let (mean, std) = mean_std(&values);
                cells.push((pi, mi, mean, std));
            }
        }
    }
    let mut svg = Svg::new(640.0, 420.0);
    let frame = {
        let (y_min, y_max) =
            padded_range(cells.iter().flat_map(|&(_, _, m, s)| [m - s, m + s, 0.0]));
        Frame {
            left: 70.0,
            top: 40.0,
            width: 540.0,
            height: 310.0,
            y_min,
            y_max,
        }
    };
    draw_frame(
        &mut svg,
        &frame,
        &format!("{metric} by sharing ratio"),
        "sharing ratio p",
        metric,
    );
    let group_width = frame.width / ps.len() as f64;
    let bar_width = (group_width * 0.8) / modes.len() as f64;
    for &(pi, mi, mean, std) in &cells {
        let x = frame.left
            + pi as f64 * group_width
            + group_width * 0.1
            + mi as f64 * bar_width;
        let y0 = frame.y_pos(0.0_f64.max(frame.y_min));
        let y1 = frame.y_pos(mean);
        let (top, height) = if y1 < y0 { (y1, y0 - y1) } else { (y0, y1 - y0) };
        svg.rect(
            x,
            top,
            bar_width * 0.92,
            height,
            PALETTE[mi % PALETTE.len()],
            None,
        );
        if std > 0.0 {
            let cx = x + bar_width * 0.46;
            let (lo, hi) = (frame.y_pos(mean - std), frame.y_pos(mean + std));
            svg.line(cx, lo, cx, hi, "#1a1a1a", 1.0);
            svg.line(cx - 3.0, lo, cx + 3.0, lo, "#1a1a1a", 1.0);
            svg.line(cx - 3.0, hi, cx + 3.0, hi, "#1a1a1a", 1.0);
        }
    }
    for (pi, &p) in ps.iter().enumerate() {
        svg.text(
            frame.left + (pi as f64 + 0.5) * group_width,
            frame.top + frame.height + 18.0,
            11.0,
            "middle",
            &format!("{p}"),
        );
    }
    legend(&mut svg, &frame, &modes);
    svg.finish()
}

fn lines_selection(points: &[MetricPoint], metric: &str) -> String {
    let targets = unique_sorted(points.iter().map(|p| p.target_r));
    let selections = unique_in_order(points.iter().map(|p| p.selection.clone()));
    let mut series: Vec<(String, Vec<(f64, f64, f64)>)> = Vec::new(); // (r, mean, std)
    for selection in &selections {
        let mut line = Vec::new();
        for &r in &targets {
            let values: Vec<f64> = points
                .iter()
                .filter(|pt| pt.target_r == r && &pt.selection == selection)
                .map(|pt| pt.value)
                .collect();
            if !values.is_empty() {
                let (mean, std) = mean_std(&values);
                line.push((r, mean, std));
            }
        }
        series.push((selection.clone(), line));
    }
    let mut svg = Svg::new(640.0, 420.0);
    let frame = {
        let (y_min, y_max) = padded_range(
            series
                .iter()
                .flat_map(|(_, line)| line.iter().flat_map(|&(_, m, s)| [m - s, m + s])),
        );
        Frame {
            left: 70.0,
            top: 40.0,
            width: 540.0,
            height: 310.0,
            y_min,
            y_max,
        }
    };
    draw_frame(
        &mut svg,
        &frame,
        &format!("{metric} by target update ratio"),
        "target update ratio",
        metric,
    );
    let (r_min, r_max) = (targets[0], *targets.last().unwrap());
    let span = (r_max - r_min).max(1e-9);
    let x_pos = |r: f64| frame.left + frame.width * 0.06 + (r - r_min) / span * frame.width * 0.88;
    for (si, (_, line)) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        for pair in line.windows(2) {
            svg.line(
                x_pos(pair[0].0),
                frame.y_pos(pair[0].1),
                x_pos(pair[1].0),
                frame.y_pos(pair[1].1),
                color,
                2.0,
            );
        }
        for &(r, mean, std) in line {
            if std > 0.0 {
                svg.line(
                    x_pos(r),
                    frame.y_pos(mean - std),
                    x_pos(r),
                    frame.y_pos(mean + std),
                    color,
                    1.0,
                );
            }
            svg.circle(x_pos(r), frame.y_pos(mean), 3.5, color);
        }
    }
    for &r in &targets {
        svg.text(
            x_pos(r),
            frame.top + frame.height + 18.0,
            11.0,
            "middle",
            &format!("{r}"),
        );
    }
    legend(&mut svg, &frame, &selections);
    svg.finish()
}

fn heat_color(t: f64) -> String {
    // Two-stop ramp from dark purple to yellow.
    let lerp = |a: f64, b: f64| a + (b - a) * t.clamp(0.0, 1.0);
    format!(
        "#{:02x}{:02x}{:02x}",
        lerp(44.0, 249.0) as u8,
        lerp(16.0, 231.0) as u8,
        lerp(92.0, 33.0) as u8
    )
}

fn heat_delta_r(points: &[MetricPoint], metric: &str) -> String {
    let deltas = unique_sorted(points.iter().map(|p| p.delta));
    let targets = unique_sorted(points.iter().map(|p| p.target_r));
    let mut grid: Vec<Vec<Option<f64>>> = vec![vec![None; targets.len()]; deltas.len()];
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (di, &delta) in deltas.iter().enumerate() {
        for (ri, &r) in targets.iter().enumerate() {
            let values: Vec<f64> = points
                .iter()
                .filter(|pt| pt.delta == delta && pt.target_r == r)
                .map(|pt| pt.value)
                .collect();
            if !values.is_empty() {
                let (mean, _) = mean_std(&values);
                grid[di][ri] = Some(mean);
                lo = lo.min(mean);
                hi = hi.max(mean);
            }
        }
    }
    let span = (hi - lo).max(1e-9);
    let mut svg = Svg::new(640.0, 420.0);
    svg.text(320.0, 24.0, 15.0, "middle", &format!("{metric} over update grid"));
    let (left, top, width, height) = (90.0, 50.0, 440.0, 300.0);
    let cw = width / targets.len() as f64;
    let ch = height / deltas.len() as f64;
    for (di, row) in grid.iter().enumerate() {
        for (ri, cell) in row.iter().enumerate() {
            let x = left + ri as f64 * cw;
            let y = top + di as f64 * ch;
            match cell {
                Some(mean) => {
                    svg.rect(x, y, cw, ch, &heat_color((mean - lo) / span), Some("#ffffff"));
                    let t = (mean - lo) / span;
                    let ink = if t > 0.6 { "#1a1a1a" } else { "#f0f0f0" };
                    writeln!(
                        svg.body,
                        r##"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="middle" fill="{ink}">{mean:.3}</text>"##,
                        x + cw / 2.0,
                        y + ch / 2.0 + 4.0
                    )
                    .unwrap();
                }
                None => svg.rect(x, y, cw, ch, "#d9d9d9", Some("#ffffff")),
            }
        }
    }
    for (ri, &r) in targets.iter().enumerate() {
        svg.text(
            left + (ri as f64 + 0.5) * cw,
            top + height + 18.0,
            11.0,
            "middle",
            &format!("{r}"),
        );
    }
    for (di, &delta) in deltas.iter().enumerate() {
        svg.text(
            left - 8.0,
            top + (di as f64 + 0.5) * ch + 4.0,
            11.0,
            "end",
            &format!("{delta}"),
        );
    }
    svg.text(left + width / 2.0, top + height + 40.0, 12.0, "middle", "target update ratio");
    writeln!(
        svg.body,
        r##"<text x="24" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle" fill="#1a1a1a" transform="rotate(-90 24 {:.2})">update interval (epochs)</text>"##,
        top + height / 2.0,
        top + height / 2.0
    )
    .unwrap();
    // Color scale.
    let bar_x = left + width + 30.0;
    for k in 0..40 {
        let t = k as f64 / 39.0;
        svg.rect(
            bar_x,
            top + height * (1.0 - t) - height / 40.0,
            16.0,
            height / 40.0 + 0.5,
            &heat_color(t),
            None,
        );
    }
    svg.text(bar_x + 20.0, top + 8.0, 10.0, "start", &format!("{hi:.3}"));
    svg.text(bar_x + 20.0, top + height, 10.0, "start", &format!("{lo:.3}"));
    svg.finish()
}
