//! Standalone SVG line plots.
//!
//! Output depends only on the input data: coordinates are printed with a
//! fixed number of decimals and series keep their input order.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::evaluation::{AteReport, SegmentErrorReport};
use crate::geometry::Trajectory;
use crate::trainer::{AblationMode, AblationReport, RunLog, SweepReport};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 30.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 60.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PlotError {
    #[error("nothing to plot: {0}")]
    Empty(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unrecognized report header `{0}`")]
    Unsupported(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self {
            name: name.into(),
            points,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Dashed vertical lines at these x positions.
    pub markers: Vec<f64>,
    /// Plot log10(y); ignored unless every y is positive.
    pub log_y: bool,
    /// Same scale on both axes, for top-down trajectory views.
    pub equal_aspect: bool,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if v.abs() >= 1e4 || v.abs() < 1e-2 {
        return format!("{v:.1e}");
    }
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo == hi {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        (lo - pad, hi + pad)
    } else {
        (lo, hi)
    }
}

impl LineChart {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            ..Self::default()
        }
    }

    pub fn render(&self) -> Result<String, PlotError> {
        let finite = |p: &&(f64, f64)| p.0.is_finite() && p.1.is_finite();
        if self.series.iter().all(|s| s.points.iter().filter(finite).count() == 0) {
            return Err(PlotError::Empty(format!("`{}` has no data points", self.title)));
        }
        let log = self.log_y && self.series.iter().flat_map(|s| &s.points).all(|p| p.1 > 0.0);
        let ty = |y: f64| if log { y.log10() } else { y };
        let pts = || self.series.iter().flat_map(|s| s.points.iter().filter(finite));
        let (mut x0, mut x1) = range(pts().map(|p| p.0).chain(self.markers.iter().copied()));
        let (mut y0, mut y1) = range(pts().map(|p| ty(p.1)));
        let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        if self.equal_aspect {
            let scale = ((x1 - x0) / plot_w).max((y1 - y0) / plot_h);
            let (cx, cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
            x0 = cx - scale * plot_w / 2.0;
            x1 = cx + scale * plot_w / 2.0;
            y0 = cy - scale * plot_h / 2.0;
            y1 = cy + scale * plot_h / 2.0;
        }
        let sx = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * plot_w;
        let sy = |y: f64| MARGIN_TOP + (1.0 - (ty(y) - y0) / (y1 - y0)) * plot_h;
        let sy_raw = |v: f64| MARGIN_TOP + (1.0 - (v - y0) / (y1 - y0)) * plot_h;

        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            out,
            r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
        );
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let xv = x0 + f * (x1 - x0);
            let yv = y0 + f * (y1 - y0);
            let (px, py) = (sx(xv), sy_raw(yv));
            let ylabel = if log { tick_label(10f64.powf(yv)) } else { tick_label(yv) };
            let _ = writeln!(
                out,
                r##"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="#ddd"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
                MARGIN_TOP,
                MARGIN_TOP + plot_h,
                MARGIN_TOP + plot_h + 18.0,
                tick_label(xv)
            );
            let _ = writeln!(
                out,
                r##"<line x1="{MARGIN_LEFT}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
                MARGIN_LEFT + plot_w,
                MARGIN_LEFT - 6.0,
                py + 4.0,
                ylabel
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            MARGIN_LEFT + plot_w / 2.0,
            HEIGHT - 16.0,
            escape(&self.x_label)
        );
        let ylab = if log {
            format!("{} (log scale)", self.y_label)
        } else {
            self.y_label.clone()
        };
        let _ = writeln!(
            out,
            r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
            MARGIN_TOP + plot_h / 2.0,
            MARGIN_TOP + plot_h / 2.0,
            escape(&ylab)
        );
        for m in &self.markers {
            let _ = writeln!(
                out,
                r#"<line x1="{x:.2}" y1="{MARGIN_TOP}" x2="{x:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="4 3"/>"#,
                MARGIN_TOP + plot_h,
                x = sx(*m)
            );
        }
        for (i, s) in self.series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let path: Vec<String> = s
                .points
                .iter()
                .filter(finite)
                .map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1)))
                .collect();
            if path.is_empty() {
                continue;
            }
            let _ = writeln!(
                out,
                r#"<polyline class="series" data-name="{}" fill="none" stroke="{color}" stroke-width="1.6" points="{}"/>"#,
                escape(&s.name),
                path.join(" ")
            );
        }
        if self.series.len() > 1 || !self.series[0].name.is_empty() {
            let lx = MARGIN_LEFT + plot_w - 170.0;
            for (i, s) in self.series.iter().enumerate() {
                let y = MARGIN_TOP + 16.0 + i as f64 * 18.0;
                let color = COLORS[i % COLORS.len()];
                let _ = writeln!(
                    out,
                    r#"<g class="legend"><line x1="{lx:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text></g>"#,
                    lx + 24.0,
                    lx + 30.0,
                    y + 4.0,
                    escape(&s.name)
                );
            }
        }
        out.push_str("</svg>\n");
        Ok(out)
    }
}

/// Top-down (x, y) view of ground truth and estimate.
pub fn trajectory_chart(gt: &Trajectory, est: &Trajectory) -> LineChart {
    let xy = |t: &Trajectory| t.poses().iter().map(|p| (p.translation().x, p.translation().y)).collect();
    let mut c = LineChart::new("Trajectory (top-down)", "x [m]", "y [m]");
    c.series = vec![Series::new("ground truth", xy(gt)), Series::new("estimate", xy(est))];
    c.equal_aspect = true;
    c
}

pub fn segment_translation_chart(report: &SegmentErrorReport) -> LineChart {
    let mut c = LineChart::new("Segment translation error", "path length [m]", "translation error [%]");
    c.series = vec![Series::new(
        "",
        report.lengths.iter().map(|l| (l.length, l.translation_pct)).collect(),
    )];
    c
}

pub fn segment_rotation_chart(report: &SegmentErrorReport) -> LineChart {
    let mut c = LineChart::new("Segment rotation error", "path length [m]", "rotation error [deg/m]");
    c.series = vec![Series::new(
        "",
        report.lengths.iter().map(|l| (l.length, l.rotation_deg_per_m)).collect(),
    )];
    c
}

pub fn ate_cdf_chart(report: &AteReport) -> LineChart {
    let mut c = LineChart::new("Absolute position error CDF", "error [m]", "fraction of frames");
    c.series = vec![Series::new("", step_points(&report.cdf))];
    c
}

fn step_points(cdf: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts = Vec::with_capacity(cdf.len() * 2 + 1);
    let mut prev = 0.0;
    if let Some((x, _)) = cdf.first() {
        pts.push((*x, 0.0));
    }
    for &(x, f) in cdf {
        pts.push((x, prev));
        pts.push((x, f));
        prev = f;
    }
    pts.dedup();
    pts
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn parse(text: &str) -> Result<Self, PlotError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let Some((_, header)) = lines.next() else {
            return Err(PlotError::Empty("input is empty".into()));
        };
        let header: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        let mut rows = Vec::new();
        for (i, line) in lines {
            let row: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
            if row.len() != header.len() {
                return Err(PlotError::Parse {
                    line: i + 1,
                    message: format!("expected {} fields, found {}", header.len(), row.len()),
                });
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(PlotError::Empty("report has a header but no rows".into()));
        }
        Ok(Self { header, rows })
    }

    fn col(&self, name: &str) -> usize {
        self.header.iter().position(|h| h == name).expect("header matched a known report")
    }

    fn num(&self, row: usize, name: &str) -> Result<f64, PlotError> {
        let raw = &self.rows[row][self.col(name)];
        raw.parse().map_err(|_| PlotError::Parse {
            line: row + 2,
            message: format!("`{raw}` in column {name} is not a number"),
        })
    }

    fn column(&self, name: &str) -> Result<Vec<f64>, PlotError> {
        (0..self.rows.len()).map(|r| self.num(r, name)).collect()
    }
}

fn xy(table: &Table, x: &str, y: &str) -> Result<Vec<(f64, f64)>, PlotError> {
    Ok(table.column(x)?.into_iter().zip(table.column(y)?).collect())
}

/// Builds a chart from any CSV report this crate writes, recognized by its header.
pub fn chart_for_report(text: &str) -> Result<LineChart, PlotError> {
    let table = Table::parse(text)?;
    let header = table.header.join(",");
    let chart = match header.as_str() {
        h if h == RunLog::HEADER => {
            let mut c = LineChart::new("Training run", "epoch", "loss per step");
            c.series = vec![
                Series::new("train", xy(&table, "epoch", "train_loss")?),
                Series::new("validation", xy(&table, "epoch", "validation_loss")?),
                Series::new("validation (relative)", xy(&table, "epoch", "validation_relative")?),
            ];
            let col = table.col("transition");
            c.markers = (0..table.rows.len())
                .filter(|&r| !table.rows[r][col].is_empty())
                .map(|r| table.num(r, "epoch"))
                .collect::<Result<_, _>>()?;
            c.log_y = true;
            c
        }
        h if h == SegmentErrorReport::HEADER => {
            let mut c = LineChart::new("Segment translation error", "path length [m]", "translation error [%]");
            c.series = vec![Series::new("", xy(&table, "length", "translation_pct")?)];
            c
        }
        h if h == AteReport::CDF_HEADER => {
            let cdf: Vec<(f64, f64)> = xy(&table, "error_m", "fraction")?;
            let mut c = LineChart::new("Absolute position error CDF", "error [m]", "fraction of frames");
            c.series = vec![Series::new("", step_points(&cdf))];
            c
        }
        h if h == AteReport::HEADER => {
            let mut c = LineChart::new("Absolute position error", "frame", "error [m]");
            c.series = vec![Series::new("", xy(&table, "frame", "error_m")?)];
            c
        }
        h if h == SweepReport::HEADER => {
            let mut c = LineChart::new("Normalized error vs alpha", "alpha", "normalized error");
            c.series = vec![
                Series::new("translation", xy(&table, "alpha", "translation_normalized")?),
                Series::new("rotation", xy(&table, "alpha", "rotation_normalized")?),
            ];
            c
        }
        h if h == AblationReport::CURVES_HEADER => ablation_chart(&table)?,
        _ => return Err(PlotError::Unsupported(header)),
    };
    Ok(chart)
}

/// Mean over seeds of the relative validation loss, one curve per mode.
fn ablation_chart(table: &Table) -> Result<LineChart, PlotError> {
    let mode_col = table.col("mode");
    let mut order: Vec<String> = Vec::new();
    let mut sums: BTreeMap<(usize, i64), (f64, usize)> = BTreeMap::new();
    for r in 0..table.rows.len() {
        let mode = &table.rows[r][mode_col];
        let idx = match order.iter().position(|m| m == mode) {
            Some(i) => i,
            None => {
                order.push(mode.clone());
                order.len() - 1
            }
        };
        let epoch = table.num(r, "epoch")? as i64;
        let e = sums.entry((idx, epoch)).or_insert((0.0, 0));
        e.0 += table.num(r, "validation_relative")?;
        e.1 += 1;
    }
    // canonical mode order first, unknown names after in order of appearance
    let mut ranked: Vec<usize> = (0..order.len()).collect();
    ranked.sort_by_key(|&i| {
        order[i]
            .parse::<AblationMode>()
            .map(|m| AblationMode::ALL.iter().position(|a| *a == m).unwrap_or(usize::MAX))
            .unwrap_or(usize::MAX)
    });
    let mut c = LineChart::new("Ablation: validation loss (relative objective)", "epoch", "loss per step");
    c.series = ranked
        .into_iter()
        .map(|i| {
            let pts = sums
                .range((i, i64::MIN)..=(i, i64::MAX))
                .map(|(&(_, ep), &(s, n))| (ep as f64, s / n as f64))
                .collect();
            Series::new(order[i].clone(), pts)
        })
        .collect();
    c.log_y = true;
    Ok(c)
}

/// Renders any recognized CSV report.
pub fn plot_report(text: &str) -> Result<String, PlotError> {
    chart_for_report(text)?.render()
}
