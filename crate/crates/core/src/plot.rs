//! Minimal SVG line and scatter plots.
//!
//! Plots are rendered from CSV text only (see [`from_csv`]), so every figure
//! can be regenerated from the table it was written next to. Output is a
//! pure function of the input text.

use std::fmt::Write as _;

use crate::error::{Error, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Style {
    Line,
    Markers,
}

#[derive(Clone, Debug)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub style: Style,
}

#[derive(Clone, Debug)]
pub struct Figure {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

/// Axis range `[lo, hi]` over every finite point, padded when degenerate.
fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= 1e-300_f64.max(1e-12 * hi.abs().max(lo.abs())) {
        let pad = if lo == 0.0 { 1.0 } else { 0.5 * lo.abs() };
        return (lo - pad, hi + pad);
    }
    let pad = 0.04 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Roughly five round tick positions covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn tick_label(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 {
        "0".into()
    } else if !(1e-3..1e4).contains(&a) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Figure {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self { title: title.into(), x_label: x_label.into(), y_label: y_label.into(), series: vec![] }
    }

    pub fn with_series(mut self, label: &str, points: Vec<(f64, f64)>, style: Style) -> Self {
        self.series.push(Series { label: label.into(), points, style });
        self
    }

    pub fn to_svg(&self) -> String {
        let all = || self.series.iter().flat_map(|s| s.points.iter());
        let (x0, x1) = range(all().map(|p| p.0));
        let (y0, y1) = range(all().map(|p| p.1));
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            LEFT + pw / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        for t in ticks(x0, x1) {
            let x = sx(t);
            let _ = writeln!(
                s,
                r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#dddddd"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
                TOP + ph,
                TOP + ph + 16.0,
                tick_label(t)
            );
        }
        for t in ticks(y0, y1) {
            let y = sy(t);
            let _ = writeln!(
                s,
                r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
                LEFT + pw,
                LEFT - 6.0,
                y + 4.0,
                tick_label(t)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 14.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );
        for (i, series) in self.series.iter().enumerate() {
            let colour = PALETTE[i % PALETTE.len()];
            let pts: Vec<(f64, f64)> =
                series.points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()).map(|&(x, y)| (sx(x), sy(y))).collect();
            match series.style {
                Style::Line => {
                    let path: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                    let _ = writeln!(
                        s,
                        r#"<polyline fill="none" stroke="{colour}" stroke-width="1.2" points="{}"/>"#,
                        path.join(" ")
                    );
                }
                Style::Markers => {
                    for (x, y) in &pts {
                        let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2.2" fill="{colour}"/>"#);
                    }
                }
            }
            let ly = TOP + 14.0 + 18.0 * i as f64;
            let lx = LEFT + pw + 12.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{colour}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
                lx + 18.0,
                lx + 24.0,
                ly + 4.0,
                escape(&series.label)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

/// Header and rows of a CSV table, all as text.
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn parse(text: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let headers = rdr.headers()?.iter().map(str::to_string).collect();
        let rows = rdr
            .records()
            .map(|r| r.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<Vec<Vec<String>>, _>>()?;
        Ok(Self { headers, rows })
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse(format!("CSV has no `{name}` column")))
    }

    pub fn numbers(&self, name: &str) -> Result<Vec<f64>> {
        let c = self.column(name)?;
        self.rows
            .iter()
            .map(|r| r[c].parse::<f64>().map_err(|e| Error::Parse(format!("column `{name}`: {e}"))))
            .collect()
    }

    fn has(&self, names: &[&str]) -> bool {
        names.iter().all(|n| self.headers.iter().any(|h| h == n))
    }
}

/// Which figure a CSV backs, identified by its header.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Sweep,
    Spectrum,
    Trajectory,
    Control,
}

pub fn kind_of(table: &Table) -> Option<Kind> {
    if table.has(&["scheme", "N", "variant", "k", "im_lambda"]) {
        Some(Kind::Sweep)
    } else if table.has(&["idx", "re", "im", "residual"]) {
        Some(Kind::Spectrum)
    } else if table.has(&["t", "v_tip", "w_tip", "energy", "y"]) {
        Some(Kind::Trajectory)
    } else if table.has(&["scheme", "N", "n", "kalman_rank", "brockett_rank"]) {
        Some(Kind::Control)
    } else {
        None
    }
}

/// Figures backed by `csv` (named `title`), as `(suffix, svg)` pairs.
///
/// Trajectories give a pair (longitudinal and transverse tip deflection)
/// plus the energy; the other tables give one figure each.
pub fn from_csv(title: &str, csv: &str) -> Result<Vec<(String, String)>> {
    let table = Table::parse(csv)?;
    let kind = kind_of(&table).ok_or_else(|| Error::Parse(format!("{title}: unrecognised CSV header")))?;
    Ok(match kind {
        Kind::Sweep => vec![(String::new(), sweep_figure(title, &table)?.to_svg())],
        Kind::Spectrum => {
            let re = table.numbers("re")?;
            let im = table.numbers("im")?;
            let fig = Figure::new(title, "Re λ", "Im λ").with_series(
                "eigenvalues",
                re.into_iter().zip(im).collect(),
                Style::Markers,
            );
            vec![(String::new(), fig.to_svg())]
        }
        Kind::Trajectory => {
            let t = table.numbers("t")?;
            let series = |col: &str| -> Result<Vec<(f64, f64)>> {
                Ok(t.iter().copied().zip(table.numbers(col)?).collect())
            };
            vec![
                (
                    "_v_tip".into(),
                    Figure::new(&format!("{title}: longitudinal tip deflection"), "t [s]", "v(ℓ) [m]")
                        .with_series("v(ℓ)", series("v_tip")?, Style::Line)
                        .to_svg(),
                ),
                (
                    "_w_tip".into(),
                    Figure::new(&format!("{title}: transverse tip deflection"), "t [s]", "w(ℓ) [m]")
                        .with_series("w(ℓ)", series("w_tip")?, Style::Line)
                        .to_svg(),
                ),
                (
                    "_energy".into(),
                    Figure::new(&format!("{title}: energy"), "t [s]", "H [J]")
                        .with_series("H", series("energy")?, Style::Line)
                        .to_svg(),
                ),
            ]
        }
        Kind::Control => {
            let c_scheme = table.column("scheme")?;
            let n_col = table.numbers("N")?;
            let kal = table.numbers("kalman_rank")?;
            let dim = table.numbers("n")?;
            let mut fig = Figure::new(title, "N", "rank / 6N");
            for scheme in distinct(&table, c_scheme) {
                let pts = (0..table.rows.len())
                    .filter(|&i| table.rows[i][c_scheme] == scheme)
                    .map(|i| (n_col[i], kal[i] / dim[i]))
                    .collect();
                fig = fig.with_series(&format!("{scheme} kalman"), pts, Style::Markers);
            }
            vec![(String::new(), fig.to_svg())]
        }
    })
}

fn distinct(table: &Table, col: usize) -> Vec<String> {
    let mut out: Vec<String> = vec![];
    for r in &table.rows {
        if !out.contains(&r[col]) {
            out.push(r[col].clone());
        }
    }
    out
}

fn sweep_figure(title: &str, table: &Table) -> Result<Figure> {
    let c_scheme = table.column("scheme")?;
    let c_k = table.column("k")?;
    let n = table.numbers("N")?;
    let im = table.numbers("im_lambda")?;
    let mut fig = Figure::new(title, "N", "Im λ_k / Im λ_k(N_max) − 1");
    for scheme in distinct(table, c_scheme) {
        for k in distinct(table, c_k) {
            let rows: Vec<usize> = (0..table.rows.len())
                .filter(|&i| table.rows[i][c_scheme] == scheme && table.rows[i][c_k] == k)
                .collect();
            let Some(&last) = rows.iter().max_by(|&&a, &&b| n[a].total_cmp(&n[b])) else { continue };
            let pts = rows.iter().map(|&i| (n[i], im[i] / im[last] - 1.0)).collect();
            fig = fig.with_series(&format!("{scheme} k={k}"), pts, Style::Line);
        }
    }
    Ok(fig)
}
