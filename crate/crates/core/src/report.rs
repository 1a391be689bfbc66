//! Survival series and their CSV / SVG renderings.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowStatus {
    Ok,
    /// The quadrature hit its subdivision budget before meeting the tolerance.
    Unconverged,
    Defaulted,
    Failed,
}

impl RowStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ok => "ok",
            Self::Unconverged => "unconverged",
            Self::Defaulted => "defaulted",
            Self::Failed => "failed",
        }
    }

    pub fn is_numerical_failure(self) -> bool {
        matches!(self, Self::Unconverged | Self::Failed)
    }
}

/// Oracle estimate attached to a row by a validation run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleCell {
    pub estimate: f64,
    pub std_error: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub t: f64,
    pub survival: f64,
    pub spread: f64,
    pub bond_price: f64,
    pub status: RowStatus,
    pub oracle: Option<OracleCell>,
}

impl SeriesRow {
    pub fn defaulted(t: f64) -> Self {
        Self { t, survival: 0.0, spread: f64::INFINITY, bond_price: 0.0, status: RowStatus::Defaulted, oracle: None }
    }

    pub fn failed(t: f64) -> Self {
        Self { t, survival: f64::NAN, spread: f64::NAN, bond_price: f64::NAN, status: RowStatus::Failed, oracle: None }
    }
}

/// One investor's survival / spread / price curve at one dependence level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalSeries {
    pub investor: String,
    pub theta: f64,
    /// `(key, value)` pairs written as `#` lines ahead of the header.
    pub metadata: Vec<(String, String)>,
    pub rows: Vec<SeriesRow>,
    /// Emit the oracle columns even on rows without an estimate.
    pub validated: bool,
}

impl SurvivalSeries {
    pub fn label(&self) -> String {
        format!("{} θ={}", self.investor, fmt_num(self.theta))
    }

    pub fn numerical_failures(&self) -> usize {
        self.rows.iter().filter(|r| r.status.is_numerical_failure()).count()
    }
}

/// Rounds to ten significant digits and prints without exponent, so output is
/// stable under last-bit noise and parses back losslessly.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{x:.9e}").parse().unwrap_or(x);
    let rounded = if rounded == 0.0 { 0.0 } else { rounded };
    format!("{rounded}")
}

pub fn to_csv(series: &SurvivalSeries) -> String {
    let mut out = String::new();
    for (k, v) in &series.metadata {
        let _ = writeln!(out, "# {k}: {}", v.replace('\n', " "));
    }
    out.push_str("t,survival,spread,bond_price,status");
    if series.validated {
        out.push_str(",oracle,oracle_se,z");
    }
    out.push('\n');
    for r in &series.rows {
        let _ = write!(
            out,
            "{},{},{},{},{}",
            fmt_num(r.t),
            fmt_num(r.survival),
            fmt_num(r.spread),
            fmt_num(r.bond_price),
            r.status.as_str()
        );
        if series.validated {
            match r.oracle {
                Some(o) => {
                    let _ = write!(out, ",{},{},{}", fmt_num(o.estimate), fmt_num(o.std_error), fmt_num(o.z));
                }
                None => out.push_str(",,,"),
            }
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Survival,
    Spread,
}

impl Quantity {
    fn axis_label(self) -> &'static str {
        match self {
            Self::Survival => "survival probability",
            Self::Spread => "credit spread",
        }
    }

    fn pick(self, r: &SeriesRow) -> f64 {
        match self {
            Self::Survival => r.survival,
            Self::Spread => r.spread,
        }
    }
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"];

/// Multi-line chart of one quantity across series. Non-finite points break the line.
pub fn to_svg(title: &str, series: &[SurvivalSeries], quantity: Quantity) -> String {
    let (w, h) = (720.0, 440.0);
    let (left, right, top, bottom) = (70.0, 190.0, 40.0, 50.0);
    let (pw, ph) = (w - left - right, h - top - bottom);

    let points = || series.iter().flat_map(|s| s.rows.iter().map(move |r| (r.t, quantity.pick(r))));
    let finite: Vec<(f64, f64)> = points().filter(|p| p.1.is_finite()).collect();
    let (mut x0, mut x1) = bounds(points().map(|p| p.0));
    let (mut y0, mut y1) = bounds(finite.iter().map(|p| p.1));
    if quantity == Quantity::Survival {
        y0 = y0.min(0.0);
        y1 = y1.max(1.0);
    } else {
        y0 = y0.min(0.0);
    }
    if !(x1 > x0) {
        x1 = x0 + 1.0;
    }
    if !(y1 > y0) {
        y1 = y0 + 1.0;
    }
    x0 = x0.min(0.0);
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + ph - (y - y0) / (y1 - y0) * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, left + pw / 2.0, escape(title));
    let _ = writeln!(
        svg,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for k in 0..=5 {
        let f = k as f64 / 5.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            sx(xv),
            top + ph + 18.0,
            tick(xv)
        );
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, left - 6.0, sy(yv) + 4.0, tick(yv));
        let _ = writeln!(
            svg,
            r##"<line x1="{left}" x2="{:.1}" y1="{:.1}" y2="{:.1}" stroke="#ddd"/>"##,
            left + pw,
            sy(yv),
            sy(yv)
        );
    }
    let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">t</text>"#, left + pw / 2.0, h - 12.0);
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        quantity.axis_label()
    );

    for (i, s) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let mut runs: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
        for r in &s.rows {
            let y = quantity.pick(r);
            if y.is_finite() {
                runs.last_mut().unwrap().push((sx(r.t), sy(y)));
            } else if !runs.last().unwrap().is_empty() {
                runs.push(Vec::new());
            }
        }
        for run in runs.iter().filter(|r| !r.is_empty()) {
            let pts: Vec<String> = run.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
                pts.join(" ")
            );
        }
        let ly = top + 14.0 + 18.0 * i as f64;
        let lx = left + pw + 14.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" x2="{}" y1="{ly}" y2="{ly}" stroke="{colour}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(svg, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&s.label()));
    }
    svg.push_str("</svg>\n");
    svg
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.1e}")
    } else {
        format!("{:.3}", v).trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
