//! Log-scale wealth plots and comparison tables, built from stored
//! backtest records only.

use std::fmt::Write as _;

use chrono::DateTime;
use eiie::backtest::BacktestRecord;
use eiie::metrics::PerformanceReport;
use eiie::{Error, Result};

pub const COLUMNS: [&str; 9] = [
    "MDD", "fAPV", "SR", "\u{2212}Days", "\u{2212}Periods", "\u{2212}Weeks", "+Days", "+Periods", "+Weeks",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Raw,
    Csv,
    Html,
    Latex,
}

impl std::str::FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(Self::Raw),
            "csv" => Ok(Self::Csv),
            "html" => Ok(Self::Html),
            "latex" => Ok(Self::Latex),
            other => Err(Error::Config(format!("unsupported table format `{other}` (raw, csv, html, latex)"))),
        }
    }
}

/// One table row; `None` marks an algorithm that is not implemented.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub label: String,
    pub report: Option<PerformanceReport>,
}

/// `1234567` as `1,234,567`.
pub fn thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

fn cells(report: &Option<PerformanceReport>) -> Vec<String> {
    let Some(r) = report else {
        return vec!["not implemented".to_string(); COLUMNS.len()];
    };
    vec![
        format!("{:.3}", r.mdd),
        format!("{:.3}", r.fapv),
        r.sharpe.map_or_else(|| "n/a".to_string(), |s| format!("{s:.3}")),
        thousands(r.neg_days),
        thousands(r.neg_periods),
        thousands(r.neg_weeks),
        thousands(r.pos_days),
        thousands(r.pos_periods),
        thousands(r.pos_weeks),
    ]
}

fn latex_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '\\' => out.push_str("\\textbackslash{}"),
            '&' | '%' | '$' | '#' | '_' | '{' | '}' => {
                out.push('\\');
                out.push(ch);
            }
            '~' => out.push_str("\\textasciitilde{}"),
            '^' => out.push_str("\\textasciicircum{}"),
            '\u{2212}' => out.push_str("$-$"),
            _ => out.push(ch),
        }
    }
    out
}

fn html_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn emit_table(rows: &[TableRow], format: TableFormat) -> Result<String> {
    let header: Vec<String> = std::iter::once("algorithm".to_string())
        .chain(COLUMNS.iter().map(|c| c.to_string()))
        .collect();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| std::iter::once(r.label.clone()).chain(cells(&r.report)).collect())
        .collect();
    let mut out = String::new();
    match format {
        TableFormat::Raw => {
            let widths: Vec<usize> = (0..header.len())
                .map(|j| {
                    std::iter::once(&header)
                        .chain(&body)
                        .map(|row| row[j].chars().count())
                        .max()
                        .unwrap_or(0)
                })
                .collect();
            for row in std::iter::once(&header).chain(&body) {
                let line: Vec<String> = row
                    .iter()
                    .zip(&widths)
                    .enumerate()
                    .map(|(j, (cell, w))| {
                        let pad = w - cell.chars().count();
                        if j == 0 {
                            format!("{cell}{}", " ".repeat(pad))
                        } else {
                            format!("{}{cell}", " ".repeat(pad))
                        }
                    })
                    .collect();
                out.push_str(line.join("  ").trim_end());
                out.push('\n');
            }
        }
        TableFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&header)?;
            for row in &body {
                w.write_record(row)?;
            }
            out = String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?)
                .expect("csv output is utf-8");
        }
        TableFormat::Html => {
            out.push_str("<table>\n<thead>\n<tr>");
            for h in &header {
                let _ = write!(out, "<th>{}</th>", html_escape(h));
            }
            out.push_str("</tr>\n</thead>\n<tbody>\n");
            for row in &body {
                out.push_str("<tr>");
                for c in row {
                    let _ = write!(out, "<td>{}</td>", html_escape(c));
                }
                out.push_str("</tr>\n");
            }
            out.push_str("</tbody>\n</table>\n");
        }
        TableFormat::Latex => {
            let _ = writeln!(out, "\\begin{{tabular}}{{l{}}}", "r".repeat(COLUMNS.len()));
            out.push_str("\\hline\n");
            let line = |cells: &[String]| cells.iter().map(|c| latex_escape(c)).collect::<Vec<_>>().join(" & ") + " \\\\\n";
            out.push_str(&line(&header));
            out.push_str("\\hline\n");
            for row in &body {
                out.push_str(&line(row));
            }
            out.push_str("\\hline\n\\end{tabular}\n");
        }
    }
    Ok(out)
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 50.0;

/// Wealth path of one series: `p₀ = 1` one period before the first record,
/// then the record values.
fn path_points(records: &[BacktestRecord]) -> Vec<(i64, f64)> {
    let step = match records {
        [a, b, ..] => b.timestamp - a.timestamp,
        _ => 0,
    };
    std::iter::once((records[0].timestamp - step, 1.0))
        .chain(records.iter().map(|r| (r.timestamp, r.p)))
        .collect()
}

/// SVG of accumulated wealth on a log scale, one line and legend entry per
/// series in the given order. Output bytes depend only on the input.
pub fn emit_plot(series: &[(String, Vec<BacktestRecord>)]) -> Result<String> {
    if series.is_empty() {
        return Err(Error::Validation("plot needs at least one series".into()));
    }
    if let Some((label, _)) = series.iter().find(|(_, r)| r.is_empty()) {
        return Err(Error::Validation(format!("series `{label}` has no records")));
    }
    let paths: Vec<Vec<(i64, f64)>> = series.iter().map(|(_, r)| path_points(r)).collect();
    let all = paths.iter().flatten();
    let (mut t0, mut t1) = (i64::MAX, i64::MIN);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(t, p) in all {
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::Validation(format!("portfolio value {p} cannot go on a log scale")));
        }
        t0 = t0.min(t);
        t1 = t1.max(t);
        lo = lo.min(p.log10());
        hi = hi.max(p.log10());
    }
    if hi - lo < 1e-3 {
        lo -= 0.05;
        hi += 0.05;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let span = (t1 - t0).max(1) as f64;
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let x = |t: i64| LEFT + (t - t0) as f64 / span * plot_w;
    let y = |p: f64| TOP + (hi - p.log10()) / (hi - lo) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let v = 10f64.powf(lo + (hi - lo) * k as f64 / 4.0);
        let yy = y(v);
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{yy:.2}" x2="{:.2}" y2="{yy:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{v:.3}</text>"##,
            LEFT + plot_w,
            LEFT - 6.0,
            yy + 4.0
        );
        let t = t0 + ((t1 - t0) as f64 * k as f64 / 4.0).round() as i64;
        let label = DateTime::from_timestamp(t, 0).map_or_else(|| t.to_string(), |d| d.format("%Y-%m-%d").to_string());
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{label}</text>"#,
            x(t),
            TOP + plot_h + 18.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">time</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 8.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">accumulated wealth (log scale)</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );
    for (i, ((label, _), pts)) in series.iter().zip(&paths).enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = pts.iter().map(|&(t, p)| format!("{:.2},{:.2}", x(t), y(p))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            coords.join(" ")
        );
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = WIDTH - RIGHT + 12.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 24.0,
            lx + 30.0,
            ly + 4.0,
            html_escape(label)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
