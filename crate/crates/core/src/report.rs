//! Slope fitting and the CSV/SVG emitters shared by every experiment.

use std::fmt::Write as _;
use std::path::Path;

use crate::{Error, Result};

/// Least-squares line through `(ln x, ln y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
}

/// Fit `ln y = slope · ln x + intercept`; needs at least 3 points, all positive.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Result<SlopeFit> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!("{} x values, {} y values", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::InsufficientData(format!("{} points, need at least 3", x.len())));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InsufficientData("log-log fit needs positive finite values".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all x values coincide".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (lx
        .iter()
        .zip(&ly)
        .map(|(a, b)| (b - slope * a - intercept).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(SlopeFit {
        slope,
        intercept,
        residual,
    })
}

/// Which columns to draw and how.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlotSpec {
    pub x: String,
    pub ys: Vec<String>,
    pub log_x: bool,
    pub log_y: bool,
    pub x_label: String,
    pub y_label: String,
}

/// A table of results plus the metadata written into output headers.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepReport {
    pub title: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// `(label, checksum)` of every mesh used.
    pub meshes: Vec<(String, String)>,
    pub notes: Vec<String>,
    pub slopes: Vec<(String, f64)>,
    pub plot: PlotSpec,
}

impl SweepReport {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }
}

/// Comment lines written at the top of every output file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OutputHeader {
    pub tool: String,
    /// Full configuration, one entry per line.
    pub config: String,
}

impl OutputHeader {
    pub fn new(config: impl Into<String>) -> Self {
        OutputHeader {
            tool: format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")),
            config: config.into(),
        }
    }
}

fn header_lines(report: &SweepReport, header: &OutputHeader, prefix: &str, suffix: &str) -> String {
    let mut s = String::new();
    let mut line = |text: &str| {
        let _ = writeln!(s, "{prefix}{text}{suffix}");
    };
    line(&format!("tool: {}", header.tool));
    line(&format!("title: {}", report.title));
    for c in header.config.lines() {
        line(&format!("config: {c}"));
    }
    for (label, sum) in &report.meshes {
        line(&format!("mesh: {label} {sum}"));
    }
    for n in &report.notes {
        line(&format!("note: {n}"));
    }
    for (name, v) in &report.slopes {
        line(&format!("slope: {name} {v:.16e}"));
    }
    s
}

/// CSV text: `#` comment header, one header row, values with 17 significant
/// digits.
pub fn csv_string(report: &SweepReport, header: &OutputHeader) -> String {
    let mut s = header_lines(report, header, "# ", "");
    let _ = writeln!(s, "{}", report.columns.join(","));
    for row in &report.rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        let _ = writeln!(s, "{}", cells.join(","));
    }
    s
}

pub fn emit_csv(report: &SweepReport, header: &OutputHeader, path: &Path) -> Result<()> {
    std::fs::write(path, csv_string(report, header)).map_err(|e| Error::io(path, e))
}

/// Parse CSV text produced by [`csv_string`] back into columns and rows.
pub fn parse_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    let columns: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::InvalidParameter("CSV has no header row".into()))?
        .split(',')
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for l in lines {
        let row = l
            .split(',')
            .map(|c| {
                c.parse::<f64>()
                    .map_err(|e| Error::InvalidParameter(format!("bad CSV value {c:?}: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != columns.len() {
            return Err(Error::InvalidParameter(format!(
                "CSV row has {} values, header has {}",
                row.len(),
                columns.len()
            )));
        }
        rows.push(row);
    }
    Ok((columns, rows))
}

fn svg_num(v: f64) -> String {
    format!("{v:.2}")
}

fn tick_label(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.4}")
    }
}

/// SVG line chart of the report's plot columns, or `None` when there is
/// nothing to draw.
pub fn svg_string(report: &SweepReport, header: &OutputHeader) -> Result<Option<String>> {
    let plot = &report.plot;
    if report.rows.is_empty() || plot.ys.is_empty() {
        return Ok(None);
    }
    let xs = report
        .column(&plot.x)
        .ok_or_else(|| Error::InvalidParameter(format!("unknown plot column {}", plot.x)))?;
    let mut series = Vec::new();
    for y in &plot.ys {
        let ys = report
            .column(y)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown plot column {y}")))?;
        series.push((y.clone(), ys));
    }
    let tx = |v: f64| if plot.log_x { v.log10() } else { v };
    let ty = |v: f64| if plot.log_y { v.log10() } else { v };
    let usable = |v: f64, log: bool| v.is_finite() && (!log || v > 0.0);
    let mut pts: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for (name, ys) in &series {
        let p: Vec<(f64, f64)> = xs
            .iter()
            .zip(ys)
            .filter(|(x, y)| usable(**x, plot.log_x) && usable(**y, plot.log_y))
            .map(|(x, y)| (tx(*x), ty(*y)))
            .collect();
        pts.push((name.clone(), p));
    }
    let all: Vec<(f64, f64)> = pts.iter().flat_map(|(_, p)| p.iter().copied()).collect();
    if all.is_empty() {
        return Ok(None);
    }
    let span = |vals: Vec<f64>| {
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, hi + 0.5)
        }
    };
    let (x0, x1) = span(all.iter().map(|p| p.0).collect());
    let (y0, y1) = span(all.iter().map(|p| p.1).collect());
    let (w, h, ml, mr, mt, mb) = (640.0, 420.0, 80.0, 150.0, 40.0, 60.0);
    let sx = |x: f64| ml + (x - x0) / (x1 - x0) * (w - ml - mr);
    let sy = |y: f64| h - mb - (y - y0) / (y1 - y0) * (h - mt - mb);
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    s.push_str(&header_lines(report, header, "<!-- ", " -->"));
    let _ = writeln!(s, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>");
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"20\" text-anchor=\"middle\">{}</text>",
        svg_num(w / 2.0),
        escape(&report.title)
    );
    let _ = writeln!(
        s,
        "<polyline fill=\"none\" stroke=\"black\" points=\"{},{} {},{} {},{}\"/>",
        svg_num(ml),
        svg_num(mt),
        svg_num(ml),
        svg_num(h - mb),
        svg_num(w - mr),
        svg_num(h - mb)
    );
    let inv_x = |v: f64| if plot.log_x { 10f64.powf(v) } else { v };
    let inv_y = |v: f64| if plot.log_y { 10f64.powf(v) } else { v };
    for (v, anchor) in [(x0, "start"), (x1, "end")] {
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"{anchor}\">{}</text>",
            svg_num(sx(v)),
            svg_num(h - mb + 16.0),
            tick_label(inv_x(v))
        );
    }
    for v in [y0, y1] {
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>",
            svg_num(ml - 4.0),
            svg_num(sy(v) + 4.0),
            tick_label(inv_y(v))
        );
    }
    let log_tag = |log: bool| if log { " (log)" } else { "" };
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}{}</text>",
        svg_num(ml + (w - ml - mr) / 2.0),
        svg_num(h - 20.0),
        escape(&plot.x_label),
        log_tag(plot.log_x)
    );
    let _ = writeln!(
        s,
        "<text x=\"20\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 20 {})\">{}{}</text>",
        svg_num(h / 2.0),
        svg_num(h / 2.0),
        escape(&plot.y_label),
        log_tag(plot.log_y)
    );
    for (i, (name, p)) in pts.iter().enumerate() {
        let color = colors[i % colors.len()];
        let coords: Vec<String> = p.iter().map(|(x, y)| format!("{},{}", svg_num(sx(*x)), svg_num(sy(*y)))).collect();
        let _ = writeln!(
            s,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
            coords.join(" ")
        );
        for (x, y) in p {
            let _ = writeln!(
                s,
                "<circle cx=\"{}\" cy=\"{}\" r=\"2.5\" fill=\"{color}\"/>",
                svg_num(sx(*x)),
                svg_num(sy(*y))
            );
        }
        let ly = mt + 16.0 * i as f64;
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{}</text>",
            svg_num(w - mr + 10.0),
            svg_num(ly + 4.0),
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    Ok(Some(s))
}

/// Write the SVG chart; returns whether a file was written.
pub fn emit_svg(report: &SweepReport, header: &OutputHeader, path: &Path) -> Result<bool> {
    match svg_string(report, header)? {
        Some(text) => {
            std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
            Ok(true)
        }
        None => Ok(false),
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_laws() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let fit = fit_slope(&x, &x.map(|v| v * v)).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-14 && fit.residual < 1e-14);
        let fit = fit_slope(&x, &[3.0; 4]).unwrap();
        assert!(fit.slope.abs() < 1e-14);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn fit_rejects_bad_input() {
        assert!(matches!(fit_slope(&[1.0, 2.0], &[1.0, 2.0]), Err(Error::InsufficientData(_))));
        assert!(matches!(
            fit_slope(&[1.0, 2.0, 3.0], &[1.0, -2.0, 3.0]),
            Err(Error::InsufficientData(_))
        ));
    }

    fn sample() -> SweepReport {
        SweepReport {
            title: "sample".into(),
            columns: vec!["beta".into(), "value".into()],
            rows: vec![vec![1.0, 1.0 / 3.0], vec![10.0, std::f64::consts::PI]],
            meshes: vec![("grid".into(), "0123456789abcdef".into())],
            notes: vec!["a note".into()],
            slopes: vec![("value".into(), 0.5)],
            plot: PlotSpec {
                x: "beta".into(),
                ys: vec!["value".into()],
                log_x: true,
                log_y: true,
                x_label: "beta".into(),
                y_label: "value".into(),
            },
        }
    }

    #[test]
    fn csv_round_trip_keeps_values() {
        let r = sample();
        let text = csv_string(&r, &OutputHeader::new("beta = 1"));
        assert!(text.starts_with("# tool: steklov-lab"));
        assert!(text.contains("# config: beta = 1"));
        assert!(text.contains("# mesh: grid 0123456789abcdef"));
        let (cols, rows) = parse_csv(&text).unwrap();
        assert_eq!(cols, r.columns);
        assert_eq!(rows, r.rows);
    }

    #[test]
    fn empty_report_has_header_only_and_no_chart() {
        let mut r = sample();
        r.rows.clear();
        let text = csv_string(&r, &OutputHeader::new(""));
        assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 1);
        assert!(svg_string(&r, &OutputHeader::new("")).unwrap().is_none());
    }

    #[test]
    fn chart_has_one_polyline_per_series() {
        let s = svg_string(&sample(), &OutputHeader::new("x")).unwrap().unwrap();
        assert_eq!(s.matches("<polyline").count(), 2);
        assert!(s.contains("(log)"));
    }
}
