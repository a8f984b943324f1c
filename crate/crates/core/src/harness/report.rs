use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{CorruptionSpec, SweepConfig};
use super::curve::{auec, strengths, NUM_STRENGTHS};
use super::sweep::CellResult;
use crate::error::{Error, Result};

pub const REPORT_VERSION: &str = "goldcorrect-report/1";

/// Gap marker for missing values in text and CSV output.
pub const GAP: &str = "--";

/// Seed-aggregated error curve of one method at one trusted fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub method: String,
    pub fraction: f64,
    /// Per-strength mean, min and max over the seeds that have the point.
    pub mean: Vec<Option<f64>>,
    pub min: Vec<Option<f64>>,
    pub max: Vec<Option<f64>>,
    /// AUEC of each seed's curve (aligned with the report's seeds), when complete.
    pub seed_auec: Vec<Option<f64>>,
    /// Statistics over the seeds with complete curves.
    pub auec_mean: Option<f64>,
    pub auec_min: Option<f64>,
    pub auec_max: Option<f64>,
    pub complete_seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub version: String,
    pub dataset: String,
    pub corruption: CorruptionSpec,
    pub strengths: Vec<f64>,
    pub fractions: Vec<f64>,
    pub methods: Vec<String>,
    pub seeds: Vec<u64>,
    pub curves: Vec<CurveSummary>,
    pub cells: Vec<CellResult>,
    pub computed_cells: usize,
    pub reused_cells: usize,
    pub failed_cells: usize,
}

fn stats(values: impl Iterator<Item = f64>) -> Option<(f64, f64, f64)> {
    let v: Vec<f64> = values.collect();
    if v.is_empty() {
        return None;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Some((mean, min, max))
}

impl SweepReport {
    /// Aggregates cells into curves, in config order.
    pub fn from_cells(config: &SweepConfig, dataset: String, cells: Vec<CellResult>) -> Result<Self> {
        let methods: Vec<String> = config.methods.iter().map(|m| m.label()).collect();
        let mut curves = Vec::new();
        for &fraction in &config.fractions {
            for method in &methods {
                let value = |seed: u64, s: usize| {
                    cells
                        .iter()
                        .find(|c| &c.label == method && c.fraction == fraction && c.seed == seed && c.strength_index == s)
                        .and_then(|c| c.test_error)
                };
                let mut mean = Vec::with_capacity(NUM_STRENGTHS);
                let mut min = Vec::with_capacity(NUM_STRENGTHS);
                let mut max = Vec::with_capacity(NUM_STRENGTHS);
                for s in 0..NUM_STRENGTHS {
                    let st = stats(config.seeds.iter().filter_map(|&seed| value(seed, s)));
                    mean.push(st.map(|t| t.0));
                    min.push(st.map(|t| t.1));
                    max.push(st.map(|t| t.2));
                }
                let seed_auec: Vec<Option<f64>> = config
                    .seeds
                    .iter()
                    .map(|&seed| {
                        let curve: Option<Vec<f64>> = (0..NUM_STRENGTHS).map(|s| value(seed, s)).collect();
                        curve.map(|c| auec(&c)).transpose()
                    })
                    .collect::<Result<_>>()?;
                let a = stats(seed_auec.iter().flatten().copied());
                curves.push(CurveSummary {
                    method: method.clone(),
                    fraction,
                    mean,
                    min,
                    max,
                    complete_seeds: seed_auec.iter().flatten().count(),
                    seed_auec,
                    auec_mean: a.map(|t| t.0),
                    auec_min: a.map(|t| t.1),
                    auec_max: a.map(|t| t.2),
                });
            }
        }
        let failed = cells.iter().filter(|c| c.error.is_some()).count();
        Ok(SweepReport {
            version: REPORT_VERSION.to_string(),
            dataset,
            corruption: config.corruption.clone(),
            strengths: strengths().to_vec(),
            fractions: config.fractions.clone(),
            methods,
            seeds: config.seeds.clone(),
            curves,
            computed_cells: cells.len(),
            reused_cells: 0,
            failed_cells: failed,
            cells,
        })
    }

    pub fn curve(&self, method: &str, fraction: f64) -> Option<&CurveSummary> {
        self.curves.iter().find(|c| c.method == method && c.fraction == fraction)
    }

    /// Mean AUEC of a method at a fraction, if any seed's curve is complete.
    pub fn auec(&self, method: &str, fraction: f64) -> Option<f64> {
        self.curve(method, fraction).and_then(|c| c.auec_mean)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn from_json_value(value: serde_json::Value) -> Result<Self> {
        match value.get("version").and_then(|v| v.as_str()) {
            Some(REPORT_VERSION) => Ok(serde_json::from_value(value)?),
            Some(other) => Err(Error::invalid(format!("unsupported report version {other:?}; expected {REPORT_VERSION:?}"))),
            None => Err(Error::invalid("report has no version field")),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }

    /// Reads a report, or an array of reports as written by [`render_reports`].
    pub fn load_all(path: &Path) -> Result<Vec<Self>> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::format(path, format!("line {}", e.line()), e.to_string()))?;
        let wrap = |e: Error| Error::format(path, "report", e.to_string());
        match value {
            serde_json::Value::Array(items) => items.into_iter().map(|v| Self::from_json_value(v).map_err(wrap)).collect(),
            v => Ok(vec![Self::from_json_value(v).map_err(wrap)?]),
        }
    }
}

/// Rendered artifacts of one or more reports.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedReport {
    pub table: String,
    pub csv: String,
    pub json: String,
    /// `(file name, svg text)` per dataset, corruption and fraction.
    pub plots: Vec<(String, String)>,
}

impl RenderedReport {
    /// Writes `report.txt`, `report.csv`, `report.json` and `plots/*.svg`.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let plots = dir.join("plots");
        fs::create_dir_all(&plots).map_err(|e| Error::io(&plots, e))?;
        let mut written = Vec::new();
        for (name, text) in [("report.txt", &self.table), ("report.csv", &self.csv), ("report.json", &self.json)] {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
            written.push(p);
        }
        for (name, svg) in &self.plots {
            let p = plots.join(name);
            fs::write(&p, svg).map_err(|e| Error::io(&p, e))?;
            written.push(p);
        }
        Ok(written)
    }
}

pub fn render_report(report: &SweepReport) -> Result<RenderedReport> {
    render_reports(std::slice::from_ref(report))
}

fn percent(fraction: f64) -> String {
    format!("{}%", (fraction * 1e6).round() / 1e4)
}

fn fmt_auec(curve: Option<&CurveSummary>, seeds: usize, bold: bool) -> String {
    match curve.and_then(|c| c.auec_mean.map(|a| (a, c.complete_seeds))) {
        None => GAP.to_string(),
        Some((a, complete)) => {
            let mut s = format!("{a:.1}");
            if bold {
                s = format!("**{s}**");
            }
            if complete < seeds {
                s.push('*');
            }
            s
        }
    }
}

fn best_index(values: &[Option<f64>]) -> Option<usize> {
    values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (i, v)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
}

/// Renders a table with one row per (corruption, fraction), one column per
/// method, AUEC cells with the lowest in each row in `**bold**`, and a final
/// row of column means; plus CSV, JSON and SVG error-curve plots.
pub fn render_reports(reports: &[SweepReport]) -> Result<RenderedReport> {
    if reports.is_empty() || reports.iter().all(|r| r.curves.is_empty()) {
        return Err(Error::invalid("nothing to render: the report has no curves"));
    }
    let mut methods: Vec<String> = Vec::new();
    for r in reports {
        for m in &r.methods {
            if !methods.contains(m) {
                methods.push(m.clone());
            }
        }
    }

    // table
    let mut rows: Vec<Vec<String>> = vec![std::iter::once("setting".to_string()).chain(methods.iter().cloned()).collect()];
    let mut column_values: Vec<Vec<f64>> = vec![Vec::new(); methods.len()];
    let mut gaps = false;
    let mut partial = false;
    for r in reports {
        for &f in &r.fractions {
            let curves: Vec<Option<&CurveSummary>> = methods.iter().map(|m| r.curve(m, f)).collect();
            let values: Vec<Option<f64>> = curves.iter().map(|c| c.and_then(|c| c.auec_mean)).collect();
            let best = best_index(&values);
            let mut row = vec![format!("{} {}", r.corruption.name(), percent(f))];
            for (i, c) in curves.iter().enumerate() {
                let cell = fmt_auec(*c, r.seeds.len(), best == Some(i));
                gaps |= cell == GAP;
                partial |= c.is_some_and(|c| c.auec_mean.is_some() && c.complete_seeds < r.seeds.len());
                row.push(cell);
                if let Some(v) = values[i] {
                    column_values[i].push(v);
                }
            }
            rows.push(row);
        }
    }
    let means: Vec<Option<f64>> = column_values
        .iter()
        .map(|v| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64))
        .collect();
    let best = best_index(&means);
    let mut mean_row = vec!["mean".to_string()];
    for (i, m) in means.iter().enumerate() {
        mean_row.push(match m {
            None => GAP.to_string(),
            Some(v) if best == Some(i) => format!("**{v:.1}**"),
            Some(v) => format!("{v:.1}"),
        });
    }
    rows.push(mean_row);
    let widths: Vec<usize> = (0..=methods.len())
        .map(|j| rows.iter().map(|r| r[j].chars().count()).max().unwrap_or(0))
        .collect();
    let mut table = String::new();
    for row in &rows {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(j, c)| if j == 0 { format!("{c:<w$}", w = widths[j]) } else { format!("{c:>w$}", w = widths[j]) })
            .collect();
        writeln!(table, "{}", line.join("  ").trim_end()).unwrap();
    }
    if partial {
        writeln!(table, "* some seeds are missing cells; mean over complete seeds").unwrap();
    }
    if gaps {
        writeln!(table, "{GAP} no seed has a complete curve").unwrap();
    }

    // csv
    let mut csv = String::from("dataset,corruption,fraction,method,auec_mean,auec_min,auec_max,complete_seeds");
    for s in strengths() {
        write!(csv, ",err_{s:.1}").unwrap();
    }
    csv.push('\n');
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    for r in reports {
        for c in &r.curves {
            write!(
                csv,
                "{},{},{},{},{},{},{},{}",
                r.dataset,
                r.corruption.name(),
                c.fraction,
                c.method,
                opt(c.auec_mean),
                opt(c.auec_min),
                opt(c.auec_max),
                c.complete_seeds
            )
            .unwrap();
            for e in &c.mean {
                write!(csv, ",{}", opt(*e)).unwrap();
            }
            csv.push('\n');
        }
    }

    let json = if reports.len() == 1 {
        reports[0].to_json_string()
    } else {
        serde_json::to_string_pretty(reports).expect("reports serialize")
    };

    let mut plots = Vec::new();
    for r in reports {
        for &f in &r.fractions {
            let curves: Vec<&CurveSummary> = r.curves.iter().filter(|c| c.fraction == f).collect();
            let title = format!("{} {} {} trusted", r.dataset, r.corruption.name(), percent(f));
            let name: String = format!("{}_{}_f{f}.svg", r.dataset, r.corruption.name())
                .chars()
                .map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' })
                .collect();
            plots.push((name, svg_plot(&title, &curves)));
        }
    }
    Ok(RenderedReport { table, csv, json, plots })
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Error (percent, 0..100) against strength, one polyline per method. A run
/// of missing points breaks the line and is marked with a cross on the axis.
fn svg_plot(title: &str, curves: &[&CurveSummary]) -> String {
    let (w, h) = (560.0, 360.0);
    let (left, right, top, bottom) = (50.0, 170.0, 30.0, 40.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let x = |s: f64| left + s * pw;
    let y = |e: f64| top + (1.0 - e / 100.0) * ph;
    let mut out = String::new();
    writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#).unwrap();
    writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    writeln!(out, r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{}</text>"#, left + pw / 2.0, escape(title)).unwrap();
    for i in 0..=5 {
        let v = i as f64 * 20.0;
        writeln!(out, r##"<line x1="{left}" y1="{0:.1}" x2="{1:.1}" y2="{0:.1}" stroke="#ddd"/>"##, y(v), left + pw).unwrap();
        writeln!(out, r#"<text x="{}" y="{:.1}" text-anchor="end">{v}</text>"#, left - 6.0, y(v) + 4.0).unwrap();
        let s = i as f64 * 0.2;
        writeln!(out, r#"<text x="{:.1}" y="{}" text-anchor="middle">{s:.1}</text>"#, x(s), top + ph + 16.0).unwrap();
    }
    writeln!(out, r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#).unwrap();
    writeln!(out, r#"<text x="{:.1}" y="{}" text-anchor="middle">corruption strength</text>"#, left + pw / 2.0, h - 6.0).unwrap();
    writeln!(out, r#"<text transform="translate(14 {:.1}) rotate(-90)" text-anchor="middle">test error (%)</text>"#, top + ph / 2.0).unwrap();

    for (ci, c) in curves.iter().enumerate() {
        let color = PALETTE[ci % PALETTE.len()];
        let mut segment: Vec<String> = Vec::new();
        let flush = |segment: &mut Vec<String>, out: &mut String| {
            if !segment.is_empty() {
                writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, segment.join(" ")).unwrap();
                segment.clear();
            }
        };
        for (i, e) in c.mean.iter().enumerate() {
            let s = strengths()[i];
            match e {
                Some(e) => segment.push(format!("{:.2},{:.2}", x(s), y(*e))),
                None => {
                    flush(&mut segment, &mut out);
                    let (cx, cy) = (x(s), top + ph);
                    writeln!(out, r#"<path class="gap" stroke="{color}" d="M{:.1},{:.1} L{:.1},{:.1} M{:.1},{:.1} L{:.1},{:.1}"/>"#, cx - 4.0, cy - 4.0, cx + 4.0, cy + 4.0, cx - 4.0, cy + 4.0, cx + 4.0, cy - 4.0).unwrap();
                }
            }
        }
        flush(&mut segment, &mut out);
        let ly = top + 10.0 + ci as f64 * 16.0;
        writeln!(out, r#"<line x1="{0}" y1="{ly}" x2="{1}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, left + pw + 12.0, left + pw + 32.0).unwrap();
        let label = match c.auec_mean {
            Some(a) => format!("{} ({a:.1})", c.method),
            None => c.method.clone(),
        };
        writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, left + pw + 38.0, ly + 4.0, escape(&label)).unwrap();
    }
    out.push_str("</svg>\n");
    out
}
