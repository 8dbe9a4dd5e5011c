//! Tables and plots from sweep results.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::metrics::MetricId;
use crate::resample::SamplerKind;
use crate::sweep::{min_budget_table, MinBudgetRow, SweepError, SweepResult};

pub const SWEEP_CSV: &str = "sweep.csv";
pub const MIN_BUDGET_MD: &str = "min_budget.md";
pub const DEFAULT_ALPHA: f64 = 0.05;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 70.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no sweep rows match {0}")]
    NoMatchingRows(String),
    #[error("invalid selector: {0}")]
    InvalidSelector(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Sweep(#[from] SweepError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    PValue,
    Delta,
}

impl std::str::FromStr for PlotKind {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pvalue" | "p" | "p_value" => Ok(PlotKind::PValue),
            "delta" => Ok(PlotKind::Delta),
            _ => Err(ReportError::InvalidSelector(format!("unknown plot kind {s:?}"))),
        }
    }
}

/// Which (sampler, ε, metric) slice of a sweep to plot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub sampler: SamplerKind,
    pub epsilon: f64,
    pub metric: MetricId,
}

impl std::fmt::Display for Selection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "sampler={},epsilon={},metric={}", self.sampler, self.epsilon, self.metric)
    }
}

impl std::str::FromStr for Selection {
    type Err = ReportError;

    /// Parses `sampler=s2,epsilon=0.3,metric=accuracy`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |m: String| ReportError::InvalidSelector(m);
        let (mut sampler, mut epsilon, mut metric) = (None, None, None);
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value, got {part:?}")))?;
            match k.trim() {
                "sampler" => sampler = Some(v.trim().parse().map_err(bad)?),
                "epsilon" | "eps" => {
                    epsilon = Some(
                        v.trim()
                            .parse::<f64>()
                            .map_err(|_| bad(format!("bad epsilon {v:?}")))?,
                    )
                }
                "metric" => metric = Some(v.trim().parse().map_err(bad)?),
                other => return Err(bad(format!("unknown key {other:?}"))),
            }
        }
        match (sampler, epsilon, metric) {
            (Some(sampler), Some(epsilon), Some(metric)) => Ok(Selection {
                sampler,
                epsilon,
                metric,
            }),
            _ => Err(bad("sampler, epsilon and metric are all required".into())),
        }
    }
}

/// One curve: a fixed K across budgets.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSeries {
    pub k: usize,
    pub points: Vec<(usize, f64)>,
}

pub fn curves(r: &SweepResult, sel: &Selection, kind: PlotKind) -> Result<Vec<CurveSeries>, ReportError> {
    let mut by_k: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
    for row in r.select(sel.sampler, sel.epsilon, sel.metric) {
        let y = match kind {
            PlotKind::PValue => row.p_value,
            PlotKind::Delta => row.delta,
        };
        by_k.entry(row.k).or_default().push((row.budget, y));
    }
    if by_k.is_empty() {
        return Err(ReportError::NoMatchingRows(sel.to_string()));
    }
    Ok(by_k
        .into_iter()
        .map(|(k, mut points)| {
            points.sort_by_key(|p| p.0);
            CurveSeries { k, points }
        })
        .collect())
}

fn fmt_num(x: f64) -> String {
    let s = format!("{x:.2}");
    s.strip_suffix(".00").map(str::to_string).unwrap_or(s)
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders a log-x line chart of p-value or Δ against budget, one curve per K.
pub fn render_plot(r: &SweepResult, sel: &Selection, kind: PlotKind) -> Result<String, ReportError> {
    let series = curves(r, sel, kind)?;
    let budgets: Vec<usize> = {
        let mut b: Vec<usize> = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect();
        b.sort_unstable();
        b.dedup();
        b
    };
    let (mut lo, mut hi) = (
        (budgets[0] as f64).log10(),
        (*budgets.last().unwrap() as f64).log10(),
    );
    if hi - lo < 1e-9 {
        lo -= 0.5;
        hi += 0.5;
    }
    let y_max = match kind {
        PlotKind::PValue => 1.0,
        PlotKind::Delta => {
            let m = series
                .iter()
                .flat_map(|s| s.points.iter().map(|p| p.1))
                .filter(|y| y.is_finite())
                .fold(0.0, f64::max);
            if m > 0.0 { m * 1.05 } else { 1.0 }
        }
    };
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let x = |b: usize| LEFT + ((b as f64).log10() - lo) / (hi - lo) * pw;
    let y = |v: f64| TOP + ph - (v.clamp(0.0, y_max) / y_max) * ph;

    let y_label = match kind {
        PlotKind::PValue => "p-value",
        PlotKind::Delta => "effect size",
    };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="25" text-anchor="middle" font-size="15">{} {} (sampler {}, epsilon {})</text>"#,
        LEFT + pw / 2.0,
        esc(sel.metric.display_name()),
        y_label,
        sel.sampler,
        fmt_num(sel.epsilon)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for &b in &budgets {
        let xb = x(b);
        let _ = writeln!(
            s,
            r#"<line x1="{xb:.2}" y1="{}" x2="{xb:.2}" y2="{}" stroke="black"/><text x="{xb:.2}" y="{}" text-anchor="middle">{b}</text>"#,
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 20.0
        );
    }
    for i in 0..=5 {
        let v = y_max * i as f64 / 5.0;
        let yv = y(v);
        let _ = writeln!(
            s,
            r##"<line x1="{}" y1="{yv:.2}" x2="{LEFT}" y2="{yv:.2}" stroke="black"/><line x1="{LEFT}" y1="{yv:.2}" x2="{}" y2="{yv:.2}" stroke="#dddddd"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
            LEFT - 5.0,
            LEFT + pw,
            LEFT - 8.0,
            yv + 4.0,
            fmt_num(v)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">budget (N x K, log scale)</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 25.0
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{0}" text-anchor="middle" transform="rotate(-90 20 {0})">{1}</text>"#,
        TOP + ph / 2.0,
        y_label
    );
    if kind == PlotKind::PValue {
        let yr = y(DEFAULT_ALPHA);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{yr:.2}" x2="{}" y2="{yr:.2}" stroke="#555555" stroke-dasharray="6 4"/>"##,
            LEFT + pw
        );
    }
    for (i, c) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = c
            .points
            .iter()
            .map(|&(b, v)| format!("{:.2},{:.2}", x(b), y(v)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            pts.join(" ")
        );
        for &(b, v) in &c.points {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                x(b),
                y(v)
            );
        }
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = LEFT + pw + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">K = {}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            c.k
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_plot(r: &SweepResult, sel: &Selection, kind: PlotKind, out: &Path) -> Result<(), ReportError> {
    let svg = render_plot(r, sel, kind)?;
    std::fs::write(out, svg)?;
    Ok(())
}

/// One markdown table per (sampler, ε) with metrics as columns and
/// NK, p-value, K and Δ as rows. Unreached budgets render as `-`.
pub fn render_min_budget_markdown(rows: &[MinBudgetRow], alpha: f64) -> String {
    let mut groups: BTreeMap<(SamplerKind, u64), Vec<&MinBudgetRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.sampler, r.epsilon.to_bits())).or_default().push(r);
    }
    let mut s = format!("# Minimum budget for p < {alpha}\n");
    for ((sampler, eps_bits), mut cols) in groups {
        cols.sort_by_key(|r| r.metric);
        let _ = write!(
            s,
            "\n## sampler {sampler}, epsilon {}\n\n|  |",
            f64::from_bits(eps_bits)
        );
        for c in &cols {
            let _ = write!(s, " {} |", c.metric.display_name());
        }
        s.push_str("\n|---|");
        for _ in &cols {
            s.push_str("---|");
        }
        s.push('\n');
        let line = |s: &mut String, name: &str, f: &dyn Fn(&MinBudgetRow) -> String| {
            let _ = write!(s, "| {name} |");
            for c in &cols {
                let _ = write!(s, " {} |", f(c));
            }
            s.push('\n');
        };
        let or_dash = |r: &MinBudgetRow, f: &dyn Fn(&crate::sweep::MinBudgetHit) -> String| {
            r.hit.as_ref().map(f).unwrap_or_else(|| "-".into())
        };
        line(&mut s, "NK", &|r| or_dash(r, &|h| h.budget.to_string()));
        line(&mut s, "p-value", &|r| or_dash(r, &|h| format!("{:.3}", h.p_value)));
        line(&mut s, "K", &|r| or_dash(r, &|h| h.k.to_string()));
        line(&mut s, "Δ", &|r| or_dash(r, &|h| format!("{:.3}", h.delta)));
    }
    s
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TablePaths {
    pub sweep_csv: PathBuf,
    pub min_budget_md: PathBuf,
}

/// Writes `sweep.csv` and `min_budget.md` into `dir`.
pub fn write_tables(r: &SweepResult, dir: &Path, alpha: f64) -> Result<TablePaths, ReportError> {
    std::fs::create_dir_all(dir)?;
    let sweep_csv = dir.join(SWEEP_CSV);
    let min_budget_md = dir.join(MIN_BUDGET_MD);
    let f = std::fs::File::create(&sweep_csv)?;
    r.write_csv(std::io::BufWriter::new(f))?;
    std::fs::write(&min_budget_md, render_min_budget_markdown(&min_budget_table(r, alpha), alpha))?;
    Ok(TablePaths {
        sweep_csv,
        min_budget_md,
    })
}
