//! Aggregation of results files into summaries and charts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use adpo_core::Algorithm;
use plotters::prelude::*;
use serde::Deserialize;

use crate::error::{HarnessError, Result};
use crate::runner::{RESULTS_HEADER, RESULTS_SCHEMA};

pub const METRICS: [&str; 3] = ["max_logit_error", "mean_logit_error", "error_rate"];

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct CsvRow {
    pub algorithm: String,
    pub seed: u64,
    pub budget: usize,
    pub max_logit_error: f64,
    pub mean_logit_error: f64,
    pub error_rate: f64,
    pub fit_converged: bool,
    pub fingerprint: String,
}

impl CsvRow {
    pub fn metric(&self, name: &str) -> f64 {
        match name {
            "max_logit_error" => self.max_logit_error,
            "mean_logit_error" => self.mean_logit_error,
            "error_rate" => self.error_rate,
            _ => f64::NAN,
        }
    }
}

/// Median and interquartile band of one metric over seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub count: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

/// Quantile by linear interpolation between order statistics.
/// `sorted` must be non-empty and ascending.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

impl Band {
    pub fn of(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Self { count: v.len(), median: quantile(&v, 0.5), q25: quantile(&v, 0.25), q75: quantile(&v, 0.75) }
    }
}

/// `(metric, algorithm, budget) -> band`, ordered by algorithm name and
/// budget.
pub type Aggregate = BTreeMap<(String, String, usize), Band>;

pub fn read_results(path: &Path) -> Result<Vec<CsvRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_results(&text, path)
}

pub fn parse_results(text: &str, path: &Path) -> Result<Vec<CsvRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(RESULTS_SCHEMA) {
        return Err(HarnessError::parse(path, 1, format!("expected `{RESULTS_SCHEMA}`")));
    }
    if lines.next() != Some(RESULTS_HEADER) {
        return Err(HarnessError::parse(path, 2, "unexpected column header"));
    }
    // the schema line is not CSV; positions below are offset by it
    let body = &text[text.find('\n').map_or(text.len(), |i| i + 1)..];
    let mut reader = csv::ReaderBuilder::new().from_reader(body.as_bytes());
    let headers = reader.headers().map_err(|e| HarnessError::parse(path, 2, e))?.clone();
    let mut rows = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let fallback = k + 3;
        let record = record.map_err(|e| {
            let line = e.position().map_or(fallback, |p| p.line() as usize + 1);
            HarnessError::parse(path, line, e)
        })?;
        let line = record.position().map_or(fallback, |p| p.line() as usize + 1);
        let row: CsvRow = record
            .deserialize(Some(&headers))
            .map_err(|e| HarnessError::parse(path, line, e))?;
        if row.algorithm.parse::<Algorithm>().is_err() {
            return Err(HarnessError::parse(path, line, format!("unknown algorithm `{}`", row.algorithm)));
        }
        if METRICS.iter().any(|m| !row.metric(m).is_finite()) {
            return Err(HarnessError::parse(path, line, "metrics must be finite"));
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn aggregate(rows: &[CsvRow]) -> Aggregate {
    let mut groups: BTreeMap<(String, String, usize), Vec<f64>> = BTreeMap::new();
    for r in rows {
        for m in METRICS {
            groups.entry((m.to_owned(), r.algorithm.clone(), r.budget)).or_default().push(r.metric(m));
        }
    }
    groups.into_iter().map(|(k, v)| (k, Band::of(&v))).collect()
}

pub fn aggregate_csv(agg: &Aggregate) -> String {
    let mut s = String::from("metric,algorithm,budget,count,median,q25,q75\n");
    for ((m, a, n), b) in agg {
        let _ = writeln!(s, "{m},{a},{n},{},{:e},{:e},{:e}", b.count, b.median, b.q25, b.q75);
    }
    s
}

pub fn summary_text(agg: &Aggregate) -> String {
    let mut s = String::new();
    let mut current = "";
    for ((m, a, n), b) in agg {
        if m != current {
            if !current.is_empty() {
                s.push('\n');
            }
            let _ = writeln!(s, "{m}: median [q25, q75] over seeds");
            let _ = writeln!(s, "{:<12} {:>8} {:>6} {:>12} {:>12} {:>12}", "algorithm", "budget", "seeds", "median", "q25", "q75");
            current = m;
        }
        let _ = writeln!(
            s,
            "{a:<12} {n:>8} {:>6} {:>12.6} {:>12.6} {:>12.6}",
            b.count, b.median, b.q25, b.q75
        );
    }
    s
}

const PALETTE: [RGBColor; 5] = [
    RGBColor(0x1f, 0x77, 0xb4),
    RGBColor(0xd6, 0x27, 0x28),
    RGBColor(0x2c, 0xa0, 0x2c),
    RGBColor(0xff, 0x7f, 0x0e),
    RGBColor(0x94, 0x67, 0xbd),
];

fn plot_error(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Invalid(format!("{}: cannot draw chart: {e}", path.display()))
}

/// Median curve with interquartile band per algorithm, budgets on a log2
/// axis.
pub fn write_chart(path: &Path, agg: &Aggregate, metric: &str) -> Result<()> {
    let mut series: BTreeMap<&str, Vec<(f64, Band)>> = BTreeMap::new();
    for ((m, a, n), b) in agg {
        if m == metric {
            series.entry(a.as_str()).or_default().push(((*n as f64).log2(), *b));
        }
    }
    let xs = series.values().flatten().map(|(x, _)| *x);
    let (x_lo, x_hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| (l.min(x), h.max(x)));
    if !x_lo.is_finite() {
        return Err(HarnessError::Invalid(format!("no rows for metric {metric}")));
    }
    let y_hi = series.values().flatten().map(|(_, b)| b.q75).fold(0.0, f64::max);
    let (x_lo, x_hi) = if x_lo == x_hi { (x_lo - 0.5, x_hi + 0.5) } else { (x_lo, x_hi) };
    let y_hi = if y_hi > 0.0 { y_hi * 1.05 } else { 1.0 };

    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_error(path, e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(metric, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x_lo..x_hi, 0.0..y_hi)
        .map_err(|e| plot_error(path, e))?;
    chart
        .configure_mesh()
        .x_desc("budget")
        .y_desc(metric)
        .x_label_formatter(&|x| format!("2^{}", x.round()))
        .draw()
        .map_err(|e| plot_error(path, e))?;

    for (k, (name, points)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut band: Vec<(f64, f64)> = points.iter().map(|(x, b)| (*x, b.q25)).collect();
        band.extend(points.iter().rev().map(|(x, b)| (*x, b.q75)));
        chart
            .draw_series(std::iter::once(Polygon::new(band, color.mix(0.2).filled())))
            .map_err(|e| plot_error(path, e))?;
        chart
            .draw_series(LineSeries::new(points.iter().map(|(x, b)| (*x, b.median)), color.stroke_width(2)))
            .map_err(|e| plot_error(path, e))?
            .label(*name)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| plot_error(path, e))?;
    root.present().map_err(|e| plot_error(path, e))
}

/// Files written by [`write_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub summary: PathBuf,
    pub aggregate: PathBuf,
    pub charts: Vec<PathBuf>,
}

pub fn write_report(results: &Path, out_dir: &Path) -> Result<ReportFiles> {
    let rows = read_results(results)?;
    if rows.is_empty() {
        return Err(HarnessError::Invalid(format!("{}: no result rows", results.display())));
    }
    let agg = aggregate(&rows);
    std::fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let summary = out_dir.join("summary.txt");
    std::fs::write(&summary, summary_text(&agg)).map_err(|e| HarnessError::io(&summary, e))?;
    let aggregate = out_dir.join("aggregate.csv");
    std::fs::write(&aggregate, aggregate_csv(&agg)).map_err(|e| HarnessError::io(&aggregate, e))?;
    let mut charts = Vec::new();
    for m in METRICS {
        let path = out_dir.join(format!("{m}.svg"));
        write_chart(&path, &agg, m)?;
        charts.push(path);
    }
    Ok(ReportFiles { summary, aggregate, charts })
}
