//! Corpus-level aggregation of records and the JSON, CSV and text outputs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{Orientation, SubMetric};
use crate::pipeline::{EvalRecord, Objective, Score};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_BINS: usize = 10;
/// Significant digits kept in emitted statistics.
pub const SIGNIFICANT_DIGITS: usize = 6;

/// Rounds to [`SIGNIFICANT_DIGITS`] significant digits; non-finite values
/// and zero pass through.
pub fn round_sig(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, v)
        .parse()
        .expect("formatted float parses")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: Option<Score>,
    pub std: Option<Score>,
    pub median: Option<Score>,
    /// Finite values the statistics are computed from.
    pub count: usize,
    /// Infinite values (PSNR of identical images), excluded above.
    pub inf_count: usize,
}

/// Mean, standard deviation and median of the finite values. `sample`
/// selects the n − 1 denominator.
pub fn stats(values: &[f64], sample: bool) -> Stats {
    let mut finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let inf_count = values.iter().filter(|v| v.is_infinite()).count();
    let n = finite.len();
    if n == 0 {
        return Stats {
            mean: None,
            std: None,
            median: None,
            count: 0,
            inf_count,
        };
    }
    finite.sort_by(f64::total_cmp);
    let mean = finite.iter().sum::<f64>() / n as f64;
    let ss = finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    let std = match (sample, n) {
        (true, 1) => 0.0,
        (true, _) => (ss / (n - 1) as f64).sqrt(),
        (false, _) => (ss / n as f64).sqrt(),
    };
    let median = if n % 2 == 1 {
        finite[n / 2]
    } else {
        (finite[n / 2 - 1] + finite[n / 2]) / 2.0
    };
    Stats {
        mean: Some(Score(mean)),
        std: Some(Score(std)),
        median: Some(Score(median)),
        count: n,
        inf_count,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` edges.
    pub edges: Vec<Score>,
    pub counts: Vec<usize>,
}

/// Equal-width bins over `[min, max]` of the finite values; each bin is
/// half-open except the last, which is closed. Equal values all land in
/// the first bin.
pub fn histogram(values: &[f64], bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::BadParams("histogram needs at least one bin".into()));
    }
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return Err(Error::NoFiniteValues);
    }
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins)
        .map(|i| Score(if i == bins { hi } else { lo + width * i as f64 }))
        .collect();
    let mut counts = vec![0; bins];
    for v in finite {
        let idx = if width == 0.0 {
            0
        } else {
            (((v - lo) / width).floor() as usize).min(bins - 1)
        };
        counts[idx] += 1;
    }
    Ok(Histogram { edges, counts })
}

/// Percentage of images on which each method scores best. `scores` maps
/// image id to per-method score; every image must score every method.
/// Ties split the image's selection equally.
pub fn selection_frequency(
    scores: &BTreeMap<String, BTreeMap<String, f64>>,
    methods: &[String],
    orientation: Orientation,
) -> Result<BTreeMap<String, f64>> {
    if methods.is_empty() || scores.is_empty() {
        return Err(Error::NoRecords);
    }
    let mut wins: BTreeMap<String, f64> = methods.iter().map(|m| (m.clone(), 0.0)).collect();
    for (image, row) in scores {
        let values = methods
            .iter()
            .map(|m| {
                row.get(m).copied().ok_or_else(|| {
                    Error::IncompleteGrid(format!("no score for `{m}` on image `{image}`"))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        let best = values
            .iter()
            .copied()
            .reduce(|a, b| if orientation.better(b, a) { b } else { a })
            .expect("methods is non-empty");
        let winners: Vec<&String> = methods
            .iter()
            .zip(&values)
            .filter(|(_, &v)| v == best)
            .map(|(m, _)| m)
            .collect();
        let share = 1.0 / winners.len() as f64;
        for m in winners {
            *wins.get_mut(m).expect("known method") += share;
        }
    }
    let n = scores.len() as f64;
    Ok(wins.into_iter().map(|(m, w)| (m, 100.0 * w / n)).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSummary {
    pub stats: Stats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histogram: Option<Histogram>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub records: usize,
    pub failed: usize,
    #[serde(default)]
    pub failures_by_kind: BTreeMap<String, usize>,
    pub objectives: BTreeMap<Objective, ObjectiveSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Images on which every method has a score.
    pub images: usize,
    /// Images left out because some method has no score there.
    pub incomplete_images: usize,
    pub percent: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub metric: SubMetric,
    pub orientation: Orientation,
    pub std_kind: StdKind,
    pub second: Vec<String>,
    pub images: usize,
    pub records: usize,
    pub failed: usize,
    pub skipped_lines: usize,
    pub objectives: Vec<Objective>,
    pub methods: Vec<MethodSummary>,
    pub selection: BTreeMap<Objective, Selection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StdKind {
    #[default]
    Population,
    Sample,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportOptions {
    pub std_kind: StdKind,
    pub bins: usize,
    /// Unparseable record lines the caller skipped.
    pub skipped_lines: usize,
    /// Run configuration to echo into the report.
    pub config: Option<serde_json::Value>,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            std_kind: StdKind::Population,
            bins: DEFAULT_BINS,
            skipped_lines: 0,
            config: None,
        }
    }
}

/// Builds the corpus report. Statistics are rounded to
/// [`SIGNIFICANT_DIGITS`]; selection percentages are kept exact so they sum
/// to 100.
pub fn aggregate(records: &[EvalRecord], opts: &ReportOptions) -> Result<RunReport> {
    let ok: Vec<&EvalRecord> = records.iter().filter(|r| r.is_ok()).collect();
    let Some(first) = ok.first() else {
        return Err(Error::NoRecords);
    };
    let metric = first.metric;
    if let Some(other) = ok.iter().find(|r| r.metric != metric) {
        return Err(Error::Config(format!(
            "records mix sub-metrics `{metric}` and `{}`",
            other.metric
        )));
    }
    let orientation = metric.orientation();
    let methods: BTreeSet<&str> = records.iter().map(|r| r.method.as_str()).collect();
    let objectives: BTreeSet<Objective> =
        ok.iter().flat_map(|r| r.objectives.keys().copied()).collect();
    let round = |s: Option<Score>| s.map(|v| Score(round_sig(v.0)));
    let round_hist = |h: Histogram| Histogram {
        edges: h.edges.into_iter().map(|e| Score(round_sig(e.0))).collect(),
        counts: h.counts,
    };

    let summaries: Vec<MethodSummary> = methods
        .iter()
        .map(|&m| {
            let mine: Vec<&EvalRecord> = records.iter().filter(|r| r.method == m).collect();
            let mut failures_by_kind = BTreeMap::new();
            for e in mine.iter().filter_map(|r| r.error.as_ref()) {
                *failures_by_kind.entry(e.kind.clone()).or_insert(0) += 1;
            }
            let per_objective = objectives
                .iter()
                .map(|&obj| {
                    let values: Vec<f64> = mine
                        .iter()
                        .filter(|r| r.is_ok())
                        .filter_map(|r| r.objectives.get(&obj))
                        .map(|s| s.0)
                        .collect();
                    let st = stats(&values, opts.std_kind == StdKind::Sample);
                    let summary = ObjectiveSummary {
                        stats: Stats {
                            mean: round(st.mean),
                            std: round(st.std),
                            median: round(st.median),
                            ..st
                        },
                        histogram: histogram(&values, opts.bins).ok().map(round_hist),
                    };
                    (obj, summary)
                })
                .collect();
            MethodSummary {
                method: m.to_string(),
                records: mine.len(),
                failed: mine.iter().filter(|r| !r.is_ok()).count(),
                failures_by_kind,
                objectives: per_objective,
            }
        })
        .collect();

    let method_names: Vec<String> = methods.iter().map(|m| m.to_string()).collect();
    let images: BTreeSet<&str> = records.iter().map(|r| r.image_id.as_str()).collect();
    let mut selection = BTreeMap::new();
    for &obj in &objectives {
        let mut grid: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
        for r in &ok {
            if let Some(v) = r.objectives.get(&obj) {
                grid.entry(r.image_id.clone())
                    .or_default()
                    .insert(r.method.clone(), v.0);
            }
        }
        let total = images.len();
        grid.retain(|_, row| row.len() == method_names.len());
        let complete = grid.len();
        if complete == 0 {
            continue;
        }
        let percent = selection_frequency(&grid, &method_names, orientation)?;
        selection.insert(
            obj,
            Selection {
                images: complete,
                incomplete_images: total - complete,
                percent,
            },
        );
    }

    let seconds: BTreeSet<String> = ok.iter().map(|r| r.second.clone()).collect();
    Ok(RunReport {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        metric,
        orientation,
        std_kind: opts.std_kind,
        second: seconds.into_iter().collect(),
        images: images.len(),
        records: records.len(),
        failed: records.len() - ok.len(),
        skipped_lines: opts.skipped_lines,
        objectives: objectives.into_iter().collect(),
        methods: summaries,
        selection,
        config: opts.config.clone(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
    Text,
}

impl Format {
    pub const ALL: [Format; 3] = [Format::Json, Format::Csv, Format::Text];

    pub fn extension(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
            Format::Text => "txt",
        }
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "text" | "txt" => Ok(Format::Text),
            _ => Err(Error::Config(format!("unknown report format `{s}`"))),
        }
    }
}

pub fn to_json(report: &RunReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("reports always serialize");
    s.push('\n');
    s
}

pub fn from_json(text: &str) -> Result<RunReport> {
    serde_json::from_str(text).map_err(|e| Error::Config(format!("not a report: {e}")))
}

const CSV_STATS: [&str; 3] = ["mean", "std", "median"];

/// One row per (method, objective, statistic).
pub fn to_csv(report: &RunReport) -> String {
    let mut out = String::from("method,objective,statistic,value\n");
    for m in &report.methods {
        for obj in &report.objectives {
            let st = m.objectives.get(obj).map(|o| &o.stats);
            for name in CSV_STATS {
                let v = st.and_then(|s| match name {
                    "mean" => s.mean,
                    "std" => s.std,
                    _ => s.median,
                });
                let _ = writeln!(
                    out,
                    "{},{},{},{}",
                    csv_field(&m.method),
                    obj,
                    name,
                    v.map(|s| fmt_value(s.0)).unwrap_or_default()
                );
            }
        }
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn fmt_value(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else if v > 0.0 {
        "inf".into()
    } else if v < 0.0 {
        "-inf".into()
    } else {
        "nan".into()
    }
}

/// Methods ranked by the mean of the first-second objective (or the first
/// objective present), best first, with every objective as a column.
pub fn to_text(report: &RunReport) -> String {
    let key = if report.objectives.contains(&Objective::FirstSecond) {
        Objective::FirstSecond
    } else {
        report.objectives[0]
    };
    let mean_of = |m: &MethodSummary| {
        m.objectives
            .get(&key)
            .and_then(|o| o.stats.mean)
            .map(|s| s.0)
    };
    let mut ranked: Vec<&MethodSummary> = report.methods.iter().collect();
    ranked.sort_by(|a, b| {
        let (x, y) = (mean_of(a), mean_of(b));
        match (x, y) {
            (Some(x), Some(y)) => match report.orientation {
                Orientation::LowerIsBetter => x.total_cmp(&y),
                Orientation::HigherIsBetter => y.total_cmp(&x),
            },
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => std::cmp::Ordering::Equal,
        }
        .then_with(|| a.method.cmp(&b.method))
    });

    let arrow = match report.orientation {
        Orientation::LowerIsBetter => "lower is better",
        Orientation::HigherIsBetter => "higher is better",
    };
    let mut headers = vec!["rank".to_string(), "method".to_string()];
    headers.extend(report.objectives.iter().map(|o| format!("{o} (mean ± std)")));
    headers.push(format!("selected % ({key})"));
    headers.extend(["n".to_string(), "failed".to_string()]);
    let mut rows = Vec::new();
    for (i, m) in ranked.iter().enumerate() {
        let mut row = vec![(i + 1).to_string(), m.method.clone()];
        for obj in &report.objectives {
            row.push(match m.objectives.get(obj).map(|o| &o.stats) {
                Some(Stats {
                    mean: Some(mean),
                    std: Some(std),
                    ..
                }) => format!("{:.4} ± {:.4}", mean.0, std.0),
                Some(s) if s.inf_count > 0 => "inf".into(),
                _ => "-".into(),
            });
        }
        row.push(
            report
                .selection
                .get(&key)
                .and_then(|s| s.percent.get(&m.method))
                .map_or("-".into(), |p| format!("{p:.1}")),
        );
        let n = m.objectives.get(&key).map_or(0, |o| o.stats.count + o.stats.inf_count);
        row.push(n.to_string());
        row.push(m.failed.to_string());
        rows.push(row);
    }
    let widths: Vec<usize> = (0..headers.len())
        .map(|c| {
            rows.iter()
                .map(|r| r[c].chars().count())
                .chain([headers[c].chars().count()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: &[String]| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = format!(
        "metric: {} ({arrow}); re-inpainting: {}; images: {}; records: {} ({} failed)\n\n",
        report.metric,
        report.second.join(", "),
        report.images,
        report.records,
        report.failed
    );
    out.push_str(&line(&headers));
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    out.push('\n');
    for r in &rows {
        out.push_str(&line(r));
        out.push('\n');
    }
    if report.skipped_lines > 0 {
        let _ = writeln!(out, "\n{} unreadable record lines skipped", report.skipped_lines);
    }
    out
}

pub fn render(report: &RunReport, format: Format) -> String {
    match format {
        Format::Json => to_json(report),
        Format::Csv => to_csv(report),
        Format::Text => to_text(report),
    }
}

/// Writes `<stem>.<ext>` into `dir` for each format; returns the paths.
pub fn emit(report: &RunReport, dir: &Path, stem: &str, formats: &[Format]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    formats
        .iter()
        .map(|&f| {
            let path = dir.join(format!("{stem}.{}", f.extension()));
            fs::write(&path, render(report, f)).map_err(|e| Error::io(&path, e))?;
            Ok(path)
        })
        .collect()
}
