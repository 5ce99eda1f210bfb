//! Posterior summaries of pairwise influence and their export as graphs.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::SquareMatrix;
use crate::sampler::Draw;

pub const SUMMARY_VERSION: u32 = 1;
pub const DEFAULT_LEVELS: [f64; 3] = [0.25, 0.5, 0.75];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileMatrix {
    pub level: f64,
    pub values: SquareMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

/// Elementwise posterior summary of a `(from, to)` influence matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceSummary {
    pub version: u32,
    pub persons: Vec<String>,
    pub draws: usize,
    pub mean: SquareMatrix,
    /// Population standard deviation.
    pub sd: SquareMatrix,
    pub quantiles: Vec<QuantileMatrix>,
    /// Influence exerted: row sums.
    pub totals_out: Totals,
    /// Influence received: column sums.
    pub totals_in: Totals,
}

/// Which influence matrix of a draw to summarize.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixKind {
    /// Word influence `ρ` (for the tied model, `r ν`).
    Words,
    /// Turn-taking excitation `ν`.
    Times,
}

impl FromStr for MatrixKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "words" | "rho" => Ok(MatrixKind::Words),
            "times" | "nu" => Ok(MatrixKind::Times),
            other => Err(Error::Usage(format!(
                "unknown matrix `{other}` (expected rho or nu)"
            ))),
        }
    }
}

pub fn draw_matrices(draws: &[Draw], kind: MatrixKind) -> Result<Vec<SquareMatrix>> {
    draws
        .iter()
        .map(|d| match kind {
            MatrixKind::Words => d.bec.as_ref().map(|b| b.influence.clone()),
            MatrixKind::Times => d.hawkes.as_ref().map(|h| h.excitation.clone()),
        })
        .map(|m| m.ok_or_else(|| Error::Data("draw lacks the requested influence matrix".into())))
        .collect()
}

/// Empirical quantile of sorted data, averaging at discontinuities.
pub fn quantile_sorted(xs: &[f64], level: f64) -> f64 {
    let n = xs.len();
    let h = n as f64 * level;
    let j = h.round();
    if (h - j).abs() < 1e-9 && j >= 1.0 && (j as usize) < n {
        let j = j as usize;
        0.5 * (xs[j - 1] + xs[j])
    } else {
        let idx = (h.ceil() as usize).clamp(1, n) - 1;
        xs[idx]
    }
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, v.sqrt())
}

pub fn summarize(
    persons: &[String],
    draws: &[SquareMatrix],
    levels: &[f64],
) -> Result<InfluenceSummary> {
    let n = persons.len();
    if draws.is_empty() {
        return Err(Error::Data("no draws to summarize".into()));
    }
    if let Some(d) = draws.iter().find(|d| d.dim() != n) {
        return Err(Error::Data(format!(
            "draw has dimension {} but there are {n} persons",
            d.dim()
        )));
    }
    if let Some(l) = levels.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(Error::Usage(format!("quantile level {l} outside [0, 1]")));
    }
    let mut mean = SquareMatrix::zeros(n);
    let mut sd = SquareMatrix::zeros(n);
    let mut quantiles: Vec<QuantileMatrix> = levels
        .iter()
        .map(|&level| QuantileMatrix {
            level,
            values: SquareMatrix::zeros(n),
        })
        .collect();
    let mut column = Vec::with_capacity(draws.len());
    for q in 0..n {
        for p in (0..n).filter(|&p| p != q) {
            column.clear();
            column.extend(draws.iter().map(|d| d[(q, p)]));
            let (m, s) = mean_sd(&column);
            mean[(q, p)] = m;
            sd[(q, p)] = s;
            column.sort_by(f64::total_cmp);
            for qm in &mut quantiles {
                qm.values[(q, p)] = quantile_sorted(&column, qm.level);
            }
        }
    }
    let off = |d: &SquareMatrix, a: usize, b: usize| if a == b { 0.0 } else { d[(a, b)] };
    let totals = |outgoing: bool| {
        let sds = (0..n)
            .map(|a| {
                let per: Vec<f64> = draws
                    .iter()
                    .map(|d| {
                        (0..n)
                            .map(|b| if outgoing { off(d, a, b) } else { off(d, b, a) })
                            .sum()
                    })
                    .collect();
                mean_sd(&per).1
            })
            .collect();
        let means = (0..n)
            .map(|a| {
                (0..n)
                    .map(|b| if outgoing { mean[(a, b)] } else { mean[(b, a)] })
                    .sum()
            })
            .collect();
        Totals {
            mean: means,
            sd: sds,
        }
    };
    Ok(InfluenceSummary {
        version: SUMMARY_VERSION,
        persons: persons.to_vec(),
        draws: draws.len(),
        totals_out: totals(true),
        totals_in: totals(false),
        mean,
        sd,
        quantiles,
    })
}

/// Combines per-meeting summaries over the union of their persons. Each edge
/// is averaged over the meetings attended by both of its endpoints; spreads
/// combine as the root mean of variances.
pub fn aggregate(summaries: &[InfluenceSummary]) -> Result<InfluenceSummary> {
    let first = summaries
        .first()
        .ok_or_else(|| Error::Data("nothing to aggregate".into()))?;
    let levels: Vec<f64> = first.quantiles.iter().map(|q| q.level).collect();
    if summaries.iter().any(|s| {
        s.quantiles
            .iter()
            .map(|q| q.level)
            .ne(levels.iter().copied())
    }) {
        return Err(Error::Data(
            "summaries use different quantile levels".into(),
        ));
    }
    let mut persons: Vec<String> = Vec::new();
    for s in summaries {
        for p in &s.persons {
            if !persons.contains(p) {
                persons.push(p.clone());
            }
        }
    }
    let n = persons.len();
    let maps: Vec<Vec<Option<usize>>> = summaries
        .iter()
        .map(|s| {
            persons
                .iter()
                .map(|p| s.persons.iter().position(|x| x == p))
                .collect()
        })
        .collect();

    let mut mean = SquareMatrix::zeros(n);
    let mut sd = SquareMatrix::zeros(n);
    let mut quantiles: Vec<QuantileMatrix> = levels
        .iter()
        .map(|&level| QuantileMatrix {
            level,
            values: SquareMatrix::zeros(n),
        })
        .collect();
    for a in 0..n {
        for b in (0..n).filter(|&b| b != a) {
            let present: Vec<(&InfluenceSummary, usize, usize)> = summaries
                .iter()
                .zip(&maps)
                .filter_map(|(s, m)| Some((s, m[a]?, m[b]?)))
                .collect();
            if present.is_empty() {
                continue;
            }
            let k = present.len() as f64;
            mean[(a, b)] = present
                .iter()
                .map(|(s, i, j)| s.mean[(*i, *j)])
                .sum::<f64>()
                / k;
            sd[(a, b)] = (present
                .iter()
                .map(|(s, i, j)| s.sd[(*i, *j)].powi(2))
                .sum::<f64>()
                / k)
                .sqrt();
            for (l, qm) in quantiles.iter_mut().enumerate() {
                qm.values[(a, b)] = present
                    .iter()
                    .map(|(s, i, j)| s.quantiles[l].values[(*i, *j)])
                    .sum::<f64>()
                    / k;
            }
        }
    }
    let totals = |outgoing: bool| {
        let means = (0..n)
            .map(|a| {
                (0..n)
                    .map(|b| if outgoing { mean[(a, b)] } else { mean[(b, a)] })
                    .sum()
            })
            .collect();
        let sds = (0..n)
            .map(|a| {
                let vars: Vec<f64> = summaries
                    .iter()
                    .zip(&maps)
                    .filter_map(|(s, m)| {
                        let i = m[a]?;
                        let t = if outgoing {
                            &s.totals_out
                        } else {
                            &s.totals_in
                        };
                        Some(t.sd[i].powi(2))
                    })
                    .collect();
                (vars.iter().sum::<f64>() / vars.len() as f64).sqrt()
            })
            .collect();
        Totals {
            mean: means,
            sd: sds,
        }
    };
    Ok(InfluenceSummary {
        version: SUMMARY_VERSION,
        draws: summaries.iter().map(|s| s.draws).sum(),
        totals_out: totals(true),
        totals_in: totals(false),
        persons,
        mean,
        sd,
        quantiles,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Json,
    Dot,
    Csv,
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ExportFormat::Json),
            "dot" => Ok(ExportFormat::Dot),
            "csv" => Ok(ExportFormat::Csv),
            other => Err(Error::Usage(format!(
                "unknown export format `{other}` (expected json, dot or csv)"
            ))),
        }
    }
}

impl ExportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::Json => "json",
            ExportFormat::Dot => "dot",
            ExportFormat::Csv => "csv",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: String,
    pub to: String,
    pub mean: f64,
    pub sd: f64,
}

/// Directed edges whose posterior mean is at least `threshold`.
pub fn edges(summary: &InfluenceSummary, threshold: f64) -> Vec<Edge> {
    let n = summary.persons.len();
    let mut out = Vec::new();
    for q in 0..n {
        for p in (0..n).filter(|&p| p != q) {
            let m = summary.mean[(q, p)];
            if m >= threshold {
                out.push(Edge {
                    from: summary.persons[q].clone(),
                    to: summary.persons[p].clone(),
                    mean: m,
                    sd: summary.sd[(q, p)],
                });
            }
        }
    }
    out
}

#[derive(Serialize)]
struct JsonExport<'a> {
    #[serde(flatten)]
    summary: &'a InfluenceSummary,
    threshold: f64,
    edges: Vec<Edge>,
}

fn dot_id(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

pub fn render(summary: &InfluenceSummary, format: ExportFormat, threshold: f64) -> Result<String> {
    if !(threshold >= 0.0) {
        return Err(Error::Usage(format!(
            "edge threshold must be non-negative, got {threshold}"
        )));
    }
    match format {
        ExportFormat::Json => {
            let doc = JsonExport {
                summary,
                threshold,
                edges: edges(summary, threshold),
            };
            Ok(serde_json::to_string_pretty(&doc)? + "\n")
        }
        ExportFormat::Dot => {
            let es = edges(summary, threshold);
            let max = es.iter().map(|e| e.mean).fold(0.0, f64::max);
            let mut s = String::from("digraph influence {\n");
            for p in &summary.persons {
                let _ = writeln!(s, "  {};", dot_id(p));
            }
            for e in &es {
                let width = if max > 0.0 { 5.0 * e.mean / max } else { 0.0 };
                let _ = writeln!(
                    s,
                    "  {} -> {} [weight={}, penwidth={:.3}, label=\"{:.3}\"];",
                    dot_id(&e.from),
                    dot_id(&e.to),
                    e.mean,
                    width,
                    e.mean
                );
            }
            s.push_str("}\n");
            Ok(s)
        }
        ExportFormat::Csv => Ok(matrix_csv(&summary.persons, &summary.mean)),
    }
}

/// `From` down the rows, `To` across the columns.
pub fn matrix_csv(persons: &[String], m: &SquareMatrix) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["From".to_string()];
    header.extend(persons.iter().cloned());
    w.write_record(&header).expect("in-memory write");
    for (q, name) in persons.iter().enumerate() {
        let mut rec = vec![name.clone()];
        rec.extend(m.row(q).iter().map(|v| v.to_string()));
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

pub fn parse_matrix_csv(text: &str) -> Result<(Vec<String>, SquareMatrix)> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let persons: Vec<String> = rdr.headers()?.iter().skip(1).map(str::to_owned).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .skip(1)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|e| Error::Data(format!("matrix entry `{v}`: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.len() != persons.len() {
        return Err(Error::Data("matrix CSV is not square".into()));
    }
    let m = SquareMatrix::try_from(rows)?;
    Ok((persons, m))
}

pub fn export(
    summary: &InfluenceSummary,
    format: ExportFormat,
    threshold: f64,
    path: &Path,
) -> Result<()> {
    let text = render(summary, format, threshold)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
