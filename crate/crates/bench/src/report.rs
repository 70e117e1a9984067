//! Text and CSV renderings of a benchmark report.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use cfx_core::evaluators::{Aggregate, Metric, Norm};

use crate::{BenchError, BenchmarkReport};

fn column_name(metric: Metric, norm: Norm) -> &'static str {
    match metric {
        Metric::Validity => "validity_pct",
        Metric::Proximity => match norm {
            Norm::L1 => "proximity_l1",
            Norm::L2 => "proximity_l2",
        },
        Metric::DeltaRobustness => "robust_pct",
        Metric::ApproxDelta => "approx_robust_pct",
        Metric::Retraining => "retrain_valid_pct",
        Metric::SetDistance => "set_distance",
        Metric::Multiplicity => "multiplicity_pct",
    }
}

fn table_heading(metric: Metric) -> &'static str {
    match metric {
        Metric::Validity => "Validity (%)",
        Metric::Proximity => "Proximity",
        Metric::DeltaRobustness => "Rob. (%)",
        Metric::ApproxDelta => "Approx. rob. (%)",
        Metric::Retraining => "Retrain valid (%)",
        Metric::SetDistance => "Set dist.",
        Metric::Multiplicity => "Multiplicity (%)",
    }
}

/// Fixed-width table, one method per row. Times and percentages get one
/// decimal, distances two. Columns with nothing to aggregate show `n/a`.
pub fn render_table(r: &BenchmarkReport) -> String {
    let mut header = vec!["Method".to_string(), "Time (s)".to_string()];
    header.extend(r.evaluations.iter().map(|&m| table_heading(m).to_string()));
    let mut lines = vec![header];
    for row in &r.rows {
        let mut cells = vec![row.method.label().to_string(), format!("{:.1}", row.time_seconds)];
        for o in &row.outcomes {
            cells.push(if o.empty {
                "n/a".to_string()
            } else {
                match o.kind {
                    Aggregate::Percentage => format!("{:.1}", o.aggregate),
                    Aggregate::Mean => format!("{:.2}", o.aggregate),
                }
            });
        }
        lines.push(cells);
    }
    let widths: Vec<usize> = (0..lines[0].len())
        .map(|c| lines.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, l) in lines.iter().enumerate() {
        let cells: Vec<String> = l
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (cell, &w))| if c == 0 { format!("{cell:<w$}") } else { format!("{cell:>w$}") })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
    let _ = writeln!(
        out,
        "\n{} negative instances, delta={}, seed={}",
        r.metadata.instance_count, r.metadata.delta, r.metadata.seed
    );
    out
}

/// CSV text of the report: a header, one row per method and a block of
/// `# key=value` metadata lines. Numbers use the shortest representation
/// that parses back to the same value.
pub fn csv_text(r: &BenchmarkReport) -> String {
    let mut out = String::from("method,time_s");
    for &m in &r.evaluations {
        out.push(',');
        out.push_str(column_name(m, r.metadata.norm));
    }
    out.push('\n');
    for row in &r.rows {
        let _ = write!(out, "{},{:?}", row.method.label(), row.time_seconds);
        for o in &row.outcomes {
            let _ = write!(out, ",{:?}", o.aggregate);
        }
        out.push('\n');
    }
    let md = &r.metadata;
    let layers: Vec<String> = md.layer_dims.iter().map(usize::to_string).collect();
    let _ = writeln!(out, "# seed={}", md.seed);
    let _ = writeln!(out, "# delta={:?}", md.delta);
    let _ = writeln!(out, "# neg_value={}", md.neg_value);
    let _ = writeln!(out, "# instance_count={}", md.instance_count);
    let _ = writeln!(out, "# layers={}", layers.join("-"));
    let _ = writeln!(out, "# fingerprint={}", md.fingerprint);
    let empty: Vec<&str> = r
        .evaluations
        .iter()
        .enumerate()
        .filter(|&(k, _)| r.rows.iter().any(|row| row.outcomes[k].empty))
        .map(|(_, &m)| column_name(m, md.norm))
        .collect();
    if !empty.is_empty() {
        let _ = writeln!(out, "# empty_columns={}", empty.join(";"));
    }
    out
}

fn write_file(path: &Path, text: &str) -> Result<(), BenchError> {
    fs::write(path, text).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_csv(r: &BenchmarkReport, path: impl AsRef<Path>) -> Result<(), BenchError> {
    write_file(path.as_ref(), &csv_text(r))
}

/// One row per (method, instance) with the per-instance metric values;
/// values excluded from a mean are left empty.
pub fn details_text(r: &BenchmarkReport) -> String {
    let mut out = String::from("method,instance,ce_found,valid,l2_distance");
    for &m in &r.evaluations {
        out.push(',');
        out.push_str(column_name(m, r.metadata.norm));
    }
    out.push('\n');
    for row in &r.rows {
        for rec in &row.instances {
            let res = &rec.result;
            let _ = write!(
                out,
                "{},{},{},{},{:?}",
                row.method.label(),
                res.instance_index,
                u8::from(res.ce.is_some()),
                u8::from(res.valid),
                res.l2_distance
            );
            for v in &rec.values {
                match v {
                    Some(v) => {
                        let _ = write!(out, ",{v:?}");
                    }
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
    }
    out
}

pub fn write_details(r: &BenchmarkReport, path: impl AsRef<Path>) -> Result<(), BenchError> {
    write_file(path.as_ref(), &details_text(r))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedReport {
    pub header: Vec<String>,
    /// Method label and its numeric cells in header order (after `method`).
    pub rows: Vec<(String, Vec<f64>)>,
    pub metadata: Vec<(String, String)>,
}

impl ParsedReport {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

/// Reads text produced by [`csv_text`].
pub fn parse_csv(text: &str) -> Result<ParsedReport, String> {
    let mut lines = text.lines().enumerate();
    let (_, head) = lines.next().ok_or("empty report")?;
    let header: Vec<String> = head.split(',').map(str::to_string).collect();
    let mut rows = Vec::new();
    let mut metadata = Vec::new();
    for (n, line) in lines {
        if let Some(kv) = line.strip_prefix("# ") {
            let (k, v) = kv.split_once('=').ok_or(format!("line {}: metadata without `=`", n + 1))?;
            metadata.push((k.to_string(), v.to_string()));
            continue;
        }
        let mut cells = line.split(',');
        let method = cells.next().unwrap_or_default().to_string();
        let values = cells
            .map(|c| c.parse::<f64>().map_err(|e| format!("line {}: `{c}`: {e}", n + 1)))
            .collect::<Result<Vec<f64>, String>>()?;
        if values.len() + 1 != header.len() {
            return Err(format!("line {}: expected {} cells", n + 1, header.len()));
        }
        rows.push((method, values));
    }
    Ok(ParsedReport { header, rows, metadata })
}
