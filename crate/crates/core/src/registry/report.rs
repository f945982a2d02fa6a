use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{RegistryError, Result};
use crate::registry::metrics::{Better, MetricName, MetricValue};

/// One model's scores on one benchmark revision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub benchmark: String,
    pub version: u32,
    pub model: String,
    pub metrics: Vec<MetricValue>,
    /// Resolved run parameters worth echoing (thresholds, probe settings, criteria).
    #[serde(default)]
    pub params: BTreeMap<String, serde_json::Value>,
    pub config_digest: String,
    pub dataset_digest: String,
    pub timestamp: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

fn is_digest(s: &str) -> bool {
    s.len() == 64 && s.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase())
}

impl MetricReport {
    pub fn validate(&self) -> Result<()> {
        for (field, d) in [("config_digest", &self.config_digest), ("dataset_digest", &self.dataset_digest)] {
            if !is_digest(d) {
                return Err(RegistryError::InvalidReport(format!("{field} {d:?} is not a hex SHA-256 digest")));
            }
        }
        if let Some(m) = self.metrics.iter().find(|m| !m.value.is_finite()) {
            return Err(RegistryError::InvalidReport(format!("metric {} is not finite", m.name.as_str())));
        }
        Ok(())
    }

    pub fn metric(&self, name: MetricName) -> Option<f64> {
        self.metrics.iter().find(|m| m.name == name).map(|m| m.value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    JsonLines,
    Table,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TableOptions {
    /// Rows are ordered best-first on this `(benchmark, metric)` column;
    /// without it they keep first-appearance order.
    pub sort_by: Option<(String, MetricName)>,
}

/// One JSON object per report, in the given order.
pub fn emit_json_lines(reports: &[MetricReport]) -> String {
    let mut out = String::new();
    for r in reports {
        out.push_str(&serde_json::to_string(r).expect("reports serialize"));
        out.push('\n');
    }
    out
}

pub fn parse_json_lines(text: &str) -> Result<Vec<MetricReport>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| RegistryError::Parse(format!("line {}: {e}", i + 1))))
        .collect()
}

pub fn emit_report(reports: &[MetricReport], format: ReportFormat) -> String {
    match format {
        ReportFormat::JsonLines => emit_json_lines(reports),
        ReportFormat::Table => emit_table(reports, &TableOptions::default()),
    }
}

type Column = (String, MetricName);

/// Higher key is better.
fn key(name: MetricName, v: f64) -> f64 {
    match name.better() {
        Better::Higher => v,
        Better::Lower => -v,
        Better::ZeroAbs => -v.abs(),
    }
}

/// Dense rank per row (0 = best); equal values share a rank.
fn ranks(name: MetricName, cells: &[Option<f64>]) -> Vec<Option<usize>> {
    let mut keys: Vec<f64> = cells.iter().flatten().map(|&v| key(name, v)).collect();
    keys.sort_by(|a, b| b.total_cmp(a));
    keys.dedup();
    cells.iter().map(|c| c.map(|v| keys.iter().position(|&k| k == key(name, v)).expect("present"))).collect()
}

/// Aligned text table: one row per model, one column per
/// `(benchmark, metric)`. Within a column the best value is `**bold**` and
/// the runner-up `_underlined_` (direction-aware); columns with a single
/// value are left unmarked.
pub fn emit_table(reports: &[MetricReport], opts: &TableOptions) -> String {
    let mut columns: Vec<Column> = Vec::new();
    let mut models: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(String, Column), MetricValue> = BTreeMap::new();
    for r in reports {
        if !models.contains(&r.model) {
            models.push(r.model.clone());
        }
        for m in &r.metrics {
            let col = (r.benchmark.clone(), m.name);
            if !columns.contains(&col) {
                columns.push(col.clone());
            }
            cells.insert((r.model.clone(), col), m.clone());
        }
    }
    let value = |model: &str, col: &Column| cells.get(&(model.to_string(), col.clone()));

    if let Some(sort_col) = &opts.sort_by {
        models.sort_by(|a, b| {
            let ka = value(a, sort_col).map(|m| key(m.name, m.value));
            let kb = value(b, sort_col).map(|m| key(m.name, m.value));
            match (ka, kb) {
                (Some(x), Some(y)) => y.total_cmp(&x),
                (Some(_), None) => std::cmp::Ordering::Less,
                (None, Some(_)) => std::cmp::Ordering::Greater,
                (None, None) => std::cmp::Ordering::Equal,
            }
        });
    }

    let mut grid: Vec<Vec<String>> = vec![vec![String::new(); columns.len()]; models.len()];
    for (c, col) in columns.iter().enumerate() {
        let vals: Vec<Option<f64>> = models.iter().map(|m| value(m, col).map(|v| v.value)).collect();
        let marked = vals.iter().flatten().count() > 1;
        for (r, rank) in ranks(col.1, &vals).into_iter().enumerate() {
            grid[r][c] = match (value(&models[r], col), rank) {
                (None, _) => "-".to_string(),
                (Some(v), Some(0)) if marked => format!("**{}**", v.display()),
                (Some(v), Some(1)) if marked => format!("_{}_", v.display()),
                (Some(v), _) => v.display(),
            };
        }
    }

    let header: Vec<String> = std::iter::once("model".to_string())
        .chain(columns.iter().map(|(b, m)| format!("{b} {}", m.as_str())))
        .collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for (r, model) in models.iter().enumerate() {
        widths[0] = widths[0].max(model.chars().count());
        for (c, cell) in grid[r].iter().enumerate() {
            widths[c + 1] = widths[c + 1].max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| -> String {
        let parts: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(i, s)| if i == 0 { format!("{s:<w$}", w = widths[0]) } else { format!("{s:>w$}", w = widths[i]) })
            .collect();
        format!("| {} |\n", parts.join(" | "))
    };
    let mut out = line(header.iter().map(String::as_str).collect());
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    out.push_str(&line(rule.iter().map(String::as_str).collect()));
    for (r, model) in models.iter().enumerate() {
        out.push_str(&line(std::iter::once(model.as_str()).chain(grid[r].iter().map(String::as_str)).collect()));
    }
    out
}
