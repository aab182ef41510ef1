//! Benchmark report assembly: the metric table and the pairwise
//! significance table, rendered as CSV files and an aligned text table.

use serde::{Deserialize, Serialize};

use crate::metrics::MetricSummary;
use crate::stats::WilcoxonResult;

/// One pairwise significance entry: two method labels, the metric the pair
/// was compared on, and the test outcome when it could be run. `None` means
/// the paired test was not applicable (too few usable pairs or identical
/// samples), which the tables show as an empty cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub pair: String,
    pub metric: String,
    pub wilcoxon: Option<WilcoxonResult>,
}

impl ComparisonRow {
    pub fn new(a: &str, b: &str, metric: &str, wilcoxon: Option<WilcoxonResult>) -> Self {
        Self {
            pair: format!("{a} vs {b}"),
            metric: metric.to_string(),
            wilcoxon,
        }
    }
}

/// A complete benchmark report: one row per method, one row per pairwise
/// comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub summaries: Vec<MetricSummary>,
    pub comparisons: Vec<ComparisonRow>,
}

/// Assemble a report. Summaries must be non-empty; comparisons may be empty
/// (a single method has nothing to compare against).
pub fn build_report(summaries: Vec<MetricSummary>, comparisons: Vec<ComparisonRow>) -> BenchReport {
    assert!(
        !summaries.is_empty(),
        "a report needs at least one method summary"
    );
    BenchReport {
        summaries,
        comparisons,
    }
}

fn fmt_opt(value: Option<f64>) -> String {
    value.map_or_else(String::new, |v| format!("{v:.2}"))
}

impl BenchReport {
    /// `method,IC,PE,ET` — one row per method. Metrics undefined for the
    /// batch (no completed trial) render as empty cells.
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("method,IC,PE,ET\n");
        for s in &self.summaries {
            out.push_str(&format!(
                "{},{:.2},{},{}\n",
                s.method,
                s.interventions,
                fmt_opt(s.path_efficiency),
                fmt_opt(s.execution_time),
            ));
        }
        out
    }

    /// `pair,metric,p` — one row per pairwise comparison. Tests that could
    /// not run render an empty p cell.
    pub fn significance_csv(&self) -> String {
        let mut out = String::from("pair,metric,p\n");
        for c in &self.comparisons {
            let p = c
                .wilcoxon
                .as_ref()
                .map_or_else(String::new, |w| format!("{:.4}", w.p_value));
            out.push_str(&format!("{},{},{}\n", c.pair, c.metric, p));
        }
        out
    }

    /// Human-readable aligned table of both sections.
    pub fn text_table(&self) -> String {
        let headers = ["method", "IC", "PE", "ET"];
        let rows: Vec<[String; 4]> = self
            .summaries
            .iter()
            .map(|s| {
                [
                    s.method.clone(),
                    format!("{:.2}", s.interventions),
                    fmt_opt(s.path_efficiency),
                    fmt_opt(s.execution_time),
                ]
            })
            .collect();
        let mut widths = headers.map(str::len);
        for row in &rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let mut out = String::new();
        let fmt_row = |cells: [&str; 4], widths: &[usize; 4]| {
            let mut line = String::new();
            for (i, (cell, w)) in cells.iter().zip(widths).enumerate() {
                if i > 0 {
                    line.push_str("  ");
                }
                if i == 0 {
                    line.push_str(&format!("{cell:<w$}"));
                } else {
                    line.push_str(&format!("{cell:>w$}"));
                }
            }
            line.push('\n');
            line
        };
        out.push_str(&fmt_row(headers, &widths));
        for row in &rows {
            out.push_str(&fmt_row(
                [&row[0], &row[1], &row[2], &row[3]],
                &widths,
            ));
        }
        if !self.comparisons.is_empty() {
            out.push('\n');
            out.push_str("pairwise significance (Wilcoxon signed-rank, two-sided)\n");
            let pair_w = self
                .comparisons
                .iter()
                .map(|c| c.pair.len())
                .max()
                .unwrap_or(4)
                .max("pair".len());
            let metric_w = self
                .comparisons
                .iter()
                .map(|c| c.metric.len())
                .max()
                .unwrap_or(6)
                .max("metric".len());
            out.push_str(&format!("{:<pair_w$}  {:<metric_w$}  {:>8}\n", "pair", "metric", "p"));
            for c in &self.comparisons {
                let p = c
                    .wilcoxon
                    .as_ref()
                    .map_or_else(|| "-".to_string(), |w| format!("{:.4}", w.p_value));
                out.push_str(&format!(
                    "{:<pair_w$}  {:<metric_w$}  {:>8}\n",
                    c.pair, c.metric, p
                ));
            }
        }
        out
    }
}
