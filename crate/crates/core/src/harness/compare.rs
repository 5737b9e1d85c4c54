//! Method comparisons and result tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::RunReport;
use crate::error::{Error, Result};
use crate::spaces::Configuration;

/// One task in a comparison of run A against run B.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub task: Configuration,
    pub best_a: f64,
    pub best_b: f64,
    /// `best_a / best_b`; above 1 means B found the better value.
    pub quality_ratio: f64,
    pub cost_a: f64,
    pub cost_b: f64,
    /// `cost_a / cost_b`, total objective time.
    pub cost_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub method_a: String,
    pub method_b: String,
    pub rows: Vec<ComparisonRow>,
    pub wins_a: usize,
    pub wins_b: usize,
    pub ties: usize,
    pub mean_quality_ratio: f64,
    pub mean_cost_ratio: f64,
}

/// Columns plus a caption, ready for any plotting tool.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    pub caption: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl PlotData {
    /// CSV with the caption as a leading `#` comment line.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record(r.iter().map(|v| format_value(*v))).map_err(csv_err)?;
        }
        let body = String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?).expect("csv output is utf-8");
        Ok(format!("# {}\n{body}", self.caption))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn format_value(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

fn ratio(a: f64, b: f64) -> f64 {
    if a == b {
        1.0
    } else {
        a / b
    }
}

const TIE: f64 = 1e-12;

/// Per-task ratios of run A over run B. Both runs must cover the same tasks
/// in the same order.
pub fn compare(a: &RunReport, b: &RunReport) -> Result<ComparisonReport> {
    if a.tasks.len() != b.tasks.len() {
        return Err(Error::TaskMismatch(format!("{} tasks in `{}` but {} in `{}`", a.tasks.len(), a.name, b.tasks.len(), b.name)));
    }
    let mut rows = Vec::with_capacity(a.tasks.len());
    let (mut wins_a, mut wins_b, mut ties) = (0, 0, 0);
    for (i, (ta, tb)) in a.tasks.iter().zip(&b.tasks).enumerate() {
        if ta.task != tb.task {
            return Err(Error::TaskMismatch(format!("task {i} differs: {} vs {}", ta.task, tb.task)));
        }
        let q = ratio(ta.best_value, tb.best_value);
        if (q - 1.0).abs() <= TIE || q.is_nan() {
            ties += 1;
        } else if q > 1.0 {
            wins_b += 1;
        } else {
            wins_a += 1;
        }
        rows.push(ComparisonRow {
            task: ta.task.clone(),
            best_a: ta.best_value,
            best_b: tb.best_value,
            quality_ratio: q,
            cost_a: ta.cost,
            cost_b: tb.cost,
            cost_ratio: ratio(ta.cost, tb.cost),
        });
    }
    let n = rows.len().max(1) as f64;
    Ok(ComparisonReport {
        method_a: a.method.to_string(),
        method_b: b.method.to_string(),
        mean_quality_ratio: rows.iter().map(|r| r.quality_ratio).sum::<f64>() / n,
        mean_cost_ratio: rows.iter().map(|r| r.cost_ratio).sum::<f64>() / n,
        rows,
        wins_a,
        wins_b,
        ties,
    })
}

impl ComparisonReport {
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>4}  {:>14}  {:>14}  {:>9}  {:>12}  {:>12}  {:>9}",
            "task",
            format!("best {}", self.method_a),
            format!("best {}", self.method_b),
            "ratio",
            format!("time {}", self.method_a),
            format!("time {}", self.method_b),
            "ratio"
        );
        for (i, r) in self.rows.iter().enumerate() {
            let _ = writeln!(
                s,
                "{:>4}  {:>14.6e}  {:>14.6e}  {:>9.4}  {:>12.4e}  {:>12.4e}  {:>9.4}",
                i, r.best_a, r.best_b, r.quality_ratio, r.cost_a, r.cost_b, r.cost_ratio
            );
        }
        let _ = writeln!(
            s,
            "wins {}: {}, wins {}: {}, ties: {}; mean best ratio {:.4}, mean time ratio {:.4}",
            self.method_a, self.wins_a, self.method_b, self.wins_b, self.ties, self.mean_quality_ratio, self.mean_cost_ratio
        );
        s
    }

    /// Per-task best-value ratio against total-time ratio, one point per task.
    pub fn plot_data(&self) -> PlotData {
        PlotData {
            caption: format!(
                "{a} over {b}: best-value ratio (above 1: {b} better) and total objective time ratio per task",
                a = self.method_a,
                b = self.method_b
            ),
            columns: ["task", "best_a", "best_b", "quality_ratio", "cost_a", "cost_b", "cost_ratio"].map(String::from).to_vec(),
            rows: self
                .rows
                .iter()
                .enumerate()
                .map(|(i, r)| vec![i as f64, r.best_a, r.best_b, r.quality_ratio, r.cost_a, r.cost_b, r.cost_ratio])
                .collect(),
        }
    }
}

/// One row per method and task: method, tuning budget, best value and best
/// parameters.
pub fn report_optima_table(reports: &[RunReport]) -> String {
    let mut rows: Vec<[String; 5]> = vec![["method", "budget", "task", "best", "parameters"].map(String::from)];
    for r in reports {
        for (i, t) in r.tasks.iter().enumerate() {
            rows.push([
                r.method.to_string(),
                r.budget.to_string(),
                i.to_string(),
                if t.best_value.is_finite() { format!("{:.6e}", t.best_value) } else { "failed".into() },
                t.best_config.as_ref().map_or_else(|| "-".into(), |c| c.to_string()),
            ]);
        }
    }
    let widths: Vec<usize> = (0..5).map(|k| rows.iter().map(|r| r[k].len()).max().unwrap_or(0)).collect();
    let mut s = String::new();
    for r in &rows {
        let line: Vec<String> = r.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(s, "{}", line.join("  ").trim_end());
    }
    s
}
