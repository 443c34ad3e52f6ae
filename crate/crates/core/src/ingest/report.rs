//! Rendering of [`EvalReport`]s and ROC dumps.

use std::fmt::Write as _;

use crate::attacks::Attack;
use crate::eval::EvalReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum ReportFormat {
    /// Aligned text table: rows = non-member sources, columns = attacks.
    #[default]
    Table,
    /// Pretty-printed JSON with the full metadata.
    Structured,
    Csv,
}

/// Three decimals; cells for skipped attacks render as `-`.
pub fn format_auc(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.3}"),
        None => "-".to_owned(),
    }
}

fn cells(report: &EvalReport, columns: &[Attack]) -> Vec<Vec<String>> {
    report
        .rows
        .iter()
        .map(|row| {
            std::iter::once(row.source.clone())
                .chain(columns.iter().map(|a| format_auc(row.auc.get(a).copied())))
                .collect()
        })
        .collect()
}

pub fn render_report(report: &EvalReport, format: ReportFormat) -> String {
    let columns = report.columns();
    let header: Vec<String> = std::iter::once("Source".to_owned())
        .chain(columns.iter().map(|a| a.column().to_owned()))
        .collect();
    let body = cells(report, &columns);
    match format {
        ReportFormat::Structured => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Csv => {
            let mut out = String::new();
            for line in std::iter::once(&header).chain(&body) {
                let escaped: Vec<String> = line.iter().map(|c| csv_field(c)).collect();
                out.push_str(&escaped.join(","));
                out.push('\n');
            }
            out
        }
        ReportFormat::Table => {
            let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
            for line in &body {
                for (w, c) in widths.iter_mut().zip(line) {
                    *w = (*w).max(c.chars().count());
                }
            }
            let mut out = String::new();
            for line in std::iter::once(&header).chain(&body) {
                for (i, (c, w)) in line.iter().zip(&widths).enumerate() {
                    if i == 0 {
                        let _ = write!(out, "{c:<w$}");
                    } else {
                        let _ = write!(out, "  {c:>w$}");
                    }
                }
                out.push('\n');
            }
            out
        }
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// ROC points of one attack against one non-member source.
pub type RocCurve = (String, Attack, Vec<(f64, f64)>);

/// `source,attack,fpr,tpr` lines, one per ROC point.
pub fn render_roc(curves: &[RocCurve]) -> String {
    let mut out = String::from("source,attack,fpr,tpr\n");
    for (source, attack, points) in curves {
        for (x, y) in points {
            let _ = writeln!(out, "{},{},{x},{y}", csv_field(source), attack.key());
        }
    }
    out
}
