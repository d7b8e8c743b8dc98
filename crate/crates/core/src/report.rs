//! Merging class-audit CSVs into a plain-text table, a JSON document, and
//! per-class chart data.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data_model::io_util::{csv_error, finish_csv, write_atomic};
use crate::error::Result;
use crate::stats_audit::{read_class_audit, ClassAuditRow};

/// One audited comparison, rows ordered by normalized recall difference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSection {
    pub name: String,
    pub classes: usize,
    pub significant: usize,
    /// Significant classes with a negative normalized recall difference.
    pub significant_harmed: usize,
    pub rows: Vec<ClassAuditRow>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub sections: Vec<ReportSection>,
}

impl ReportSection {
    pub fn new(name: impl Into<String>, mut rows: Vec<ClassAuditRow>) -> Self {
        rows.sort_by(|a, b| {
            a.norm_recall_diff
                .total_cmp(&b.norm_recall_diff)
                .then(a.class_id.cmp(&b.class_id))
        });
        ReportSection {
            name: name.into(),
            classes: rows.len(),
            significant: rows.iter().filter(|r| r.significant).count(),
            significant_harmed: rows
                .iter()
                .filter(|r| r.significant && r.norm_recall_diff < 0.0)
                .count(),
            rows,
        }
    }
}

/// Reads each audit CSV as a section named after its file stem.
pub fn load_report(paths: &[&Path]) -> Result<Report> {
    let sections = paths
        .iter()
        .map(|p| {
            let name = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok(ReportSection::new(name, read_class_audit(p)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Report { sections })
}

pub fn render_text(report: &Report) -> String {
    let mut out = String::new();
    for (i, s) in report.sections.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(
            out,
            "== {}: {} classes, {} significant ({} harmed)",
            s.name, s.classes, s.significant, s.significant_harmed
        );
        if s.rows.is_empty() {
            continue;
        }
        let _ = writeln!(
            out,
            "{:>6} {:>10} {:>10} {:>10} {:>10} {:>9} {:>4}",
            "class", "base", "comp", "norm_diff", "t", "p", "sig"
        );
        for r in &s.rows {
            let _ = writeln!(
                out,
                "{:>6} {:>10.4} {:>10.4} {:>+10.4} {:>10.3} {:>9.4} {:>4}",
                r.class_id,
                r.mean_recall_base,
                r.mean_recall_comp,
                r.norm_recall_diff,
                r.t_stat,
                r.p_value,
                if r.significant { "*" } else { "" }
            );
        }
    }
    out
}

/// `class,norm_recall_diff,significant` in report order.
pub fn write_chart_data(section: &ReportSection, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["class", "norm_recall_diff", "significant"])
        .map_err(|e| csv_error(path, e))?;
    for r in &section.rows {
        writer
            .write_record([
                r.class_id.to_string(),
                format!("{:.6}", r.norm_recall_diff),
                (r.significant as u8).to_string(),
            ])
            .map_err(|e| csv_error(path, e))?;
    }
    finish_csv(path, writer)
}

/// Writes `report.txt`, `report.json` and, with `chart`, one
/// `chart_<name>.csv` per section into `out_dir`.
pub fn write_report(report: &Report, out_dir: &Path, chart: bool) -> Result<()> {
    write_atomic(&out_dir.join("report.txt"), render_text(report).as_bytes())?;
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    write_atomic(&out_dir.join("report.json"), json.as_bytes())?;
    if chart {
        for s in &report.sections {
            write_chart_data(s, &out_dir.join(format!("chart_{}.csv", s.name)))?;
        }
    }
    Ok(())
}
