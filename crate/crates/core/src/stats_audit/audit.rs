use std::path::Path;

use serde::{Deserialize, Serialize};

use super::welch::welch_t_test;
use crate::data_model::io_util::{csv_error, finish_csv};
use crate::data_model::{class_recall_matrix, model_accuracy, AuditConfig, PredictionLog};
use crate::error::{Error, Result};
use crate::par::*;

const AUDIT_COLUMNS: [&str; 8] = [
    "class",
    "mean_recall_base",
    "mean_recall_comp",
    "norm_recall_diff",
    "t_stat",
    "df",
    "p_value",
    "significant",
];

/// Per-model class recall minus that model's overall accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassAccuracySample {
    pub class_id: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAuditRow {
    pub class_id: usize,
    pub mean_recall_base: f64,
    pub mean_recall_comp: f64,
    pub norm_recall_diff: f64,
    pub t_stat: f64,
    pub df: f64,
    pub p_value: f64,
    pub significant: bool,
}

/// Elementwise `class_recalls[k] - model_accs[k]`.
pub fn mean_shift(class_recalls: &[f64], model_accs: &[f64]) -> Result<Vec<f64>> {
    if class_recalls.len() != model_accs.len() {
        return Err(Error::LengthMismatch {
            left: class_recalls.len(),
            right: model_accs.len(),
        });
    }
    Ok(class_recalls
        .iter()
        .zip(model_accs)
        .map(|(c, m)| c - m)
        .collect())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Change in mean-shifted class recall from `base` to `comp`.
///
/// Positive values mean the class fares better under compression than the
/// top-line accuracy change would predict.
pub fn normalized_recall_difference(
    base: &ClassAccuracySample,
    comp: &ClassAccuracySample,
) -> Result<f64> {
    if base.values.is_empty() || comp.values.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(mean(&comp.values) - mean(&base.values))
}

/// Mean-shifted samples for every class of a log, plus raw per-class recalls.
pub fn shifted_samples(log: &PredictionLog) -> Result<(Vec<ClassAccuracySample>, Vec<Vec<f64>>)> {
    let recalls = class_recall_matrix(log)?;
    let top1 = model_accuracy(log, 1)?;
    let samples = recalls
        .iter()
        .enumerate()
        .map(|(class_id, r)| {
            Ok(ClassAccuracySample {
                class_id,
                values: mean_shift(r, &top1)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((samples, recalls))
}

/// Tests every class for a disparate change between a baseline and a
/// compressed population. Rows come back most-harmed first.
pub fn audit_classes(
    base_log: &PredictionLog,
    comp_log: &PredictionLog,
    config: &AuditConfig,
) -> Result<Vec<ClassAuditRow>> {
    config.validate()?;
    if !base_log.same_examples(comp_log) {
        return Err(Error::ExampleSetMismatch);
    }
    if base_log.num_classes() != comp_log.num_classes() {
        return Err(Error::Invalid(format!(
            "logs disagree on the class count ({} vs {})",
            base_log.num_classes(),
            comp_log.num_classes()
        )));
    }
    let (base, base_recall) = shifted_samples(base_log)?;
    let (comp, comp_recall) = shifted_samples(comp_log)?;
    let alpha = config.effective_alpha(base.len());

    let mut rows = (0..base.len())
        .into_par_iter()
        .map(|c| {
            let test = welch_t_test(&comp[c].values, &base[c].values)?;
            Ok(ClassAuditRow {
                class_id: c,
                mean_recall_base: mean(&base_recall[c]),
                mean_recall_comp: mean(&comp_recall[c]),
                norm_recall_diff: normalized_recall_difference(&base[c], &comp[c])?,
                t_stat: test.t_stat,
                df: test.df,
                p_value: test.p_value,
                significant: test.p_value <= alpha,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| {
        a.norm_recall_diff
            .total_cmp(&b.norm_recall_diff)
            .then(a.class_id.cmp(&b.class_id))
    });
    Ok(rows)
}

pub fn write_class_audit(rows: &[ClassAuditRow], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(AUDIT_COLUMNS)
        .map_err(|e| csv_error(path, e))?;
    for r in rows {
        writer
            .write_record([
                r.class_id.to_string(),
                format!("{:.6}", r.mean_recall_base),
                format!("{:.6}", r.mean_recall_comp),
                format!("{:.6}", r.norm_recall_diff),
                format!("{:.6}", r.t_stat),
                format!("{:.6}", r.df),
                format!("{:.6}", r.p_value),
                (r.significant as u8).to_string(),
            ])
            .map_err(|e| csv_error(path, e))?;
    }
    finish_csv(path, writer)
}

/// Reads a class-audit CSV. An empty file or a header-only file yields no rows.
pub fn read_class_audit(path: &Path) -> Result<Vec<ClassAuditRow>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(Vec::new());
    }
    let mut reader = csv::Reader::from_reader(bytes.as_slice());
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != AUDIT_COLUMNS {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            message: format!("expected header `{}`", AUDIT_COLUMNS.join(",")),
        });
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let err = |col: &str, v: &str| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("bad {col} `{v}`"),
        };
        let real = |i: usize| {
            let v = record.get(i).unwrap_or("").trim();
            v.parse::<f64>().map_err(|_| err(AUDIT_COLUMNS[i], v))
        };
        let class = record.get(0).unwrap_or("").trim();
        let flag = record.get(7).unwrap_or("").trim();
        rows.push(ClassAuditRow {
            class_id: class.parse().map_err(|_| err("class", class))?,
            mean_recall_base: real(1)?,
            mean_recall_comp: real(2)?,
            norm_recall_diff: real(3)?,
            t_stat: real(4)?,
            df: real(5)?,
            p_value: real(6)?,
            significant: match flag {
                "0" => false,
                "1" => true,
                _ => return Err(err("significant", flag)),
            },
        });
    }
    Ok(rows)
}
