//! Pruning Identified Exemplars: examples whose modal prediction changes
//! between a baseline population and a compressed one.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data_model::io_util::{csv_error, finish_csv};
use crate::data_model::{CompressionSpec, LabeledDataset, PredictionLog};
use crate::error::{Error, Result};
use crate::par::*;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModalLabelRecord {
    pub example_id: u64,
    pub modal_base: usize,
    pub modal_comp: usize,
    pub counts_base: BTreeMap<usize, usize>,
    pub counts_comp: BTreeMap<usize, usize>,
}

impl ModalLabelRecord {
    pub fn is_pie(&self) -> bool {
        self.modal_base != self.modal_comp
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PieSet {
    /// One record per example, ascending example id.
    pub records: Vec<ModalLabelRecord>,
    pub pie_ids: BTreeSet<u64>,
    pub compression: CompressionSpec,
}

impl PieSet {
    pub fn len(&self) -> usize {
        self.pie_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pie_ids.is_empty()
    }

    pub fn contains(&self, example_id: u64) -> bool {
        self.pie_ids.contains(&example_id)
    }
}

fn histogram(votes: impl IntoIterator<Item = usize>) -> BTreeMap<usize, usize> {
    let mut counts = BTreeMap::new();
    for v in votes {
        *counts.entry(v).or_insert(0) += 1;
    }
    counts
}

fn mode_of(counts: &BTreeMap<usize, usize>) -> Option<usize> {
    // BTreeMap iterates labels ascending, so the first maximum is the lowest label.
    let mut best: Option<(usize, usize)> = None;
    for (&label, &n) in counts {
        if best.is_none_or(|(_, m)| n > m) {
            best = Some((label, n));
        }
    }
    best.map(|(label, _)| label)
}

/// Most frequent label; ties go to the lowest label.
pub fn modal_label(votes: &[usize]) -> Result<usize> {
    mode_of(&histogram(votes.iter().copied())).ok_or(Error::EmptyVotes)
}

/// Compares rank-1 modal labels of two populations on every example.
/// True labels are never consulted.
pub fn identify_pies(base_log: &PredictionLog, comp_log: &PredictionLog) -> Result<PieSet> {
    if !base_log.same_examples(comp_log) {
        return Err(Error::ExampleSetMismatch);
    }
    let records: Vec<ModalLabelRecord> = (0..base_log.num_examples())
        .into_par_iter()
        .map(|i| {
            let counts_base = histogram((0..base_log.num_models()).map(|m| base_log.top1(m, i)));
            let counts_comp = histogram((0..comp_log.num_models()).map(|m| comp_log.top1(m, i)));
            ModalLabelRecord {
                example_id: base_log.example_ids()[i],
                modal_base: mode_of(&counts_base).expect("log has at least one model"),
                modal_comp: mode_of(&counts_comp).expect("log has at least one model"),
                counts_base,
                counts_comp,
            }
        })
        .collect();
    let pie_ids = records
        .iter()
        .filter(|r| r.is_pie())
        .map(|r| r.example_id)
        .collect();
    Ok(PieSet {
        records,
        pie_ids,
        compression: comp_log.compression(),
    })
}

/// Mean-over-models top-k accuracy on the PIE subset, the rest, and everything.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsetAccuracy {
    /// `None` when there are no PIEs.
    pub pie: Option<f64>,
    /// `None` when every example is a PIE.
    pub non_pie: Option<f64>,
    pub all: f64,
    pub pie_count: usize,
    pub non_pie_count: usize,
}

/// `(pie, non_pie, all)` accuracy of one model; an empty subset gives `None`.
pub type SubsetSplit = (Option<f64>, Option<f64>, f64);

/// Per-model top-k accuracy split by PIE membership.
pub fn subset_accuracy_per_model(
    eval_log: &PredictionLog,
    pies: &PieSet,
    k: usize,
) -> Result<Vec<SubsetSplit>> {
    if pies
        .pie_ids
        .iter()
        .any(|&id| eval_log.index_of(id).is_none())
    {
        return Err(Error::ExampleSetMismatch);
    }
    let in_pie: Vec<bool> = eval_log
        .example_ids()
        .iter()
        .map(|id| pies.contains(*id))
        .collect();
    let n_pie = in_pie.iter().filter(|&&p| p).count();
    let n_rest = in_pie.len() - n_pie;
    let on = |want: bool| crate::data_model::accuracy_on(eval_log, k, |i| in_pie[i] == want);
    let pie = on(true)?;
    let rest = on(false)?;
    let all = crate::data_model::model_accuracy(eval_log, k)?;
    Ok((0..eval_log.num_models())
        .map(|m| {
            (
                (n_pie > 0).then_some(pie[m]),
                (n_rest > 0).then_some(rest[m]),
                all[m],
            )
        })
        .collect())
}

pub fn subset_accuracy(
    eval_log: &PredictionLog,
    pies: &PieSet,
    k: usize,
) -> Result<SubsetAccuracy> {
    let per_model = subset_accuracy_per_model(eval_log, pies, k)?;
    let n = per_model.len() as f64;
    let avg = |pick: fn(&SubsetSplit) -> Option<f64>| {
        per_model
            .iter()
            .map(pick)
            .collect::<Option<Vec<f64>>>()
            .map(|v| v.iter().sum::<f64>() / n)
    };
    let pie_count = pies.len();
    Ok(SubsetAccuracy {
        pie: avg(|r| r.0),
        non_pie: avg(|r| r.1),
        all: per_model.iter().map(|r| r.2).sum::<f64>() / n,
        pie_count,
        non_pie_count: eval_log.num_examples() - pie_count,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttributeShare {
    pub share_dataset: f64,
    pub share_pie: f64,
    pub relative_representation: f64,
}

/// Share of PIEs carrying each attribute divided by that attribute's share
/// of the whole dataset. Attributes absent from the dataset are omitted.
pub fn attribute_relative_representation(
    pies: &PieSet,
    dataset: &LabeledDataset,
) -> Result<BTreeMap<String, AttributeShare>> {
    if pies.is_empty() {
        return Err(Error::EmptyPieSet);
    }
    let by_id: BTreeMap<u64, usize> = dataset
        .examples()
        .iter()
        .enumerate()
        .map(|(i, e)| (e.example_id, i))
        .collect();
    let pie_rows = pies
        .pie_ids
        .iter()
        .map(|id| by_id.get(id).copied().ok_or(Error::ExampleSetMismatch))
        .collect::<Result<Vec<_>>>()?;
    let total = dataset.len() as f64;
    let mut out = BTreeMap::new();
    for attr in dataset.attribute_names() {
        let in_dataset = dataset.examples().iter().filter(|e| e.has(&attr)).count();
        if in_dataset == 0 {
            continue;
        }
        let in_pie = pie_rows
            .iter()
            .filter(|&&i| dataset.examples()[i].has(&attr))
            .count();
        let share_dataset = in_dataset as f64 / total;
        let share_pie = in_pie as f64 / pie_rows.len() as f64;
        out.insert(
            attr,
            AttributeShare {
                share_dataset,
                share_pie,
                relative_representation: share_pie / share_dataset,
            },
        );
    }
    Ok(out)
}

/// `example_id,true_label,modal_base,modal_comp,is_pie`, one row per example.
pub fn write_pie_report(pies: &PieSet, log: &PredictionLog, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record([
            "example_id",
            "true_label",
            "modal_base",
            "modal_comp",
            "is_pie",
        ])
        .map_err(|e| csv_error(path, e))?;
    for r in &pies.records {
        let truth = log
            .index_of(r.example_id)
            .map(|i| log.truth()[i])
            .ok_or(Error::ExampleSetMismatch)?;
        writer
            .write_record([
                r.example_id.to_string(),
                truth.to_string(),
                r.modal_base.to_string(),
                r.modal_comp.to_string(),
                (r.is_pie() as u8).to_string(),
            ])
            .map_err(|e| csv_error(path, e))?;
    }
    finish_csv(path, writer)
}

/// `attribute,share_dataset,share_pie,relative_representation`.
pub fn write_attribute_report(
    shares: &BTreeMap<String, AttributeShare>,
    path: &Path,
) -> Result<()> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record([
            "attribute",
            "share_dataset",
            "share_pie",
            "relative_representation",
        ])
        .map_err(|e| csv_error(path, e))?;
    for (name, s) in shares {
        writer
            .write_record([
                name.clone(),
                format!("{:.6}", s.share_dataset),
                format!("{:.6}", s.share_pie),
                format!("{:.6}", s.relative_representation),
            ])
            .map_err(|e| csv_error(path, e))?;
    }
    finish_csv(path, writer)
}
