//! End-to-end experiment: train a baseline and every compressed population in
//! the sweep, audit each against the baseline, and write the report bundle.
//!
//! Bundle layout under `out_dir`:
//!
//! ```text
//! config.json            resolved configuration
//! data/{train,test}.csv  synthetic splits (synthetic source only)
//! <label>/predictions.csv
//! <label>/class_audit.csv, pies.csv, attributes.csv, robustness.csv
//! summary.json, summary.txt
//! ```
//!
//! `<label>` is `baseline`, `prune_<t>` or the quantization method name.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data_model::io_util::write_atomic;
use crate::data_model::{
    model_accuracy, read_dataset, write_dataset, write_prediction_log, AuditConfig,
    CompressionMethod, CompressionSpec, LabeledDataset,
};
use crate::error::{Error, Result};
use crate::par::*;
use crate::pie_audit::{
    attribute_relative_representation, identify_pies, subset_accuracy, write_attribute_report,
    write_pie_report, AttributeShare, PieSet, SubsetAccuracy,
};
use crate::robustness::{
    hard_set_report, robustness_reports, write_robustness_report, CorruptionKind, RobustnessConfig,
    RobustnessRow,
};
use crate::stats_audit::{audit_classes, write_class_audit, ClassAuditRow};
use crate::synth::{minority_classes, synthesize, SynthLongTailSpec};
use crate::trainer::{
    quantize_population, train_population, Mlp, Population, PruneSchedule, QuantKind, TrainConfig,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    Synthetic(SynthLongTailSpec),
    Files { train: PathBuf, test: PathBuf },
}

/// Pruning window as fractions of the training steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PruneWindow {
    pub start: f64,
    pub end: f64,
    pub every: f64,
    pub exclude_layers: Vec<usize>,
}

impl Default for PruneWindow {
    fn default() -> Self {
        PruneWindow {
            start: 0.1,
            end: 0.5,
            every: 0.025,
            exclude_layers: Vec::new(),
        }
    }
}

impl PruneWindow {
    pub fn schedule(&self, target_sparsity: f64, steps: usize) -> PruneSchedule {
        let at = |f: f64| (f * steps as f64).round() as usize;
        let mut s = PruneSchedule::new(
            target_sparsity,
            at(self.start),
            at(self.end),
            at(self.every).max(1),
        );
        s.exclude_layers = self.exclude_layers.clone();
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    /// The nested `seed` is replaced by `seed + 1`.
    pub train: TrainConfig,
    pub prune: PruneWindow,
    /// Must contain exactly one `none` entry.
    pub sweep: Vec<CompressionSpec>,
    pub audit: AuditConfig,
    /// Empty disables the robustness stage.
    pub corruptions: Vec<CorruptionKind>,
    /// Optional extra held-out set evaluated without corruption.
    pub hard_set: Option<PathBuf>,
    /// Not written into the bundle's `config.json`, so bundles compare equal
    /// wherever they are written.
    #[serde(skip_serializing)]
    pub out_dir: PathBuf,
    /// Drives the synthetic data seed (`seed`), the training seeds (`seed + 1`
    /// onwards) and the corruption noise (`seed`).
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mut sweep = vec![CompressionSpec::NONE];
        sweep.extend([0.3, 0.5, 0.7, 0.9].map(|t| CompressionSpec {
            method: CompressionMethod::MagnitudePrune,
            sparsity: t,
        }));
        sweep.extend(
            [
                CompressionMethod::QuantFloat16,
                CompressionMethod::QuantDynamicInt8,
                CompressionMethod::QuantFixedInt8,
            ]
            .map(|method| CompressionSpec {
                method,
                sparsity: 0.0,
            }),
        );
        ExperimentConfig {
            dataset: DatasetSource::Synthetic(SynthLongTailSpec::default()),
            train: TrainConfig::default(),
            prune: PruneWindow::default(),
            sweep,
            audit: AuditConfig::default(),
            corruptions: CorruptionKind::ALL.to_vec(),
            hard_set: None,
            out_dir: PathBuf::from("compresslens-out"),
            seed: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Copy with the global seed pushed into the nested configs.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.train.seed = c.seed.wrapping_add(1);
        if let DatasetSource::Synthetic(spec) = &mut c.dataset {
            spec.seed = c.seed;
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.audit.validate()?;
        let baselines = self.sweep.iter().filter(|s| s.is_baseline()).count();
        if baselines != 1 {
            return Err(Error::Config(format!(
                "the sweep needs exactly one `none` entry, found {baselines}"
            )));
        }
        let mut labels = BTreeSet::new();
        for spec in &self.sweep {
            spec.validate().map_err(|e| Error::Config(e.to_string()))?;
            if !labels.insert(spec.label()) {
                return Err(Error::Config(format!(
                    "`{spec}` appears twice in the sweep"
                )));
            }
            if spec.method == CompressionMethod::MagnitudePrune {
                self.prune
                    .schedule(spec.sparsity, self.train.steps)
                    .validate(self.train.steps)?;
            }
        }
        if let DatasetSource::Synthetic(spec) = &self.dataset {
            spec.validate()?;
        }
        Ok(())
    }
}

/// Table-style roll-up for one population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryEntry {
    pub label: String,
    pub compression: CompressionSpec,
    /// Mean over models, percent.
    pub top1: f64,
    pub topk: f64,
    pub significant_classes: usize,
    /// Significant classes whose normalized recall difference is negative.
    pub harmed_classes: Vec<usize>,
    pub pies: usize,
    /// Baseline population evaluated on the PIE split.
    pub baseline_on_pies: Option<SubsetAccuracy>,
    /// Compressed population evaluated on the PIE split.
    pub compressed_on_pies: Option<SubsetAccuracy>,
    pub attributes: BTreeMap<String, AttributeShare>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub num_classes: usize,
    pub num_models: usize,
    pub topk: usize,
    pub train_class_counts: Vec<usize>,
    /// Classes strictly below the median training frequency.
    pub minority_classes: Vec<usize>,
    pub entries: Vec<SummaryEntry>,
}

impl Summary {
    pub fn entry(&self, label: &str) -> Option<&SummaryEntry> {
        self.entries.iter().find(|e| e.label == label)
    }
}

/// Everything a run produced, in memory. Maps are keyed by population label.
pub struct Experiment {
    pub summary: Summary,
    pub audits: BTreeMap<String, Vec<ClassAuditRow>>,
    pub pies: BTreeMap<String, PieSet>,
    pub robustness: BTreeMap<String, Vec<RobustnessRow>>,
    /// Baseline first, then the sweep order.
    pub populations: Vec<(CompressionSpec, Population)>,
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

struct Comparison {
    rows: Vec<ClassAuditRow>,
    pies: PieSet,
    baseline_on_pies: SubsetAccuracy,
    compressed_on_pies: SubsetAccuracy,
    attributes: BTreeMap<String, AttributeShare>,
}

fn load_data(config: &ExperimentConfig) -> Result<(LabeledDataset, LabeledDataset)> {
    match &config.dataset {
        DatasetSource::Synthetic(spec) => synthesize(spec),
        DatasetSource::Files { train, test } => Ok((read_dataset(train)?, read_dataset(test)?)),
    }
}

fn mean_percent(values: &[f64]) -> f64 {
    100.0 * values.iter().sum::<f64>() / values.len() as f64
}

fn compare(
    base: &Population,
    comp: &Population,
    test: &LabeledDataset,
    audit: &AuditConfig,
) -> Result<Comparison> {
    let rows = audit_classes(&base.log, &comp.log, audit).map_err(|e| e.in_stage("class audit"))?;
    let pies = identify_pies(&base.log, &comp.log).map_err(|e| e.in_stage("pie audit"))?;
    let baseline_on_pies = subset_accuracy(&base.log, &pies, 1)?;
    let compressed_on_pies = subset_accuracy(&comp.log, &pies, 1)?;
    let attributes = if pies.is_empty() || test.attribute_names().is_empty() {
        BTreeMap::new()
    } else {
        attribute_relative_representation(&pies, test)?
    };
    Ok(Comparison {
        rows,
        pies,
        baseline_on_pies,
        compressed_on_pies,
        attributes,
    })
}

/// Runs the whole experiment in memory. [`write_bundle`] persists it.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Experiment> {
    let config = config.resolved();
    config.validate()?;
    let (train, test) = load_data(&config).map_err(|e| e.in_stage("dataset"))?;
    let missing = test.missing_classes();
    if let Some(&class) = missing.first() {
        return Err(Error::MissingClassSupport { class }.in_stage("dataset"));
    }
    let tc = &config.train;
    let topk = config.audit.topk_for(train.num_classes());
    if topk > tc.topk_for(train.num_classes()) {
        return Err(Error::Config(format!(
            "audit topk {topk} exceeds the logged rank depth {}",
            tc.topk_for(train.num_classes())
        )));
    }

    log::info!("training baseline population");
    let base = train_population(&train, &test, tc, CompressionSpec::NONE, None)
        .map_err(|e| e.in_stage("train baseline"))?;

    let compressed: Vec<CompressionSpec> = config
        .sweep
        .iter()
        .copied()
        .filter(|s| !s.is_baseline())
        .collect();
    let populations = compressed
        .par_iter()
        .map(|spec| {
            log::info!("building population {}", spec.label());
            let stage = format!("train {}", spec.label());
            match QuantKind::from_method(spec.method) {
                Some(kind) => {
                    let models = quantize_population(
                        &base.models,
                        kind,
                        tc.representative_count,
                        train.head(tc.representative_count),
                    )
                    .map_err(|e| e.in_stage(stage.clone()))?;
                    let log = crate::trainer::prediction_log(
                        &models,
                        &test,
                        base.log.topk(),
                        &spec.label(),
                        *spec,
                    )
                    .map_err(|e| e.in_stage(stage))?;
                    Ok(Population { models, log })
                }
                None => {
                    let schedule = config.prune.schedule(spec.sparsity, tc.steps);
                    train_population(&train, &test, tc, *spec, Some(&schedule))
                        .map_err(|e| e.in_stage(stage))
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let comparisons = compressed
        .iter()
        .zip(&populations)
        .map(|(spec, pop)| {
            compare(&base, pop, &test, &config.audit)
                .map_err(|e| e.in_stage(format!("audit {}", spec.label())))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut robustness = BTreeMap::new();
    if !config.corruptions.is_empty() || config.hard_set.is_some() {
        let comp_models: Vec<(f64, &[Mlp])> = compressed
            .iter()
            .zip(&populations)
            .map(|(s, p)| (s.sparsity, p.models.as_slice()))
            .collect();
        let mut reports = if config.corruptions.is_empty() {
            vec![Vec::new(); comp_models.len()]
        } else {
            robustness_reports(
                &test,
                &config.corruptions,
                &base.models,
                &comp_models,
                topk,
                config.seed,
            )
            .map_err(|e| e.in_stage("robustness"))?
        };
        if let Some(path) = &config.hard_set {
            let hard = read_dataset(path).map_err(|e| e.in_stage("hard set"))?;
            for ((sparsity, models), rows) in comp_models.iter().zip(reports.iter_mut()) {
                let rc = RobustnessConfig {
                    topk,
                    seed: config.seed,
                    sparsity: *sparsity,
                };
                rows.push(
                    hard_set_report(&hard, "hard_set", &base.models, models, &rc)
                        .map_err(|e| e.in_stage("hard set"))?,
                );
            }
        }
        for (spec, rows) in compressed.iter().zip(reports) {
            robustness.insert(spec.label(), rows);
        }
    }

    let train_counts = train.class_counts();
    let minority: Vec<usize> = minority_classes(&train_counts)
        .iter()
        .enumerate()
        .filter_map(|(c, &m)| m.then_some(c))
        .collect();
    let entry = |spec: &CompressionSpec,
                 pop: &Population,
                 cmp: Option<&Comparison>|
     -> Result<SummaryEntry> {
        Ok(SummaryEntry {
            label: spec.label(),
            compression: *spec,
            top1: mean_percent(&model_accuracy(&pop.log, 1)?),
            topk: mean_percent(&model_accuracy(&pop.log, topk)?),
            significant_classes: cmp.map_or(0, |c| c.rows.iter().filter(|r| r.significant).count()),
            harmed_classes: cmp.map_or_else(Vec::new, |c| {
                let mut v: Vec<usize> = c
                    .rows
                    .iter()
                    .filter(|r| r.significant && r.norm_recall_diff < 0.0)
                    .map(|r| r.class_id)
                    .collect();
                v.sort_unstable();
                v
            }),
            pies: cmp.map_or(0, |c| c.pies.len()),
            baseline_on_pies: cmp.map(|c| c.baseline_on_pies),
            compressed_on_pies: cmp.map(|c| c.compressed_on_pies),
            attributes: cmp.map_or_else(BTreeMap::new, |c| c.attributes.clone()),
        })
    };
    let mut entries = vec![entry(&CompressionSpec::NONE, &base, None)?];
    for ((spec, pop), cmp) in compressed.iter().zip(&populations).zip(&comparisons) {
        entries.push(entry(spec, pop, Some(cmp))?);
    }
    let summary = Summary {
        num_classes: train.num_classes(),
        num_models: tc.population_size,
        topk,
        train_class_counts: train_counts,
        minority_classes: minority,
        entries,
    };

    let mut audits = BTreeMap::new();
    let mut pies = BTreeMap::new();
    for (spec, cmp) in compressed.iter().zip(comparisons) {
        audits.insert(spec.label(), cmp.rows);
        pies.insert(spec.label(), cmp.pies);
    }
    let mut all = vec![(CompressionSpec::NONE, base)];
    all.extend(compressed.into_iter().zip(populations));
    Ok(Experiment {
        summary,
        audits,
        pies,
        robustness,
        populations: all,
        train,
        test,
    })
}

/// Plain-text rendering of the summary table.
pub fn render_summary(summary: &Summary) -> String {
    let pct = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{:.2}", 100.0 * x));
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<20} {:>8} {:>8} {:>6} {:>6} {:>9} {:>9}",
        "population",
        "top1",
        format!("top{}", summary.topk),
        "signif",
        "pies",
        "pie_top1",
        "rest_top1"
    );
    for e in &summary.entries {
        let b = e.baseline_on_pies.as_ref();
        let _ = writeln!(
            out,
            "{:<20} {:>8.2} {:>8.2} {:>6} {:>6} {:>9} {:>9}",
            e.label,
            e.top1,
            e.topk,
            e.significant_classes,
            e.pies,
            pct(b.and_then(|s| s.pie)),
            pct(b.and_then(|s| s.non_pie)),
        );
    }
    out
}

/// Writes the report bundle for a finished run into `config.out_dir`.
pub fn write_bundle(config: &ExperimentConfig, output: &Experiment) -> Result<()> {
    let out = &config.out_dir;
    let stage = |e: Error| e.in_stage("write bundle");
    let mut json = serde_json::to_string_pretty(&config.resolved())?;
    json.push('\n');
    write_atomic(&out.join("config.json"), json.as_bytes()).map_err(stage)?;
    if matches!(config.dataset, DatasetSource::Synthetic(_)) {
        write_dataset(&output.train, &out.join("data").join("train.csv")).map_err(stage)?;
        write_dataset(&output.test, &out.join("data").join("test.csv")).map_err(stage)?;
    }
    for (spec, pop) in &output.populations {
        let dir = out.join(spec.label());
        write_prediction_log(&pop.log, &dir.join("predictions.csv")).map_err(stage)?;
        let label = spec.label();
        if let Some(rows) = output.audits.get(&label) {
            write_class_audit(rows, &dir.join("class_audit.csv")).map_err(stage)?;
        }
        if let Some(pies) = output.pies.get(&label) {
            write_pie_report(pies, &pop.log, &dir.join("pies.csv")).map_err(stage)?;
        }
        if let Some(e) = output
            .summary
            .entry(&label)
            .filter(|e| !e.attributes.is_empty())
        {
            write_attribute_report(&e.attributes, &dir.join("attributes.csv")).map_err(stage)?;
        }
        if let Some(rows) = output.robustness.get(&label) {
            write_robustness_report(rows, &dir.join("robustness.csv")).map_err(stage)?;
        }
    }
    let mut json = serde_json::to_string_pretty(&output.summary)?;
    json.push('\n');
    write_atomic(&out.join("summary.json"), json.as_bytes()).map_err(stage)?;
    write_atomic(
        &out.join("summary.txt"),
        render_summary(&output.summary).as_bytes(),
    )
    .map_err(stage)
}

/// Runs the experiment and writes its bundle.
pub fn run_pipeline(config: &ExperimentConfig) -> Result<Summary> {
    let output = run_experiment(config)?;
    write_bundle(config, &output)?;
    Ok(output.summary)
}
