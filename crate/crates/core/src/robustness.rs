//! Synthetic corruptions at five severities and accuracy normalized against
//! the baseline population on the same corruption.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::data_model::io_util::{csv_error, finish_csv};
use crate::data_model::{ExampleRecord, FeatureRange, LabeledDataset, Layout};
use crate::error::{Error, Result};
use crate::par::*;
use crate::trainer::Mlp;

pub const SEVERITIES: std::ops::RangeInclusive<u8> = 1..=5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    GaussianNoise,
    ShotNoise,
    ImpulseNoise,
    Brightness,
    Contrast,
    Pixelate,
}

impl CorruptionKind {
    pub const ALL: [CorruptionKind; 6] = [
        CorruptionKind::GaussianNoise,
        CorruptionKind::ShotNoise,
        CorruptionKind::ImpulseNoise,
        CorruptionKind::Brightness,
        CorruptionKind::Contrast,
        CorruptionKind::Pixelate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CorruptionKind::GaussianNoise => "gaussian_noise",
            CorruptionKind::ShotNoise => "shot_noise",
            CorruptionKind::ImpulseNoise => "impulse_noise",
            CorruptionKind::Brightness => "brightness",
            CorruptionKind::Contrast => "contrast",
            CorruptionKind::Pixelate => "pixelate",
        }
    }

    /// Severity parameter for levels 1 to 5.
    fn table(self) -> [f64; 5] {
        match self {
            // noise std as a fraction of the coordinate range
            CorruptionKind::GaussianNoise => [0.04, 0.08, 0.12, 0.18, 0.26],
            // photon count scale
            CorruptionKind::ShotNoise => [500.0, 250.0, 100.0, 50.0, 25.0],
            // fraction of coordinates hit
            CorruptionKind::ImpulseNoise => [0.01, 0.02, 0.05, 0.10, 0.17],
            // additive shift as a fraction of the coordinate range
            CorruptionKind::Brightness => [0.05, 0.10, 0.15, 0.22, 0.30],
            // factor applied to deviations from the example mean
            CorruptionKind::Contrast => [0.75, 0.6, 0.45, 0.3, 0.15],
            // block edge length
            CorruptionKind::Pixelate => [2.0, 3.0, 4.0, 6.0, 8.0],
        }
    }

    pub fn parameter(self, severity: u8) -> Result<f64> {
        if !SEVERITIES.contains(&severity) {
            return Err(Error::Invalid(format!(
                "severity {severity} must lie in 1..=5"
            )));
        }
        Ok(self.table()[severity as usize - 1])
    }

    fn stream_tag(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for CorruptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CorruptionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CorruptionKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown corruption `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    pub severity: u8,
    pub seed: u64,
}

/// Dataset-level facts a corruption needs: the observed feature range and,
/// for pixelation, the 2D layout.
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionContext {
    pub range: FeatureRange,
    pub layout: Option<Layout>,
}

impl CorruptionContext {
    pub fn from_dataset(dataset: &LabeledDataset) -> Self {
        CorruptionContext {
            range: dataset.feature_range(),
            layout: dataset.layout(),
        }
    }
}

fn example_rng(spec: &CorruptionSpec, example_id: u64) -> ChaCha8Rng {
    let tag =
        (spec.kind.stream_tag() * 8 + spec.severity as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ tag);
    rng.set_stream(example_id);
    rng
}

/// Applies `kind` with an explicit parameter value. Results are clamped to
/// the context's per-coordinate range.
pub fn corrupt_with_parameter(
    features: &[f64],
    kind: CorruptionKind,
    parameter: f64,
    ctx: &CorruptionContext,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    let range = &ctx.range;
    let mut out = features.to_vec();
    match kind {
        CorruptionKind::GaussianNoise => {
            for (j, v) in out.iter_mut().enumerate() {
                let sd = parameter * range.width(j);
                if sd > 0.0 {
                    *v += Normal::new(0.0, sd).expect("positive sd").sample(rng);
                }
            }
        }
        CorruptionKind::ShotNoise => {
            for (j, v) in out.iter_mut().enumerate() {
                let width = range.width(j);
                if width <= 0.0 {
                    continue;
                }
                let unit = (range.clamp(j, *v) - range.min[j]) / width;
                let rate = unit * parameter;
                let counts = if rate > 0.0 {
                    Poisson::new(rate).expect("positive rate").sample(rng)
                } else {
                    0.0
                };
                *v = range.min[j] + counts / parameter * width;
            }
        }
        CorruptionKind::ImpulseNoise => {
            for (j, v) in out.iter_mut().enumerate() {
                if rng.gen_bool(parameter) {
                    *v = if rng.gen_bool(0.5) {
                        range.max[j]
                    } else {
                        range.min[j]
                    };
                }
            }
        }
        CorruptionKind::Brightness => {
            for (j, v) in out.iter_mut().enumerate() {
                *v += parameter * range.width(j);
            }
        }
        CorruptionKind::Contrast => {
            let mean = out.iter().sum::<f64>() / out.len().max(1) as f64;
            out.iter_mut()
                .for_each(|v| *v = mean + parameter * (*v - mean));
        }
        CorruptionKind::Pixelate => {
            let layout = ctx.layout.ok_or(Error::LayoutRequired)?;
            let block = parameter as usize;
            for by in (0..layout.height).step_by(block) {
                for bx in (0..layout.width).step_by(block) {
                    let ys = by..(by + block).min(layout.height);
                    let xs = bx..(bx + block).min(layout.width);
                    let cells: Vec<usize> = ys
                        .flat_map(|y| xs.clone().map(move |x| y * layout.width + x))
                        .collect();
                    let avg = cells.iter().map(|&i| features[i]).sum::<f64>() / cells.len() as f64;
                    cells.iter().for_each(|&i| out[i] = avg);
                }
            }
        }
    }
    for (j, v) in out.iter_mut().enumerate() {
        *v = range.clamp(j, *v);
    }
    Ok(out)
}

/// Deterministic function of `(example, spec)` given the context.
pub fn corrupt(
    example: &ExampleRecord,
    spec: &CorruptionSpec,
    ctx: &CorruptionContext,
) -> Result<ExampleRecord> {
    if example.features.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    if example.features.len() != ctx.range.min.len() {
        return Err(Error::Shape(format!(
            "example has {} features, range covers {}",
            example.features.len(),
            ctx.range.min.len()
        )));
    }
    let parameter = spec.kind.parameter(spec.severity)?;
    let mut rng = example_rng(spec, example.example_id);
    Ok(ExampleRecord {
        features: corrupt_with_parameter(&example.features, spec.kind, parameter, ctx, &mut rng)?,
        ..example.clone()
    })
}

pub fn corrupt_dataset(
    dataset: &LabeledDataset,
    spec: &CorruptionSpec,
    ctx: &CorruptionContext,
) -> Result<LabeledDataset> {
    let examples = dataset
        .examples()
        .iter()
        .map(|e| corrupt(e, spec, ctx))
        .collect::<Result<Vec<_>>>()?;
    let mut out = LabeledDataset::new(examples, dataset.num_classes())?;
    if let Some(layout) = dataset.layout() {
        out = out.with_layout(layout)?;
    }
    Ok(out)
}

/// Signed percent change of `acc_comp` relative to `acc_base`.
pub fn relative_accuracy(acc_comp: f64, acc_base: f64) -> Result<f64> {
    if acc_base.is_nan() || acc_base <= 0.0 {
        return Err(Error::ZeroBaseline(acc_base));
    }
    Ok(100.0 * (acc_comp - acc_base) / acc_base)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub corruption: String,
    pub sparsity: f64,
    /// Percent.
    pub top1_abs: f64,
    pub topk_abs: f64,
    pub top1_norm: f64,
    pub topk_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessConfig {
    pub topk: usize,
    pub seed: u64,
    /// Sparsity recorded on the rows for the compressed population.
    pub sparsity: f64,
}

/// Mean top-1 and top-k accuracy in percent across `models` on `examples`.
pub fn population_accuracy(
    models: &[Mlp],
    examples: &[ExampleRecord],
    topk: usize,
) -> Result<(f64, f64)> {
    if models.is_empty() || examples.is_empty() {
        return Err(Error::Invalid(
            "need at least one model and one example".into(),
        ));
    }
    let per_model = models
        .par_iter()
        .map(|m| {
            let mut hits = (0usize, 0usize);
            for ex in examples {
                let ranked = m.predict_topk(&ex.features, topk)?;
                hits.0 += (ranked[0] == ex.true_label) as usize;
                hits.1 += ranked.contains(&ex.true_label) as usize;
            }
            Ok(hits)
        })
        .collect::<Result<Vec<_>>>()?;
    let denom = (models.len() * examples.len()) as f64;
    let top1 = per_model.iter().map(|h| h.0).sum::<usize>() as f64 / denom;
    let topk_acc = per_model.iter().map(|h| h.1).sum::<usize>() as f64 / denom;
    Ok((100.0 * top1, 100.0 * topk_acc))
}

fn normalized_row(
    corruption: String,
    sparsity: f64,
    base: (f64, f64),
    comp: (f64, f64),
) -> Result<RobustnessRow> {
    Ok(RobustnessRow {
        corruption,
        sparsity,
        top1_abs: comp.0,
        topk_abs: comp.1,
        top1_norm: relative_accuracy(comp.0, base.0)?,
        topk_norm: relative_accuracy(comp.1, base.1)?,
    })
}

/// One row per corruption kind: the compressed population's accuracy averaged
/// over severities 1-5 and models, and its change relative to the baseline
/// population on the same corrupted inputs.
pub fn robustness_report(
    dataset: &LabeledDataset,
    kinds: &[CorruptionKind],
    base_models: &[Mlp],
    comp_models: &[Mlp],
    config: &RobustnessConfig,
) -> Result<Vec<RobustnessRow>> {
    let mut reports = robustness_reports(
        dataset,
        kinds,
        base_models,
        &[(config.sparsity, comp_models)],
        config.topk,
        config.seed,
    )?;
    Ok(reports.pop().unwrap_or_default())
}

/// `robustness_report` for several compressed populations at once. Corrupted
/// inputs and baseline accuracies are computed a single time.
pub fn robustness_reports(
    dataset: &LabeledDataset,
    kinds: &[CorruptionKind],
    base_models: &[Mlp],
    compressed: &[(f64, &[Mlp])],
    topk: usize,
    seed: u64,
) -> Result<Vec<Vec<RobustnessRow>>> {
    let ctx = CorruptionContext::from_dataset(dataset);
    let jobs: Vec<(CorruptionKind, u8)> = kinds
        .iter()
        .flat_map(|&k| SEVERITIES.map(move |s| (k, s)))
        .collect();
    let corrupted = jobs
        .par_iter()
        .map(|&(kind, severity)| {
            let spec = CorruptionSpec {
                kind,
                severity,
                seed,
            };
            let set = corrupt_dataset(dataset, &spec, &ctx)?;
            let base = population_accuracy(base_models, set.examples(), topk)?;
            Ok((set, base))
        })
        .collect::<Result<Vec<_>>>()?;

    let levels = SEVERITIES.count();
    let mean = |v: &[(f64, f64)]| {
        let n = v.len() as f64;
        (
            v.iter().map(|a| a.0).sum::<f64>() / n,
            v.iter().map(|a| a.1).sum::<f64>() / n,
        )
    };
    compressed
        .iter()
        .map(|&(sparsity, models)| {
            let comp = corrupted
                .par_iter()
                .map(|(set, _)| population_accuracy(models, set.examples(), topk))
                .collect::<Result<Vec<_>>>()?;
            kinds
                .iter()
                .enumerate()
                .map(|(i, kind)| {
                    let range = i * levels..(i + 1) * levels;
                    let base: Vec<(f64, f64)> =
                        corrupted[range.clone()].iter().map(|c| c.1).collect();
                    normalized_row(kind.to_string(), sparsity, mean(&base), mean(&comp[range]))
                })
                .collect()
        })
        .collect()
}

/// Same metrics on a user-supplied held-out set evaluated without corruption.
pub fn hard_set_report(
    hard_set: &LabeledDataset,
    label: &str,
    base_models: &[Mlp],
    comp_models: &[Mlp],
    config: &RobustnessConfig,
) -> Result<RobustnessRow> {
    let base = population_accuracy(base_models, hard_set.examples(), config.topk)?;
    let comp = population_accuracy(comp_models, hard_set.examples(), config.topk)?;
    normalized_row(label.to_string(), config.sparsity, base, comp)
}

/// Absolute accuracy of one population on one corruption, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyEntry {
    pub corruption: String,
    pub sparsity: f64,
    pub top1: f64,
    pub topk: f64,
}

/// Normalizes a table of absolute accuracies. Each corruption's baseline is
/// its `sparsity == 0` entry; output follows input order.
pub fn normalize_accuracy_table(entries: &[AccuracyEntry]) -> Result<Vec<RobustnessRow>> {
    let mut baselines: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for e in entries.iter().filter(|e| e.sparsity == 0.0) {
        if baselines
            .insert(e.corruption.as_str(), (e.top1, e.topk))
            .is_some()
        {
            return Err(Error::Invalid(format!(
                "two baseline rows for corruption `{}`",
                e.corruption
            )));
        }
    }
    entries
        .iter()
        .map(|e| {
            let base = baselines.get(e.corruption.as_str()).ok_or_else(|| {
                Error::Invalid(format!("no sparsity-0 baseline for `{}`", e.corruption))
            })?;
            normalized_row(e.corruption.clone(), e.sparsity, *base, (e.top1, e.topk))
        })
        .collect()
}

pub fn write_robustness_report(rows: &[RobustnessRow], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record([
            "corruption",
            "sparsity",
            "top1_abs",
            "topk_abs",
            "top1_norm",
            "topk_norm",
        ])
        .map_err(|e| csv_error(path, e))?;
    for r in rows {
        writer
            .write_record([
                r.corruption.clone(),
                r.sparsity.to_string(),
                format!("{:.2}", r.top1_abs),
                format!("{:.2}", r.topk_abs),
                format!("{:.2}", r.top1_norm),
                format!("{:.2}", r.topk_norm),
            ])
            .map_err(|e| csv_error(path, e))?;
    }
    finish_csv(path, writer)
}

/// Reads `corruption,sparsity,top1,topk` absolute-accuracy rows.
pub fn read_accuracy_table(path: &Path) -> Result<Vec<AccuracyEntry>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let want = ["corruption", "sparsity", "top1", "topk"];
    if headers.iter().collect::<Vec<_>>() != want {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            message: format!("expected header `{}`", want.join(",")),
        });
    }
    reader
        .records()
        .map(|record| {
            let record = record.map_err(|e| csv_error(path, e))?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let real = |i: usize| {
                let v = record.get(i).unwrap_or("").trim();
                v.parse::<f64>().map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: format!("bad {} `{v}`", want[i]),
                })
            };
            Ok(AccuracyEntry {
                corruption: record.get(0).unwrap_or("").trim().to_string(),
                sparsity: real(1)?,
                top1: real(2)?,
                topk: real(3)?,
            })
        })
        .collect()
}
