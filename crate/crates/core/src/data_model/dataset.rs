use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::io_util::{csv_error, finish_csv, write_atomic};
use crate::error::{Error, Result};

const ATTR_PREFIX: &str = "attr_";

#[derive(Debug, Clone, PartialEq)]
pub struct ExampleRecord {
    pub example_id: u64,
    pub features: Vec<f64>,
    pub true_label: usize,
    /// Named boolean flags such as `minority` or `noisy`.
    pub attributes: BTreeMap<String, bool>,
}

impl ExampleRecord {
    pub fn new(example_id: u64, features: Vec<f64>, true_label: usize) -> Self {
        ExampleRecord {
            example_id,
            features,
            true_label,
            attributes: BTreeMap::new(),
        }
    }

    pub fn has(&self, attribute: &str) -> bool {
        self.attributes.get(attribute).copied().unwrap_or(false)
    }
}

/// 2D arrangement of the feature vector, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub height: usize,
    pub width: usize,
}

/// Contents of the JSON sidecar that accompanies a dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub num_classes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_names: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    examples: Vec<ExampleRecord>,
    num_classes: usize,
    class_names: Option<Vec<String>>,
    layout: Option<Layout>,
}

impl LabeledDataset {
    pub fn new(examples: Vec<ExampleRecord>, num_classes: usize) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::Invalid("num_classes must be positive".into()));
        }
        let dim = examples.first().map(|e| e.features.len()).unwrap_or(0);
        let attr_names: Option<BTreeSet<&String>> =
            examples.first().map(|e| e.attributes.keys().collect());
        let mut seen = BTreeSet::new();
        for ex in &examples {
            if ex.features.len() != dim {
                return Err(Error::Invalid(format!(
                    "example {} has {} features, expected {dim}",
                    ex.example_id,
                    ex.features.len()
                )));
            }
            if ex.true_label >= num_classes {
                return Err(Error::Invalid(format!(
                    "example {} has label {} but there are only {num_classes} classes",
                    ex.example_id, ex.true_label
                )));
            }
            if !seen.insert(ex.example_id) {
                return Err(Error::Invalid(format!(
                    "duplicate example_id {}",
                    ex.example_id
                )));
            }
            if attr_names.as_ref() != Some(&ex.attributes.keys().collect()) {
                return Err(Error::Invalid(format!(
                    "example {} carries a different attribute set",
                    ex.example_id
                )));
            }
            if ex.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::Invalid(format!(
                    "example {} has a non-finite feature",
                    ex.example_id
                )));
            }
        }
        Ok(LabeledDataset {
            examples,
            num_classes,
            class_names: None,
            layout: None,
        })
    }

    pub fn with_layout(mut self, layout: Layout) -> Result<Self> {
        if layout.height * layout.width != self.dim() {
            return Err(Error::Invalid(format!(
                "layout {}x{} does not match {} features",
                layout.height,
                layout.width,
                self.dim()
            )));
        }
        self.layout = Some(layout);
        Ok(self)
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.num_classes {
            return Err(Error::Invalid(format!(
                "{} class names for {} classes",
                names.len(),
                self.num_classes
            )));
        }
        self.class_names = Some(names);
        Ok(self)
    }

    pub fn examples(&self) -> &[ExampleRecord] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.examples.first().map(|e| e.features.len()).unwrap_or(0)
    }

    pub fn layout(&self) -> Option<Layout> {
        self.layout
    }

    pub fn class_names(&self) -> Option<&[String]> {
        self.class_names.as_deref()
    }

    pub fn attribute_names(&self) -> Vec<String> {
        self.examples
            .first()
            .map(|e| e.attributes.keys().cloned().collect())
            .unwrap_or_default()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for ex in &self.examples {
            counts[ex.true_label] += 1;
        }
        counts
    }

    /// Classes without a single example. Training splits should return an empty list.
    pub fn missing_classes(&self) -> Vec<usize> {
        self.class_counts()
            .iter()
            .enumerate()
            .filter(|(_, &n)| n == 0)
            .map(|(c, _)| c)
            .collect()
    }

    /// The first `n` examples in file order, e.g. for quantization calibration.
    pub fn head(&self, n: usize) -> &[ExampleRecord] {
        &self.examples[..n.min(self.examples.len())]
    }

    pub fn feature_range(&self) -> FeatureRange {
        FeatureRange::observe(self.examples.iter().map(|e| e.features.as_slice()))
    }

    pub fn meta(&self) -> DatasetMeta {
        DatasetMeta {
            num_classes: self.num_classes,
            height: self.layout.map(|l| l.height),
            width: self.layout.map(|l| l.width),
            class_names: self.class_names.clone(),
        }
    }
}

/// Observed per-coordinate minimum and maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRange {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl FeatureRange {
    pub fn observe<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let mut range: Option<FeatureRange> = None;
        for row in rows {
            match range.as_mut() {
                None => {
                    range = Some(FeatureRange {
                        min: row.to_vec(),
                        max: row.to_vec(),
                    })
                }
                Some(r) => {
                    for (j, &v) in row.iter().enumerate() {
                        r.min[j] = r.min[j].min(v);
                        r.max[j] = r.max[j].max(v);
                    }
                }
            }
        }
        range.unwrap_or(FeatureRange {
            min: Vec::new(),
            max: Vec::new(),
        })
    }

    pub fn uniform(dim: usize, min: f64, max: f64) -> Self {
        FeatureRange {
            min: vec![min; dim],
            max: vec![max; dim],
        }
    }

    pub fn width(&self, j: usize) -> f64 {
        self.max[j] - self.min[j]
    }

    pub fn clamp(&self, j: usize, v: f64) -> f64 {
        v.clamp(self.min[j], self.max[j])
    }
}

fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Writes `<path>` as CSV and the metadata sidecar next to it (`.json`).
pub fn write_dataset(dataset: &LabeledDataset, path: &Path) -> Result<()> {
    let attrs = dataset.attribute_names();
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["example_id".to_string(), "true_label".to_string()];
    header.extend(attrs.iter().map(|a| format!("{ATTR_PREFIX}{a}")));
    header.extend((0..dataset.dim()).map(|j| format!("f{j}")));
    writer
        .write_record(&header)
        .map_err(|e| csv_error(path, e))?;
    for ex in dataset.examples() {
        let mut row = Vec::with_capacity(header.len());
        row.push(ex.example_id.to_string());
        row.push(ex.true_label.to_string());
        row.extend(attrs.iter().map(|a| (ex.has(a) as u8).to_string()));
        row.extend(ex.features.iter().map(|v| v.to_string()));
        writer.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    finish_csv(path, writer)?;
    let meta = serde_json::to_vec_pretty(&dataset.meta())?;
    write_atomic(&sidecar_path(path), &meta)
}

pub fn read_dataset(path: &Path) -> Result<LabeledDataset> {
    let meta_path = sidecar_path(path);
    let meta_bytes = fs::read(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: DatasetMeta = serde_json::from_slice(&meta_bytes).map_err(|e| Error::Schema {
        path: meta_path.clone(),
        message: e.to_string(),
    })?;

    let mut reader = csv::ReaderBuilder::new()
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let schema_err = |message: String| Error::Schema {
        path: path.to_path_buf(),
        message,
    };
    if headers.get(0) != Some("example_id") {
        return Err(schema_err("first column must be `example_id`".into()));
    }
    if headers.get(1) != Some("true_label") {
        return Err(schema_err("second column must be `true_label`".into()));
    }
    let mut attrs = Vec::new();
    let mut feature_start = 2;
    for name in headers.iter().skip(2) {
        match name.strip_prefix(ATTR_PREFIX) {
            Some(attr) => {
                attrs.push(attr.to_string());
                feature_start += 1;
            }
            None => break,
        }
    }
    for (j, name) in headers.iter().skip(feature_start).enumerate() {
        if name != format!("f{j}") {
            return Err(schema_err(format!(
                "column `{name}`: expected feature column `f{j}`"
            )));
        }
    }

    let mut examples = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let field = |i: usize| record.get(i).unwrap_or("").trim();
        let example_id: u64 = field(0)
            .parse()
            .map_err(|_| parse_err(format!("bad example_id `{}`", field(0))))?;
        let true_label: usize = field(1)
            .parse()
            .map_err(|_| parse_err(format!("bad true_label `{}`", field(1))))?;
        let mut attributes = BTreeMap::new();
        for (a, name) in attrs.iter().enumerate() {
            let flag = match field(2 + a) {
                "0" => false,
                "1" => true,
                other => {
                    return Err(parse_err(format!(
                        "attribute `{name}` must be 0 or 1, got `{other}`"
                    )))
                }
            };
            attributes.insert(name.clone(), flag);
        }
        let features = (feature_start..record.len())
            .map(|i| {
                field(i)
                    .parse::<f64>()
                    .map_err(|_| parse_err(format!("bad feature value `{}`", field(i))))
            })
            .collect::<Result<Vec<_>>>()?;
        examples.push(ExampleRecord {
            example_id,
            features,
            true_label,
            attributes,
        });
    }

    let mut dataset = LabeledDataset::new(examples, meta.num_classes)?;
    match (meta.height, meta.width) {
        (Some(height), Some(width)) => dataset = dataset.with_layout(Layout { height, width })?,
        (None, None) => {}
        _ => {
            return Err(Error::Schema {
                path: meta_path,
                message: "height and width must be given together".into(),
            })
        }
    }
    if let Some(names) = meta.class_names {
        dataset = dataset.with_class_names(names)?;
    }
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> LabeledDataset {
        let mut a = ExampleRecord::new(0, vec![0.1, -2.5, 3.0, 1e-7], 1);
        a.attributes.insert("young".into(), true);
        let mut b = ExampleRecord::new(5, vec![0.0, 0.3333333333333333, -1.0, 2.0], 0);
        b.attributes.insert("young".into(), false);
        LabeledDataset::new(vec![a, b], 2)
            .unwrap()
            .with_layout(Layout {
                height: 2,
                width: 2,
            })
            .unwrap()
    }

    #[test]
    fn csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.csv");
        let ds = toy();
        write_dataset(&ds, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("example_id,true_label,attr_young,f0,f1,f2,f3\n"));
        assert_eq!(read_dataset(&path).unwrap(), ds);
    }

    #[test]
    fn rejects_bad_rows() {
        let e = ExampleRecord::new(0, vec![1.0], 3);
        assert!(LabeledDataset::new(vec![e], 3).is_err());
        let a = ExampleRecord::new(1, vec![1.0], 0);
        let b = ExampleRecord::new(1, vec![2.0], 0);
        assert!(LabeledDataset::new(vec![a.clone(), b], 1).is_err());
        let c = ExampleRecord::new(2, vec![2.0, 1.0], 0);
        assert!(LabeledDataset::new(vec![a, c], 1).is_err());
    }

    #[test]
    fn reports_missing_classes() {
        let ds = LabeledDataset::new(vec![ExampleRecord::new(0, vec![0.0], 2)], 4).unwrap();
        assert_eq!(ds.missing_classes(), vec![0, 1, 3]);
    }

    #[test]
    fn bad_attribute_value_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        fs::write(&path, "example_id,true_label,attr_x,f0\n0,0,2,1.0\n").unwrap();
        fs::write(path.with_extension("json"), r#"{"num_classes": 1}"#).unwrap();
        match read_dataset(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
