use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use super::compression::{CompressionMethod, CompressionSpec};
use super::io_util::{csv_error, finish_csv};
use crate::error::{Error, Result};

const LOG_COLUMNS: [&str; 8] = [
    "population_id",
    "compression_method",
    "sparsity",
    "model_id",
    "example_id",
    "rank",
    "predicted_label",
    "true_label",
];

/// Ranked predictions of every model in a population on every example.
///
/// Examples are held in ascending `example_id` order. Rankings are stored
/// flat, model-major, `topk` labels per (model, example).
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionLog {
    population_id: String,
    compression: CompressionSpec,
    num_models: usize,
    topk: usize,
    num_classes: usize,
    example_ids: Vec<u64>,
    truth: Vec<usize>,
    ranked: Vec<usize>,
}

impl PredictionLog {
    /// Builds a log from per-model rankings aligned with `example_ids`.
    ///
    /// `rankings[m][i]` is model `m`'s ranked label list for `example_ids[i]`.
    pub fn new(
        population_id: impl Into<String>,
        compression: CompressionSpec,
        num_classes: usize,
        example_ids: Vec<u64>,
        truth: Vec<usize>,
        rankings: Vec<Vec<Vec<usize>>>,
    ) -> Result<Self> {
        if example_ids.len() != truth.len() {
            return Err(Error::Invalid(format!(
                "{} example ids but {} true labels",
                example_ids.len(),
                truth.len()
            )));
        }
        if rankings.is_empty() {
            return Err(Error::Invalid("a log needs at least one model".into()));
        }
        if example_ids.is_empty() {
            return Err(Error::Invalid("a log needs at least one example".into()));
        }
        let mut order: Vec<usize> = (0..example_ids.len()).collect();
        order.sort_by_key(|&i| example_ids[i]);
        if order
            .windows(2)
            .any(|w| example_ids[w[0]] == example_ids[w[1]])
        {
            return Err(Error::Invalid("duplicate example id in log".into()));
        }
        let topk = rankings[0].first().map(Vec::len).unwrap_or(0);
        if topk == 0 || topk > num_classes {
            return Err(Error::Invalid(format!(
                "rank depth {topk} must lie in 1..={num_classes}"
            )));
        }
        if let Some(&bad) = truth.iter().find(|&&t| t >= num_classes) {
            return Err(Error::Invalid(format!("true label {bad} out of range")));
        }

        let mut ranked = Vec::with_capacity(rankings.len() * example_ids.len() * topk);
        for (m, model) in rankings.iter().enumerate() {
            if model.len() != example_ids.len() {
                return Err(Error::Invalid(format!(
                    "model {m} ranks {} examples, expected {}",
                    model.len(),
                    example_ids.len()
                )));
            }
            for &i in &order {
                let labels = &model[i];
                if labels.len() != topk {
                    return Err(Error::Invalid(format!(
                        "model {m}, example {}: {} ranks, expected {topk}",
                        example_ids[i],
                        labels.len()
                    )));
                }
                for (r, &l) in labels.iter().enumerate() {
                    if l >= num_classes || labels[..r].contains(&l) {
                        return Err(Error::Invalid(format!(
                            "model {m}, example {}: ranked labels must be distinct classes",
                            example_ids[i]
                        )));
                    }
                }
                ranked.extend_from_slice(labels);
            }
        }

        Ok(PredictionLog {
            population_id: population_id.into(),
            compression,
            num_models: rankings.len(),
            topk,
            num_classes,
            example_ids: order.iter().map(|&i| example_ids[i]).collect(),
            truth: order.iter().map(|&i| truth[i]).collect(),
            ranked,
        })
    }

    pub fn population_id(&self) -> &str {
        &self.population_id
    }

    pub fn compression(&self) -> CompressionSpec {
        self.compression
    }

    pub fn num_models(&self) -> usize {
        self.num_models
    }

    pub fn num_examples(&self) -> usize {
        self.example_ids.len()
    }

    pub fn topk(&self) -> usize {
        self.topk
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Example ids in ascending order.
    pub fn example_ids(&self) -> &[u64] {
        &self.example_ids
    }

    /// True labels aligned with [`example_ids`](Self::example_ids).
    pub fn truth(&self) -> &[usize] {
        &self.truth
    }

    pub fn index_of(&self, example_id: u64) -> Option<usize> {
        self.example_ids.binary_search(&example_id).ok()
    }

    /// Ranked labels of `model` for the example at position `index`.
    pub fn ranking(&self, model: usize, index: usize) -> &[usize] {
        let start = (model * self.example_ids.len() + index) * self.topk;
        &self.ranked[start..start + self.topk]
    }

    pub fn top1(&self, model: usize, index: usize) -> usize {
        self.ranked[(model * self.example_ids.len() + index) * self.topk]
    }

    pub fn same_examples(&self, other: &PredictionLog) -> bool {
        self.example_ids == other.example_ids
    }
}

pub fn write_prediction_log(log: &PredictionLog, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(LOG_COLUMNS)
        .map_err(|e| csv_error(path, e))?;
    let method = log.compression.method.as_str();
    let sparsity = log.compression.sparsity.to_string();
    for m in 0..log.num_models {
        let model = m.to_string();
        for (i, (&id, &truth)) in log.example_ids.iter().zip(&log.truth).enumerate() {
            let id = id.to_string();
            let truth = truth.to_string();
            for (r, label) in log.ranking(m, i).iter().enumerate() {
                writer
                    .write_record([
                        log.population_id.as_str(),
                        method,
                        &sparsity,
                        &model,
                        &id,
                        &(r + 1).to_string(),
                        &label.to_string(),
                        &truth,
                    ])
                    .map_err(|e| csv_error(path, e))?;
            }
        }
    }
    finish_csv(path, writer)
}

/// Reads a long-format prediction log. Rows may appear in any order.
///
/// The class count is inferred as one more than the largest label seen.
pub fn read_prediction_log(path: &Path) -> Result<PredictionLog> {
    let mut reader = csv::ReaderBuilder::new()
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let mut col = [0usize; LOG_COLUMNS.len()];
    let missing: Vec<&str> = LOG_COLUMNS
        .iter()
        .enumerate()
        .filter_map(|(i, name)| match headers.iter().position(|h| h == *name) {
            Some(pos) => {
                col[i] = pos;
                None
            }
            None => Some(*name),
        })
        .collect();
    if !missing.is_empty() {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            message: format!("missing column(s): {}", missing.join(", ")),
        });
    }

    let mut header: Option<(String, CompressionSpec)> = None;
    let mut cells: BTreeMap<(usize, u64, usize), usize> = BTreeMap::new();
    let mut truth: BTreeMap<u64, usize> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let get = |c: usize| record.get(col[c]).unwrap_or("").trim();
        fn num<T: std::str::FromStr>(s: &str, what: &str) -> std::result::Result<T, String> {
            s.parse().map_err(|_| format!("bad {what} `{s}`"))
        }

        let population = get(0).to_string();
        let method: CompressionMethod = get(1).parse().map_err(|e: Error| err(e.to_string()))?;
        let sparsity: f64 = num(get(2), "sparsity").map_err(err)?;
        let spec = CompressionSpec::new(method, sparsity).map_err(|e| err(e.to_string()))?;
        match &header {
            None => header = Some((population, spec)),
            Some((p, s)) if *p == population && *s == spec => {}
            Some(_) => {
                return Err(err(
                    "population_id and compression must be the same on every row".into(),
                ))
            }
        }
        let model: usize = num(get(3), "model_id").map_err(err)?;
        let example: u64 = num(get(4), "example_id").map_err(err)?;
        let rank: usize = num(get(5), "rank").map_err(err)?;
        let predicted: usize = num(get(6), "predicted_label").map_err(err)?;
        let label: usize = num(get(7), "true_label").map_err(err)?;
        if rank == 0 {
            return Err(err("ranks are 1-based".into()));
        }
        if cells.insert((model, example, rank), predicted).is_some() {
            return Err(err(format!(
                "duplicate row for model {model}, example {example}, rank {rank}"
            )));
        }
        if *truth.entry(example).or_insert(label) != label {
            return Err(err(format!("conflicting true_label for example {example}")));
        }
    }

    let invalid = |message: String| Error::Invalid(format!("{}: {message}", path.display()));
    let (population_id, compression) =
        header.ok_or_else(|| invalid("log contains no rows".into()))?;
    let models: BTreeSet<usize> = cells.keys().map(|k| k.0).collect();
    let num_models = models.iter().next_back().map_or(0, |m| m + 1);
    if models.len() != num_models {
        return Err(invalid("model ids must be contiguous from 0".into()));
    }
    let topk = cells.keys().map(|k| k.2).max().unwrap_or(0);
    let example_ids: Vec<u64> = truth.keys().copied().collect();
    let num_classes = cells
        .values()
        .chain(truth.values())
        .max()
        .map_or(0, |l| l + 1);

    let mut rankings = vec![Vec::with_capacity(example_ids.len()); num_models];
    for (m, model) in rankings.iter_mut().enumerate() {
        for &id in &example_ids {
            let labels = (1..=topk)
                .map(|r| {
                    cells.get(&(m, id, r)).copied().ok_or_else(|| {
                        invalid(format!("missing rank {r} for model {m}, example {id}"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            model.push(labels);
        }
    }
    let truth: Vec<usize> = truth.into_values().collect();
    PredictionLog::new(
        population_id,
        compression,
        num_classes,
        example_ids,
        truth,
        rankings,
    )
}

#[cfg(test)]
mod tests {
    use std::fs;

    use super::*;

    pub(crate) fn small_log() -> PredictionLog {
        PredictionLog::new(
            "pop",
            CompressionSpec::prune(0.5).unwrap(),
            3,
            vec![7, 2],
            vec![1, 0],
            vec![vec![vec![1, 0], vec![0, 2]], vec![vec![2, 1], vec![0, 1]]],
        )
        .unwrap()
    }

    #[test]
    fn sorted_by_example_id() {
        let log = small_log();
        assert_eq!(log.example_ids(), &[2, 7]);
        assert_eq!(log.truth(), &[0, 1]);
        assert_eq!(log.ranking(0, 1), &[1, 0]);
        assert_eq!(log.ranking(1, 0), &[0, 1]);
        assert_eq!(log.top1(1, 1), 2);
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        let log = small_log();
        write_prediction_log(&log, &path).unwrap();
        assert_eq!(read_prediction_log(&path).unwrap(), log);
    }

    #[test]
    fn shuffled_rows_read_back_equal() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        write_prediction_log(&small_log(), &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines[1..].reverse();
        fs::write(&path, lines.join("\n") + "\n").unwrap();
        assert_eq!(read_prediction_log(&path).unwrap(), small_log());
    }

    #[test]
    fn missing_rank_column_is_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        fs::write(
            &path,
            "population_id,compression_method,sparsity,model_id,example_id,predicted_label,true_label\n\
             p,none,0,0,0,0,0\n",
        )
        .unwrap();
        match read_prediction_log(&path) {
            Err(Error::Schema { message, .. }) => assert!(message.contains("rank")),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_row_is_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        fs::write(
            &path,
            "population_id,compression_method,sparsity,model_id,example_id,rank,predicted_label,true_label\n\
             p,none,0,0,0,1,0,0\n\
             p,none,0,0,0,1,1,0\n",
        )
        .unwrap();
        match read_prediction_log(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_repeated_labels_in_ranking() {
        let r = PredictionLog::new(
            "p",
            CompressionSpec::NONE,
            3,
            vec![0],
            vec![0],
            vec![vec![vec![1, 1]]],
        );
        assert!(r.is_err());
    }
}
