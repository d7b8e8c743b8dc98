use super::log::PredictionLog;
use crate::error::{Error, Result};

/// Per-class recall at rank 1, one value per model: `result[c][k]`.
///
/// Every class in `0..C` must have at least one example in the log.
pub fn class_recall_matrix(log: &PredictionLog) -> Result<Vec<Vec<f64>>> {
    let classes = log.num_classes();
    let mut support = vec![0usize; classes];
    for &t in log.truth() {
        support[t] += 1;
    }
    if let Some(class) = support.iter().position(|&n| n == 0) {
        return Err(Error::MissingClassSupport { class });
    }
    let mut recall = vec![vec![0.0; log.num_models()]; classes];
    for m in 0..log.num_models() {
        let mut hits = vec![0usize; classes];
        for (i, &t) in log.truth().iter().enumerate() {
            if log.top1(m, i) == t {
                hits[t] += 1;
            }
        }
        for ((row, h), n) in recall.iter_mut().zip(&hits).zip(&support) {
            row[m] = *h as f64 / *n as f64;
        }
    }
    Ok(recall)
}

/// Top-`k` accuracy of each model over the whole log.
pub fn model_accuracy(log: &PredictionLog, k: usize) -> Result<Vec<f64>> {
    model_accuracy_on(log, k, |_| true)
}

/// Top-`k` accuracy of each model restricted to example positions accepted by `keep`.
/// Returns NaN per model when the subset is empty.
pub(crate) fn model_accuracy_on(
    log: &PredictionLog,
    k: usize,
    keep: impl Fn(usize) -> bool,
) -> Result<Vec<f64>> {
    if k == 0 || k > log.topk() {
        return Err(Error::RankDepthExceeded {
            requested: k,
            available: log.topk(),
        });
    }
    let subset: Vec<usize> = (0..log.num_examples()).filter(|&i| keep(i)).collect();
    Ok((0..log.num_models())
        .map(|m| {
            let hits = subset
                .iter()
                .filter(|&&i| log.ranking(m, i)[..k].contains(&log.truth()[i]))
                .count();
            hits as f64 / subset.len() as f64
        })
        .collect())
}
