use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use super::prune::{apply_magnitude_mask, sparsity_at_step, PruneSchedule};
use super::quantize::{quantize_model, QuantKind, QuantizationScheme};
use crate::data_model::{
    CompressionMethod, CompressionSpec, ExampleRecord, LabeledDataset, PredictionLog,
};
use crate::error::{Error, Result};
use crate::par::*;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Multiply the learning rate by `lr_decay_factor` every this many steps.
    pub lr_decay_steps: Option<usize>,
    pub lr_decay_factor: f64,
    pub weight_decay: f64,
    /// Model `k` of a population is seeded with `seed + k`.
    pub seed: u64,
    pub population_size: usize,
    pub hidden_layers: Vec<usize>,
    /// Ranks recorded per prediction; `None` means `min(5, C)`.
    pub topk: Option<usize>,
    /// Calibration examples for fixed-point quantization.
    pub representative_count: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 3000,
            batch_size: 32,
            learning_rate: 0.05,
            lr_decay_steps: Some(1200),
            lr_decay_factor: 0.5,
            weight_decay: 1e-4,
            seed: 2,
            population_size: 10,
            hidden_layers: vec![384],
            topk: None,
            representative_count: QuantizationScheme::DEFAULT_REPRESENTATIVE_COUNT,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 {
            return fail("batch_size must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive");
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return fail("weight_decay must be non-negative");
        }
        if self.lr_decay_steps == Some(0) {
            return fail("lr_decay_steps must be positive");
        }
        if self.population_size == 0 {
            return fail("population_size must be at least 1");
        }
        if self.hidden_layers.contains(&0) {
            return fail("hidden layer widths must be positive");
        }
        if self.topk == Some(0) {
            return fail("topk must be at least 1");
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, step: usize) -> f64 {
        match self.lr_decay_steps {
            Some(every) => self.learning_rate * self.lr_decay_factor.powi((step / every) as i32),
            None => self.learning_rate,
        }
    }

    pub fn layer_dims(&self, inputs: usize, classes: usize) -> Vec<usize> {
        let mut dims = vec![inputs];
        dims.extend(&self.hidden_layers);
        dims.push(classes);
        dims
    }

    pub fn topk_for(&self, classes: usize) -> usize {
        self.topk.unwrap_or(5).min(classes)
    }

    pub fn model_seed(&self, model: usize) -> u64 {
        self.seed.wrapping_add(model as u64)
    }
}

/// Models of one population and their predictions on the test split.
#[derive(Debug, Clone)]
pub struct Population {
    pub models: Vec<Mlp>,
    pub log: PredictionLog,
}

/// Trains one model from its own seed. With a schedule, the mask is refreshed
/// at each pruning event and masked weights are re-zeroed after every update.
pub fn train_model(
    train: &LabeledDataset,
    config: &TrainConfig,
    model_index: usize,
    schedule: Option<&PruneSchedule>,
) -> Result<Mlp> {
    if train.is_empty() {
        return Err(Error::Invalid("training split is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.model_seed(model_index));
    let mut model = Mlp::init(
        &config.layer_dims(train.dim(), train.num_classes()),
        &mut rng,
    )?;
    let examples = train.examples();
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut cursor = order.len();
    let mut batch: Vec<(&[f64], usize)> = Vec::with_capacity(config.batch_size);

    for step in 0..config.steps {
        if let Some(s) = schedule.filter(|s| s.is_event(step)) {
            prune_to(&mut model, s, sparsity_at_step(s, step));
        }
        batch.clear();
        while batch.len() < config.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let ex = &examples[order[cursor]];
            batch.push((&ex.features, ex.true_label));
            cursor += 1;
        }
        let (loss, grads) = model.loss_and_gradients(&batch, config.weight_decay)?;
        if !loss.is_finite() {
            return Err(Error::Divergence {
                model: model_index,
                step,
                loss,
            });
        }
        model.sgd_step(&grads, config.learning_rate_at(step));
    }
    if let Some(s) = schedule {
        prune_to(&mut model, s, s.target_sparsity);
        model.compression = CompressionSpec::prune(s.target_sparsity)?;
    }
    Ok(model)
}

fn prune_to(model: &mut Mlp, schedule: &PruneSchedule, sparsity: f64) {
    for (l, layer) in model.layers.iter_mut().enumerate() {
        if schedule.prunes_layer(l) {
            layer.mask = apply_magnitude_mask(&layer.weights, &layer.mask, sparsity);
            layer.apply_mask();
        }
    }
}

/// Ranked predictions of every model on every example of `test`.
pub fn prediction_log(
    models: &[Mlp],
    test: &LabeledDataset,
    topk: usize,
    population_id: &str,
    compression: CompressionSpec,
) -> Result<PredictionLog> {
    let rankings = models
        .par_iter()
        .map(|m| {
            test.examples()
                .iter()
                .map(|ex| m.predict_topk(&ex.features, topk))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    PredictionLog::new(
        population_id,
        compression,
        test.num_classes(),
        test.examples().iter().map(|e| e.example_id).collect(),
        test.examples().iter().map(|e| e.true_label).collect(),
        rankings,
    )
}

/// Applies post-training quantization to already trained models.
pub fn quantize_population(
    models: &[Mlp],
    kind: QuantKind,
    representative_count: usize,
    calibration: &[ExampleRecord],
) -> Result<Vec<Mlp>> {
    let scheme = QuantizationScheme {
        kind,
        representative_count,
    };
    models
        .par_iter()
        .map(|m| quantize_model(m, &scheme, Some(calibration)))
        .collect()
}

/// Trains `config.population_size` models under `compression` and logs their
/// test-split predictions.
///
/// Magnitude pruning requires a schedule whose target equals the spec's
/// sparsity. Quantization is applied after training, calibrated on the head
/// of the training split.
pub fn train_population(
    train: &LabeledDataset,
    test: &LabeledDataset,
    config: &TrainConfig,
    compression: CompressionSpec,
    schedule: Option<&PruneSchedule>,
) -> Result<Population> {
    config.validate()?;
    compression.validate()?;
    if train.dim() != test.dim() || train.num_classes() != test.num_classes() {
        return Err(Error::Invalid(
            "train and test splits differ in dimension or class count".into(),
        ));
    }
    let schedule = match compression.method {
        CompressionMethod::MagnitudePrune => {
            let s = schedule
                .ok_or_else(|| Error::Config("magnitude pruning needs a prune schedule".into()))?;
            if s.target_sparsity != compression.sparsity {
                return Err(Error::Config(format!(
                    "schedule targets sparsity {} but the population is {}",
                    s.target_sparsity, compression
                )));
            }
            s.validate(config.steps)?;
            Some(s)
        }
        _ => None,
    };
    let trained = (0..config.population_size)
        .into_par_iter()
        .map(|k| train_model(train, config, k, schedule))
        .collect::<Result<Vec<_>>>()?;
    let models = match QuantKind::from_method(compression.method) {
        Some(kind) => quantize_population(
            &trained,
            kind,
            config.representative_count,
            train.head(config.representative_count),
        )?,
        None => trained,
    };
    let log = prediction_log(
        &models,
        test,
        config.topk_for(test.num_classes()),
        &compression.label(),
        compression,
    )?;
    Ok(Population { models, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::ExampleRecord;

    fn blobs(n: usize, seed: u64) -> LabeledDataset {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let examples = (0..n as u64)
            .map(|i| {
                let label = (i % 3) as usize;
                let features = (0..4)
                    .map(|j| if j == label { 2.0 } else { 0.0 } + rng.gen_range(-0.5..0.5))
                    .collect();
                ExampleRecord::new(i, features, label)
            })
            .collect();
        LabeledDataset::new(examples, 3).unwrap()
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            steps: 200,
            batch_size: 16,
            hidden_layers: vec![8],
            population_size: 2,
            topk: Some(2),
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_steps_logs_the_initial_model() {
        let data = blobs(30, 1);
        let cfg = TrainConfig {
            steps: 0,
            population_size: 1,
            ..small_config()
        };
        let pop = train_population(&data, &data, &cfg, CompressionSpec::NONE, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let init = Mlp::init(&cfg.layer_dims(4, 3), &mut rng).unwrap();
        assert_eq!(pop.models[0], init);
        let again = train_population(&data, &data, &cfg, CompressionSpec::NONE, None).unwrap();
        assert_eq!(again.log, pop.log);
    }

    #[test]
    fn learns_separable_blobs() {
        let data = blobs(120, 2);
        let pop =
            train_population(&data, &data, &small_config(), CompressionSpec::NONE, None).unwrap();
        let acc = crate::data_model::model_accuracy(&pop.log, 1).unwrap();
        assert!(acc.iter().all(|&a| a > 0.9), "{acc:?}");
    }

    #[test]
    fn pruning_hits_exact_sparsity() {
        let data = blobs(60, 3);
        let schedule = PruneSchedule::new(0.7, 20, 150, 10);
        let pop = train_population(
            &data,
            &data,
            &small_config(),
            CompressionSpec::prune(0.7).unwrap(),
            Some(&schedule),
        )
        .unwrap();
        for m in &pop.models {
            for layer in &m.layers {
                let n = layer.weight_count();
                assert_eq!(layer.masked_count(), (0.7 * n as f64).round() as usize);
                assert_eq!(layer.nonzero_weights(), n - layer.masked_count());
            }
        }
    }

    #[test]
    fn pruning_requires_matching_schedule() {
        let data = blobs(30, 4);
        let spec = CompressionSpec::prune(0.5).unwrap();
        let cfg = small_config();
        assert!(matches!(
            train_population(&data, &data, &cfg, spec, None),
            Err(Error::Config(_))
        ));
        let wrong = PruneSchedule::new(0.3, 10, 100, 10);
        assert!(train_population(&data, &data, &cfg, spec, Some(&wrong)).is_err());
        let too_long = PruneSchedule::new(0.5, 10, 500, 10);
        assert!(train_population(&data, &data, &cfg, spec, Some(&too_long)).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let data = blobs(30, 5);
        let cfg = TrainConfig {
            learning_rate: 1e6,
            lr_decay_steps: None,
            ..small_config()
        };
        match train_population(&data, &data, &cfg, CompressionSpec::NONE, None) {
            Err(e @ Error::Divergence { .. }) => assert_eq!(e.exit_code(), 3),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn step_decay() {
        let cfg = TrainConfig {
            learning_rate: 0.1,
            lr_decay_steps: Some(10),
            lr_decay_factor: 0.5,
            ..TrainConfig::default()
        };
        assert_eq!(cfg.learning_rate_at(9), 0.1);
        assert_eq!(cfg.learning_rate_at(10), 0.05);
        assert_eq!(cfg.learning_rate_at(25), 0.025);
    }
}
