use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gradual magnitude pruning: sparsity ramps from 0 to `target_sparsity`
/// along a cubic curve, updated every `every` steps between `start` and `end`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneSchedule {
    pub target_sparsity: f64,
    pub start: usize,
    pub end: usize,
    pub every: usize,
    /// Layer indices left dense.
    #[serde(default)]
    pub exclude_layers: Vec<usize>,
}

impl PruneSchedule {
    pub fn new(target_sparsity: f64, start: usize, end: usize, every: usize) -> Self {
        PruneSchedule {
            target_sparsity,
            start,
            end,
            every,
            exclude_layers: Vec::new(),
        }
    }

    pub fn validate(&self, steps: usize) -> Result<()> {
        if !(0.0..1.0).contains(&self.target_sparsity) {
            return Err(Error::Config(format!(
                "target sparsity {} must lie in [0, 1)",
                self.target_sparsity
            )));
        }
        if self.every == 0 {
            return Err(Error::Config("prune interval must be positive".into()));
        }
        if self.start >= self.end {
            return Err(Error::Config(format!(
                "prune start {} must precede prune end {}",
                self.start, self.end
            )));
        }
        if self.end > steps {
            return Err(Error::Config(format!(
                "prune end {} is past the last training step {steps}",
                self.end
            )));
        }
        if self.end - self.start < self.every {
            return Err(Error::Config(
                "prune window must contain at least one full interval".into(),
            ));
        }
        Ok(())
    }

    /// Whether the mask is refreshed at `step`.
    pub fn is_event(&self, step: usize) -> bool {
        step >= self.start
            && step <= self.end
            && ((step - self.start).is_multiple_of(self.every) || step == self.end)
    }

    pub fn prunes_layer(&self, layer: usize) -> bool {
        !self.exclude_layers.contains(&layer)
    }
}

/// Sparsity in force at `step`. Between pruning events the last value holds.
pub fn sparsity_at_step(schedule: &PruneSchedule, step: usize) -> f64 {
    if step < schedule.start {
        return 0.0;
    }
    if step >= schedule.end {
        return schedule.target_sparsity;
    }
    let last_event = schedule.start + (step - schedule.start) / schedule.every * schedule.every;
    let progress = (last_event - schedule.start) as f64 / (schedule.end - schedule.start) as f64;
    schedule.target_sparsity * (1.0 - (1.0 - progress).powi(3))
}

/// Number of weights removed at sparsity `s` out of `n`, rounding half to even.
pub fn pruned_count(sparsity: f64, n: usize) -> usize {
    (sparsity * n as f64).round_ties_even() as usize
}

/// Extends `current_mask` so that exactly `round(s * n)` weights are masked.
///
/// Already-masked entries stay masked. New entries are the unmasked weights
/// with the smallest magnitude, ties broken by lower index.
pub fn apply_magnitude_mask(weights: &[f64], current_mask: &[u8], sparsity: f64) -> Vec<u8> {
    debug_assert_eq!(weights.len(), current_mask.len());
    let mut mask = current_mask.to_vec();
    let target = pruned_count(sparsity, weights.len());
    let already = mask.iter().filter(|&&m| m == 0).count();
    if target <= already {
        return mask;
    }
    let mut candidates: Vec<usize> = (0..weights.len()).filter(|&i| mask[i] == 1).collect();
    candidates.sort_by(|&a, &b| {
        weights[a]
            .abs()
            .total_cmp(&weights[b].abs())
            .then(a.cmp(&b))
    });
    for &i in &candidates[..target - already] {
        mask[i] = 0;
    }
    mask
}
