//! Synthetic long-tailed classification data.
//!
//! Class sizes follow a Zipf law. Each class is a mixture of Gaussian modes,
//! so the decision boundary is non-linear and capacity matters. A fraction of
//! examples are mislabeled blends of two classes (`noisy`) and a fraction are
//! drawn far from their mode (`atypical`).

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data_model::{write_dataset, ExampleRecord, LabeledDataset, Layout};
use crate::error::{Error, Result};

pub const ATTR_MINORITY: &str = "minority";
pub const ATTR_NOISY: &str = "noisy";
pub const ATTR_ATYPICAL: &str = "atypical";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthLongTailSpec {
    pub num_classes: usize,
    pub dims: usize,
    pub train_size: usize,
    pub test_size: usize,
    /// 0 gives balanced classes.
    pub zipf_exponent: f64,
    /// Standard deviation of mode centers around the origin.
    pub center_scale: f64,
    /// Within-mode standard deviation.
    pub spread: f64,
    pub modes_per_class: usize,
    /// Fraction of examples whose label disagrees with a blended feature vector.
    pub noise_fraction: f64,
    /// Fraction of examples drawn with `atypical_scale` times the usual spread.
    pub atypical_fraction: f64,
    pub atypical_scale: f64,
    /// Optional 2D arrangement of the features (`height * width == dims`).
    pub layout: Option<Layout>,
    pub seed: u64,
}

impl Default for SynthLongTailSpec {
    fn default() -> Self {
        SynthLongTailSpec {
            num_classes: 10,
            dims: 16,
            train_size: 5000,
            test_size: 2000,
            zipf_exponent: 1.0,
            center_scale: 1.0,
            spread: 0.6,
            modes_per_class: 3,
            noise_fraction: 0.05,
            atypical_fraction: 0.05,
            atypical_scale: 2.5,
            layout: Some(Layout {
                height: 4,
                width: 4,
            }),
            seed: 1,
        }
    }
}

impl SynthLongTailSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.num_classes == 0 || self.dims == 0 || self.modes_per_class == 0 {
            return fail("num_classes, dims and modes_per_class must be positive".into());
        }
        if self.zipf_exponent.is_nan() || self.zipf_exponent < 0.0 {
            return fail(format!("zipf exponent {} must be >= 0", self.zipf_exponent));
        }
        for (name, f) in [
            ("noise_fraction", self.noise_fraction),
            ("atypical_fraction", self.atypical_fraction),
        ] {
            if !(0.0..1.0).contains(&f) {
                return fail(format!("{name} {f} must lie in [0, 1)"));
            }
        }
        if self.noise_fraction + self.atypical_fraction >= 1.0 {
            return fail("noise and atypical fractions must sum below 1".into());
        }
        if self.noise_fraction > 0.0 && self.num_classes < 2 {
            return fail("label noise needs at least two classes".into());
        }
        if !(self.spread >= 0.0 && self.center_scale >= 0.0 && self.atypical_scale >= 0.0) {
            return fail("scales must be non-negative".into());
        }
        if let Some(l) = self.layout {
            if l.height * l.width != self.dims {
                return fail(format!(
                    "layout {}x{} does not cover {} dims",
                    l.height, l.width, self.dims
                ));
            }
        }
        if self.train_size < self.num_classes {
            return fail("train_size must give every class an example".into());
        }
        Ok(())
    }
}

/// Expected (real-valued) class sizes: `total * (c+1)^-z / sum_j (j+1)^-z`.
pub fn zipf_expected_counts(num_classes: usize, exponent: f64, total: usize) -> Vec<f64> {
    let weights: Vec<f64> = (0..num_classes)
        .map(|c| ((c + 1) as f64).powf(-exponent))
        .collect();
    let norm: f64 = weights.iter().sum();
    weights.iter().map(|w| total as f64 * w / norm).collect()
}

/// Integer class sizes summing to `total`, by largest remainder.
pub fn zipf_counts(num_classes: usize, exponent: f64, total: usize) -> Vec<usize> {
    let expected = zipf_expected_counts(num_classes, exponent, total);
    let mut counts: Vec<usize> = expected.iter().map(|e| e.floor() as usize).collect();
    let short = total - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..num_classes).collect();
    order.sort_by(|&a, &b| {
        let ra = expected[a] - expected[a].floor();
        let rb = expected[b] - expected[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &c in order.iter().take(short) {
        counts[c] += 1;
    }
    counts
}

/// Classes whose size is strictly below the median class size.
pub fn minority_classes(counts: &[usize]) -> Vec<bool> {
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0
    };
    counts.iter().map(|&c| (c as f64) < median).collect()
}

struct Geometry {
    /// `modes[c][m]` is a center vector.
    modes: Vec<Vec<Vec<f64>>>,
}

impl Geometry {
    fn sample(spec: &SynthLongTailSpec, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0, spec.center_scale.max(f64::MIN_POSITIVE)).expect("sd");
        let modes = (0..spec.num_classes)
            .map(|_| {
                (0..spec.modes_per_class)
                    .map(|_| (0..spec.dims).map(|_| normal.sample(rng)).collect())
                    .collect()
            })
            .collect();
        Geometry { modes }
    }

    fn draw(&self, class: usize, sd: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let modes = &self.modes[class];
        let center = &modes[rng.gen_range(0..modes.len())];
        let noise = Normal::new(0.0, sd.max(f64::MIN_POSITIVE)).expect("sd");
        center.iter().map(|&c| c + noise.sample(rng)).collect()
    }
}

fn generate_split(
    spec: &SynthLongTailSpec,
    geometry: &Geometry,
    total: usize,
    first_id: u64,
    stream: u64,
) -> Result<LabeledDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(stream);
    let counts = zipf_counts(spec.num_classes, spec.zipf_exponent, total);
    let minority = minority_classes(&counts);
    let mut labels: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(c, &n)| std::iter::repeat_n(c, n))
        .collect();
    labels.shuffle(&mut rng);

    let mut examples = Vec::with_capacity(total);
    for (i, &label) in labels.iter().enumerate() {
        let u: f64 = rng.gen();
        let noisy = u < spec.noise_fraction;
        let atypical = !noisy && u < spec.noise_fraction + spec.atypical_fraction;
        let features = if noisy {
            // blend of the labeled class and a different one
            let other = (label + rng.gen_range(1..spec.num_classes)) % spec.num_classes;
            let mix: f64 = rng.gen_range(0.35..0.65);
            let a = geometry.draw(label, spec.spread, &mut rng);
            let b = geometry.draw(other, spec.spread, &mut rng);
            a.iter()
                .zip(&b)
                .map(|(x, y)| mix * x + (1.0 - mix) * y)
                .collect()
        } else if atypical {
            geometry.draw(label, spec.spread * spec.atypical_scale, &mut rng)
        } else {
            geometry.draw(label, spec.spread, &mut rng)
        };
        let mut ex = ExampleRecord::new(first_id + i as u64, features, label);
        ex.attributes.insert(ATTR_MINORITY.into(), minority[label]);
        ex.attributes.insert(ATTR_NOISY.into(), noisy);
        ex.attributes.insert(ATTR_ATYPICAL.into(), atypical);
        examples.push(ex);
    }
    let mut dataset = LabeledDataset::new(examples, spec.num_classes)?;
    if let Some(layout) = spec.layout {
        dataset = dataset.with_layout(layout)?;
    }
    Ok(dataset)
}

/// Train and test splits drawn from the same class geometry. Test ids
/// continue after the training ids.
pub fn synthesize(spec: &SynthLongTailSpec) -> Result<(LabeledDataset, LabeledDataset)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let geometry = Geometry::sample(spec, &mut rng);
    let train = generate_split(spec, &geometry, spec.train_size, 0, 1)?;
    let test = generate_split(spec, &geometry, spec.test_size, spec.train_size as u64, 2)?;
    Ok((train, test))
}

/// Writes `train.csv` and `test.csv` (plus sidecars) into `out_dir`.
pub fn generate(
    spec: &SynthLongTailSpec,
    out_dir: &Path,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let (train, test) = synthesize(spec)?;
    write_dataset(&train, &out_dir.join("train.csv"))?;
    write_dataset(&test, &out_dir.join("test.csv"))?;
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_when_exponent_is_zero() {
        let counts = zipf_counts(7, 0.0, 1003);
        let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        assert!(hi - lo <= 1);
        assert_eq!(counts.iter().sum::<usize>(), 1003);
    }

    #[test]
    fn harmonic_counts() {
        // z = 1, C = 10: weights 1, 1/2, ..., 1/10 over H_10 = 7381/2520
        let counts = zipf_counts(10, 1.0, 1100);
        let h10 = 7381.0 / 2520.0;
        for (c, &n) in counts.iter().enumerate() {
            let expected = 1100.0 / ((c + 1) as f64 * h10);
            assert!(
                (n as f64 - expected).abs() < 1.0,
                "class {c}: {n} vs {expected}"
            );
        }
        assert_eq!(counts.iter().sum::<usize>(), 1100);
        assert_eq!(counts, vec![375, 188, 125, 94, 75, 63, 54, 47, 42, 37]);
    }

    #[test]
    fn minority_is_strictly_below_median() {
        assert_eq!(
            minority_classes(&[10, 8, 6, 4, 2]),
            vec![false, false, false, true, true]
        );
        assert_eq!(minority_classes(&[5, 5, 5, 5]), vec![false; 4]);
    }

    #[test]
    fn deterministic_and_well_formed() {
        let spec = SynthLongTailSpec {
            train_size: 300,
            test_size: 100,
            seed: 42,
            ..SynthLongTailSpec::default()
        };
        let (train, test) = synthesize(&spec).unwrap();
        let (train2, test2) = synthesize(&spec).unwrap();
        assert_eq!(train, train2);
        assert_eq!(test, test2);
        assert!(train.missing_classes().is_empty());
        assert_eq!(test.examples()[0].example_id, 300);
        let noisy = train
            .examples()
            .iter()
            .filter(|e| e.has(ATTR_NOISY))
            .count();
        assert!(noisy > 0 && noisy < 40);
        let minority = train
            .examples()
            .iter()
            .filter(|e| e.has(ATTR_MINORITY))
            .count();
        assert!(minority > 0 && minority < 150);
    }

    #[test]
    fn rejects_bad_specs() {
        let bad = SynthLongTailSpec {
            noise_fraction: 1.0,
            ..SynthLongTailSpec::default()
        };
        assert!(bad.validate().is_err());
        let bad = SynthLongTailSpec {
            zipf_exponent: -1.0,
            ..SynthLongTailSpec::default()
        };
        assert!(bad.validate().is_err());
        let bad = SynthLongTailSpec {
            layout: Some(Layout {
                height: 3,
                width: 3,
            }),
            ..SynthLongTailSpec::default()
        };
        assert!(bad.validate().is_err());
    }
}
