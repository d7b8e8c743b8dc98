use serde::{Deserialize, Serialize};

use super::special::student_t_two_sided;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t_stat: f64,
    /// Welch–Satterthwaite degrees of freedom.
    pub df: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    pub mean_a: f64,
    pub mean_b: f64,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance, exactly zero for constant samples.
fn sample_variance(xs: &[f64], mean: f64) -> f64 {
    if xs.iter().all(|&x| x == xs[0]) {
        return 0.0;
    }
    xs.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Two-tailed independent two-sample t-test without the equal-variance assumption.
///
/// When both samples have zero variance the test degenerates: equal means give
/// `t = 0, p = 1`, different means give `t = ±inf, p = 0`, and `df` is reported
/// as `n_a + n_b - 2`.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    for s in [a, b] {
        if s.len() < 2 {
            return Err(Error::SampleTooSmall {
                size: s.len(),
                min: 2,
            });
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mean_a, mean_b) = (mean(a), mean(b));
    let se_a = sample_variance(a, mean_a) / na;
    let se_b = sample_variance(b, mean_b) / nb;
    let se2 = se_a + se_b;

    if se2 == 0.0 {
        let (t_stat, p_value) = if mean_a == mean_b {
            (0.0, 1.0)
        } else if mean_a > mean_b {
            (f64::INFINITY, 0.0)
        } else {
            (f64::NEG_INFINITY, 0.0)
        };
        return Ok(WelchResult {
            t_stat,
            df: na + nb - 2.0,
            p_value,
            mean_a,
            mean_b,
        });
    }

    let t_stat = (mean_a - mean_b) / se2.sqrt();
    let df = se2 * se2 / (se_a * se_a / (na - 1.0) + se_b * se_b / (nb - 1.0));
    let p_value = student_t_two_sided(t_stat, df);
    Ok(WelchResult {
        t_stat,
        df,
        p_value,
        mean_a,
        mean_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples() {
        let a = [0.2, 0.4, 0.1, 0.3];
        let r = welch_t_test(&a, &a).unwrap();
        assert_eq!(r.t_stat, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn antisymmetric() {
        let a = [0.80, 0.82, 0.81, 0.79];
        let b = [0.70, 0.75, 0.71];
        let ab = welch_t_test(&a, &b).unwrap();
        let ba = welch_t_test(&b, &a).unwrap();
        assert_eq!(ab.t_stat, -ba.t_stat);
        assert_eq!(ab.p_value, ba.p_value);
        assert_eq!(ab.df, ba.df);
    }

    #[test]
    fn degenerate_zero_variance() {
        let r = welch_t_test(&[0.5, 0.5, 0.5], &[0.5, 0.5]).unwrap();
        assert_eq!((r.t_stat, r.p_value, r.df), (0.0, 1.0, 3.0));
        let r = welch_t_test(&[0.1, 0.1], &[0.5, 0.5, 0.5]).unwrap();
        assert_eq!((r.t_stat, r.p_value, r.df), (f64::NEG_INFINITY, 0.0, 3.0));
    }

    #[test]
    fn one_constant_sample_uses_other_side_df() {
        let r = welch_t_test(&[0.0, 0.0, 0.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((r.df - 3.0).abs() < 1e-12);
        assert!(r.p_value > 0.0 && r.p_value < 0.05);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            welch_t_test(&[1.0], &[1.0, 2.0]),
            Err(Error::SampleTooSmall { size: 1, .. })
        ));
        assert!(matches!(
            welch_t_test(&[1.0, f64::NAN], &[1.0, 2.0]),
            Err(Error::NonFiniteInput)
        ));
    }
}
