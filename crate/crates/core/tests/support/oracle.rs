use std::collections::BTreeSet;
use std::f64::consts::FRAC_PI_2;

/// Welch statistic and Welch-Satterthwaite degrees of freedom from the
/// textbook formulas, with two-pass variances.
pub fn welch_t_df(a: &[f64], b: &[f64]) -> (f64, f64) {
    let stats = |x: &[f64]| {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let ss: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
        (n, mean, ss / (n - 1.0))
    };
    let (na, ma, va) = stats(a);
    let (nb, mb, vb) = stats(b);
    let qa = va / na;
    let qb = vb / nb;
    let t = (ma - mb) / (qa + qb).sqrt();
    let df = (qa + qb).powi(2) / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
    (t, df)
}

/// Unnormalized Student-t density.
fn t_kernel(x: f64, nu: f64) -> f64 {
    (-(nu + 1.0) / 2.0 * (x * x / nu).ln_1p()).exp()
}

/// Exp-sinh quadrature of `f` over `[a, inf)`, refined until two successive
/// step sizes agree to 1e-15 relative.
fn exp_sinh(f: impl Fn(f64) -> f64, a: f64) -> f64 {
    const S_MAX: f64 = 4.5;
    let mut h = 0.25;
    let mut prev = f64::NAN;
    for _ in 0..14 {
        let n = (S_MAX / h).ceil() as i64;
        let mut sum = 0.0;
        for k in -n..=n {
            let s = k as f64 * h;
            let e = (FRAC_PI_2 * s.sinh()).exp();
            let w = FRAC_PI_2 * s.cosh() * e;
            let v = f(a + e);
            if v > 0.0 {
                sum += w * v;
            }
        }
        let value = sum * h;
        if (value - prev).abs() <= 1e-15 * value.abs() {
            return value;
        }
        prev = value;
        h /= 2.0;
    }
    prev
}

/// Two-sided Student-t tail probability by numerical integration of the
/// density; needs no gamma or beta function.
pub fn t_two_sided_p(t: f64, nu: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    let tail = exp_sinh(|x| t_kernel(x, nu), t.abs());
    let half = exp_sinh(|x| t_kernel(x, nu), 0.0);
    (tail / half).min(1.0)
}

/// Modal label by explicit histogram; ties go to the lowest label.
pub fn modal(votes: &[usize], num_classes: usize) -> usize {
    let mut hist = vec![0usize; num_classes];
    for &v in votes {
        hist[v] += 1;
    }
    let mut best = 0;
    for c in 1..num_classes {
        if hist[c] > hist[best] {
            best = c;
        }
    }
    best
}

/// PIE ids from raw top-1 votes: `votes[model][example]`.
pub fn pie_ids(
    example_ids: &[u64],
    base_votes: &[Vec<usize>],
    comp_votes: &[Vec<usize>],
    num_classes: usize,
) -> BTreeSet<u64> {
    let column = |votes: &[Vec<usize>], i: usize| votes.iter().map(|m| m[i]).collect::<Vec<_>>();
    example_ids
        .iter()
        .enumerate()
        .filter(|&(i, _)| {
            modal(&column(base_votes, i), num_classes) != modal(&column(comp_votes, i), num_classes)
        })
        .map(|(_, &id)| id)
        .collect()
}

/// Robustness normalization straight from its definition.
pub fn relative_change(comp: f64, base: f64) -> f64 {
    (comp - base) / base * 100.0
}
