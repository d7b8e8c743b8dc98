mod support;

use compresslens::stats_audit::special::student_t_two_sided;
use compresslens::stats_audit::welch_t_test;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::oracle;

#[test]
fn oracle_matches_closed_forms() {
    // df = 1 is Cauchy: p = 1 - 2 atan(t) / pi
    for t in [0.1, 1.0, 3.0, 40.0] {
        let exact = 1.0 - 2.0 * f64::atan(t) / std::f64::consts::PI;
        assert!(
            (oracle::t_two_sided_p(t, 1.0) - exact).abs() < 1e-13,
            "t={t}"
        );
    }
    // df = 2: p = 1 - t / sqrt(2 + t^2)
    for t in [0.2f64, 2.0, 9.0] {
        let exact = 1.0 - t / (2.0 + t * t).sqrt();
        assert!(
            (oracle::t_two_sided_p(t, 2.0) - exact).abs() < 1e-13,
            "t={t}"
        );
    }
    assert_eq!(oracle::t_two_sided_p(0.0, 7.3), 1.0);
}

#[test]
fn worked_example() {
    let a = [0.80, 0.82, 0.81];
    let b = [0.70, 0.72, 0.71];
    let r = welch_t_test(&a, &b).unwrap();
    let (t, df) = oracle::welch_t_df(&a, &b);
    assert!((r.t_stat - t).abs() <= 1e-12 * t.abs());
    assert!((r.df - df).abs() <= 1e-12 * df);
    // equal variances and sizes: t = 0.1 / sqrt(2 * 1e-4 / 3), df = 4
    assert!((t - 12.247448713915889).abs() < 1e-9);
    assert!((df - 4.0).abs() < 1e-9);
    assert!((r.p_value - oracle::t_two_sided_p(t, df)).abs() < 1e-9);
}

#[test]
fn randomized_pairs_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for case in 0..200 {
        let na = rng.gen_range(2..=50);
        let nb = rng.gen_range(2..=50);
        let shift: f64 = rng.gen_range(-1.0..1.0);
        let sa: f64 = rng.gen_range(0.01..2.0);
        let sb: f64 = rng.gen_range(0.01..2.0);
        let a: Vec<f64> = (0..na)
            .map(|_| rng.gen_range(-1.0..1.0) * sa + shift)
            .collect();
        let b: Vec<f64> = (0..nb).map(|_| rng.gen_range(-1.0..1.0) * sb).collect();
        let r = welch_t_test(&a, &b).unwrap();
        let (t, df) = oracle::welch_t_df(&a, &b);
        assert!(
            (r.t_stat - t).abs() <= 1e-12 * t.abs().max(1.0),
            "case {case}: t"
        );
        assert!((r.df - df).abs() <= 1e-12 * df.max(1.0), "case {case}: df");
        let p = oracle::t_two_sided_p(t, df);
        assert!(
            (r.p_value - p).abs() < 1e-9,
            "case {case}: p {} vs {p}",
            r.p_value
        );
    }
}

#[test]
fn survival_function_on_a_grid() {
    for df in [1.0, 1.5, 3.0, 7.7, 30.0, 250.0] {
        for i in 0..60 {
            let t = i as f64 * 0.25;
            let p = student_t_two_sided(t, df);
            assert!(
                (p - oracle::t_two_sided_p(t, df)).abs() < 1e-10,
                "t={t} df={df}"
            );
        }
    }
}
