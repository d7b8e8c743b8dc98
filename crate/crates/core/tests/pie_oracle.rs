mod support;

use compresslens::data_model::{CompressionSpec, PredictionLog};
use compresslens::pie_audit::{identify_pies, modal_label, subset_accuracy_per_model};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::oracle;

fn log_from_votes(ids: &[u64], truth: &[usize], votes: &[Vec<usize>], c: usize) -> PredictionLog {
    let rankings = votes
        .iter()
        .map(|m| m.iter().map(|&v| vec![v]).collect())
        .collect();
    PredictionLog::new(
        "p",
        CompressionSpec::NONE,
        c,
        ids.to_vec(),
        truth.to_vec(),
        rankings,
    )
    .unwrap()
}

#[test]
fn modal_label_examples() {
    assert_eq!(modal_label(&[3, 3, 3]).unwrap(), 3);
    assert_eq!(modal_label(&[1, 1, 2]).unwrap(), 1);
    assert_eq!(modal_label(&[2, 1]).unwrap(), 1);
    assert!(modal_label(&[]).is_err());
}

#[test]
fn randomized_logs_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..500 {
        let c = rng.gen_range(1..=5);
        let n = rng.gen_range(1..=50);
        let kb = rng.gen_range(1..=7);
        let kc = rng.gen_range(1..=7);
        let mut ids: Vec<u64> = (0..200).collect();
        ids.shuffle(&mut rng);
        ids.truncate(n);
        let truth: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();
        let mut votes = |k: usize| -> Vec<Vec<usize>> {
            (0..k)
                .map(|_| (0..n).map(|_| rng.gen_range(0..c)).collect())
                .collect()
        };
        let (bv, cv) = (votes(kb), votes(kc));
        let base = log_from_votes(&ids, &truth, &bv, c);
        let comp = log_from_votes(&ids, &truth, &cv, c);
        let got = identify_pies(&base, &comp).unwrap();
        assert_eq!(
            got.pie_ids,
            oracle::pie_ids(&ids, &bv, &cv, c),
            "case {case}"
        );
        assert_eq!(got.records.len(), n);
    }
}

#[test]
fn pies_ignore_truth_and_are_symmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (n, c) = (40, 4);
    let ids: Vec<u64> = (0..n as u64).collect();
    let votes = |rng: &mut ChaCha8Rng| -> Vec<Vec<usize>> {
        (0..5)
            .map(|_| (0..n).map(|_| rng.gen_range(0..c)).collect())
            .collect()
    };
    let (bv, cv) = (votes(&mut rng), votes(&mut rng));
    let truth: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();
    let shuffled: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();
    let a = identify_pies(
        &log_from_votes(&ids, &truth, &bv, c),
        &log_from_votes(&ids, &truth, &cv, c),
    )
    .unwrap();
    let b = identify_pies(
        &log_from_votes(&ids, &shuffled, &bv, c),
        &log_from_votes(&ids, &shuffled, &cv, c),
    )
    .unwrap();
    let r = identify_pies(
        &log_from_votes(&ids, &truth, &cv, c),
        &log_from_votes(&ids, &truth, &bv, c),
    )
    .unwrap();
    assert_eq!(a.pie_ids, b.pie_ids);
    assert_eq!(a.pie_ids, r.pie_ids);
}

#[test]
fn subset_accuracies_recombine() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (n, c) = (37, 3);
    let ids: Vec<u64> = (0..n as u64).collect();
    let truth: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();
    let votes = |rng: &mut ChaCha8Rng| -> Vec<Vec<usize>> {
        (0..4)
            .map(|_| (0..n).map(|_| rng.gen_range(0..c)).collect())
            .collect()
    };
    let base = log_from_votes(&ids, &truth, &votes(&mut rng), c);
    let comp = log_from_votes(&ids, &truth, &votes(&mut rng), c);
    let pies = identify_pies(&base, &comp).unwrap();
    assert!(!pies.is_empty() && pies.len() < n);
    let np = pies.len() as f64;
    for (pie, rest, all) in subset_accuracy_per_model(&base, &pies, 1).unwrap() {
        let lhs = np * pie.unwrap() + (n as f64 - np) * rest.unwrap();
        assert!((lhs - n as f64 * all).abs() < 1e-12);
    }
}
