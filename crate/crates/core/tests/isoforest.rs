use advfilter::isoforest::{
    self, c_factor, score_from_path_length, ForestParams, IsoForest, EULER_GAMMA,
};
use advfilter::rng::SplitMix64;
use proptest::prelude::*;

fn cluster_with_outlier(seed: u64) -> Vec<Vec<f64>> {
    let mut rng = SplitMix64::new(seed);
    let mut rows: Vec<Vec<f64>> = (0..99)
        .map(|_| (0..28).map(|_| rng.uniform(-1.0, 1.0)).collect())
        .collect();
    rows.push(vec![6.0; 28]);
    rows
}

#[test]
fn planted_outlier_scores_highest() {
    for seed in 0..20u64 {
        let rows = cluster_with_outlier(1000 + seed);
        let params = ForestParams {
            seed,
            ..ForestParams::default()
        };
        let forest = isoforest::fit(&rows, &params).unwrap();
        let scores = forest.score_all(&rows, 1).unwrap();
        let best = scores[..99].iter().cloned().fold(f64::MIN, f64::max);
        assert!(scores[99] > best, "seed {seed}: {} vs {best}", scores[99]);
    }
}

#[test]
fn one_dimensional_isolation() {
    let mut rows: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64 * 0.01]).collect();
    rows.push(vec![100.0]);
    let forest = isoforest::fit(&rows, &ForestParams::default()).unwrap();
    let far = forest.score(&[100.0]).unwrap();
    let near = forest.score(&[0.25]).unwrap();
    assert!(far > near);
    assert!(forest.mean_path_length(&[100.0]) < forest.mean_path_length(&[0.25]));
}

#[test]
fn normalisation_identities() {
    assert!((c_factor(2) - (2.0 * EULER_GAMMA - 1.0)).abs() < 1e-15);
    assert!((c_factor(2) - 0.154431).abs() < 1e-6);
    assert_eq!(c_factor(1), 0.0);
    for psi in [2usize, 10, 256] {
        assert_eq!(score_from_path_length(c_factor(psi), psi), 0.5);
    }
}

#[test]
fn calibration_flags_about_contamination_share() {
    for (n, c) in [(100usize, 0.1), (199, 0.4), (57, 0.25)] {
        let mut rng = SplitMix64::new(n as u64);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..4).map(|_| rng.next_f64()).collect())
            .collect();
        let mut forest = isoforest::fit(
            &rows,
            &ForestParams {
                contamination: c,
                ..ForestParams::default()
            },
        )
        .unwrap();
        let scores = forest.score_all(&rows, 1).unwrap();
        let t = forest.calibrate_threshold(&scores).unwrap();
        let flagged = scores.iter().filter(|&&s| s > t).count() as i64;
        let expect = (c * n as f64).ceil() as i64;
        assert!(
            (flagged - expect).abs() <= 1,
            "n {n} c {c}: {flagged} vs {expect}"
        );
    }
}

#[test]
fn serialised_forest_scores_identically() {
    let rows = cluster_with_outlier(5);
    let mut forest = isoforest::fit(&rows, &ForestParams::default()).unwrap();
    let scores = forest.score_all(&rows, 1).unwrap();
    forest.calibrate_threshold(&scores).unwrap();
    let back = IsoForest::from_bytes(&forest.to_bytes()).unwrap();
    assert_eq!(back.score_all(&rows, 1).unwrap(), scores);
    assert_eq!(back.threshold, forest.threshold);
}

proptest! {
    #[test]
    fn tree_structure_invariants(seed in any::<u64>(), n in 2usize..300, dims in 1usize..6) {
        let mut rng = SplitMix64::new(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..dims).map(|_| rng.next_f64()).collect()).collect();
        let params = ForestParams { trees: 5, seed, ..ForestParams::default() };
        let forest = isoforest::fit(&rows, &params).unwrap();
        let psi = n.min(256);
        for tree in &forest.trees {
            prop_assert_eq!(tree.leaf_sizes().sum::<usize>(), psi);
            prop_assert!(tree.depth() <= tree.height_limit);
        }
        for r in &rows {
            let s = forest.score(r).unwrap();
            prop_assert!(s > 0.0 && s <= 1.0);
        }
    }

    #[test]
    fn worker_count_does_not_change_the_forest(seed in any::<u64>(), workers in 2usize..6) {
        let mut rng = SplitMix64::new(seed);
        let rows: Vec<Vec<f64>> = (0..80).map(|_| (0..3).map(|_| rng.next_f64()).collect()).collect();
        let params = ForestParams { trees: 12, seed, ..ForestParams::default() };
        let a = isoforest::fit_with_workers(&rows, &params, 1).unwrap();
        let b = isoforest::fit_with_workers(&rows, &params, workers).unwrap();
        prop_assert_eq!(a.to_bytes(), b.to_bytes());
    }
}
