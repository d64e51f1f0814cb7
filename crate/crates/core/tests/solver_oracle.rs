mod common;

use common::names;
use multical::oracle::optimal_patch_loss;
use multical::{fit_greedy, fit_squarelev, BoostConfig, CalibrationDataset, Discretizer, SplitFamily, SquareLevConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn exact_fit_config() -> BoostConfig {
    BoostConfig {
        learning_rate: 1.0,
        max_trees: 2000,
        holdout_fraction: 0.0,
        family: SplitFamily::Strict,
        clamp: false,
        ..Default::default()
    }
}

/// Rows with a base already on a grid of size `m`.
fn discrete_instance() -> impl Strategy<Value = CalibrationDataset> {
    (1usize..=200, 1usize..=3, 1usize..=3).prop_flat_map(|(n, k, m)| {
        (
            prop::collection::vec(0.0f64..=1.0, n),
            prop::collection::vec(0u8..=1, n * k),
            prop::collection::vec(0.0f64..=1.0, n),
        )
            .prop_map(move |(raw, groups, labels)| {
                let base = Discretizer::grid(m).unwrap().apply(&raw);
                CalibrationDataset::new(base, groups, labels, names(k)).unwrap()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn greedy_reaches_the_patch_class_optimum(ds in discrete_instance()) {
        let (_, trace) = fit_greedy(&ds, &exact_fit_config()).unwrap();
        let ours = trace.records.last().map_or(trace.initial_train_loss, |r| r.train_loss);
        let (oracle, _) = optimal_patch_loss(&ds, ds.base_scores()).unwrap();
        prop_assert!(ours >= oracle - 1e-9, "below the optimum: {ours} < {oracle}");
        prop_assert!(ours - oracle <= 1e-6, "{ours} vs {oracle} after {} trees", trace.kept_trees);
    }
}

#[test]
fn squarelev_steps_contract_variance_exactly() {
    let mut steps = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(20..200);
        let k = rng.gen_range(1..=4);
        let base: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        let groups: Vec<u8> = (0..n * k).map(|_| rng.gen_bool(0.4) as u8).collect();
        let labels: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        let ds = CalibrationDataset::new(base, groups, labels, names(k)).unwrap();
        let cfg = SquareLevConfig {
            t_max: 25,
            ..Default::default()
        };
        let (_, trace) = fit_squarelev(&ds, &cfg).unwrap();
        for r in &trace.records {
            let eps = r.edge.unwrap();
            let before = r.variance_before.unwrap();
            let after = r.variance_after.unwrap();
            let expected = (1.0 - eps * eps) * before;
            assert!(
                (after - expected).abs() <= 1e-9 * before,
                "seed {seed} step {}: {after} vs {expected}",
                r.iteration
            );
            steps += 1;
        }
    }
    assert!(steps > 100);
}
