mod common;

use common::{all_assignments, instance};
use multical::oracle::{worst_group_patch, optimal_patch_loss};
use multical::tree::{decompose_to_patches, distinct_levels, patches_to_ensemble, EnsembleMetadata};
use multical::{DepthTwoTree, Discretizer, EnsemblePredictor, LevelSetPatch, SplitPredicate};
use proptest::prelude::*;

const TOL: f64 = 1e-12;

fn predicate(k: usize) -> impl Strategy<Value = SplitPredicate> {
    prop_oneof![
        (0.0f64..=1.0).prop_map(|value| SplitPredicate::Threshold { value }),
        (0..k).prop_map(|index| SplitPredicate::Group { index }),
    ]
}

/// Trees whose root-to-leaf paths never mix two different groups.
fn affine_tree(k: usize) -> impl Strategy<Value = DepthTwoTree> {
    (
        predicate(k),
        predicate(k),
        predicate(k),
        prop::array::uniform4(-1.0f64..1.0),
    )
        .prop_map(|(root, left, right, leaves)| {
            let fix = |child: SplitPredicate| match (root, child) {
                (SplitPredicate::Group { index: a }, SplitPredicate::Group { index: b }) if a != b => root,
                _ => child,
            };
            DepthTwoTree {
                root,
                left: fix(left),
                right: fix(right),
                leaves,
            }
        })
}

fn ensemble_case() -> impl Strategy<Value = (EnsemblePredictor, Vec<f64>, usize)> {
    (1usize..=4).prop_flat_map(|k| {
        (
            prop::collection::vec(affine_tree(k), 0..12),
            prop::collection::vec(0.0f64..=1.0, 1..8),
            Just(k),
        )
            .prop_map(|(trees, base, k)| {
                let meta = EnsembleMetadata {
                    solver: "test".into(),
                    iterations: trees.len(),
                    seed: 0,
                };
                (EnsemblePredictor::new(trees, false, meta), base, k)
            })
    })
}

fn patch_case() -> impl Strategy<Value = LevelSetPatch> {
    (1usize..=4, prop::collection::btree_set(0u32..=1000, 1..8)).prop_flat_map(|(k, grid)| {
        let levels: Vec<f64> = grid.into_iter().map(|v| v as f64 / 1000.0).collect();
        let l = levels.len();
        (
            Just(levels),
            prop::collection::vec(-1.0f64..1.0, l),
            prop::collection::vec(prop::collection::vec(-1.0f64..1.0, k), l),
        )
            .prop_map(|(levels, intercepts, coefficients)| LevelSetPatch {
                levels,
                intercepts,
                coefficients,
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn ensemble_to_patch_agrees_cellwise((e, base, k) in ensemble_case()) {
        let patch = decompose_to_patches(&e, &base, k).unwrap();
        for &v in &distinct_levels(&base) {
            for g in all_assignments(k) {
                let direct = e.correction(v, &g).unwrap();
                prop_assert!((direct - patch.eval(v, &g)).abs() <= TOL, "v={v} g={g:?}");
            }
        }
    }

    #[test]
    fn patch_to_ensemble_agrees_cellwise(patch in patch_case()) {
        let k = patch.num_groups();
        let e = patches_to_ensemble(&patch);
        for (j, &v) in patch.levels.iter().enumerate() {
            for g in all_assignments(k) {
                let direct = e.correction(v, &g).unwrap();
                prop_assert!((direct - patch.eval_level(j, &g)).abs() <= TOL);
            }
        }
        let back = decompose_to_patches(&e, &patch.levels, k).unwrap();
        prop_assert_eq!(&back.levels, &patch.levels);
        for j in 0..patch.levels.len() {
            prop_assert!((back.intercepts[j] - patch.intercepts[j]).abs() <= TOL);
            for i in 0..k {
                prop_assert!((back.coefficients[j][i] - patch.coefficients[j][i]).abs() <= TOL);
            }
        }
    }

    #[test]
    fn constructive_patch_beats_squared_error(inst in instance(64, 4, 5)) {
        let ds = inst.ds;
        let l = worst_group_patch(&ds, ds.base_scores()).unwrap();
        if l.mc_error > 0.0 {
            // reduction > alpha^2 for every alpha below the error; equality at
            // alpha = error needs one group covering all rows with equal |bias|
            let alpha = l.mc_error * (1.0 - 1e-9);
            prop_assert!(l.reduction > alpha * alpha, "{} vs {}", l.reduction, l.mc_error);
            let covers_all = (0..ds.n()).all(|r| ds.in_group(r, l.group));
            if !covers_all {
                prop_assert!(l.reduction > l.mc_error * l.mc_error);
            }
        } else {
            prop_assert_eq!(l.reduction, 0.0);
        }
    }

    #[test]
    fn finer_base_never_loses(inst in instance(60, 3, 12), m in prop::sample::select(vec![2usize, 3, 5])) {
        let ds = inst.ds;
        let (continuous, _) = optimal_patch_loss(&ds, ds.base_scores()).unwrap();
        for d in [Discretizer::grid(m).unwrap(), Discretizer::quantile(m, ds.base_scores()).unwrap()] {
            let coarse_base = d.apply(ds.base_scores());
            let (coarse, _) = optimal_patch_loss(&ds, &coarse_base).unwrap();
            prop_assert!(continuous <= coarse + 1e-9, "{continuous} > {coarse}");
        }
    }
}

#[test]
fn mixed_group_paths_are_rejected() {
    let t = DepthTwoTree {
        root: SplitPredicate::Group { index: 0 },
        left: SplitPredicate::Group { index: 1 },
        right: SplitPredicate::Group { index: 0 },
        leaves: [1.0, 0.0, 0.0, 0.0],
    };
    let e = EnsemblePredictor::new(
        vec![t],
        false,
        EnsembleMetadata {
            solver: "test".into(),
            iterations: 1,
            seed: 0,
        },
    );
    assert!(decompose_to_patches(&e, &[0.5], 2).is_err());
}
