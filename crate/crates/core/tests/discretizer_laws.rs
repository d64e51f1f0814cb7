mod common;

use multical::discretize::discretization_error;
use multical::Discretizer;
use proptest::prelude::*;

const SCAN: usize = 200_000;

fn scan() -> impl Iterator<Item = f64> {
    (0..=SCAN).map(|i| i as f64 / SCAN as f64)
}

fn grids() -> Vec<Discretizer> {
    [1, 2, 10, 100].iter().map(|&m| Discretizer::grid(m).unwrap()).collect()
}

#[test]
fn grid_is_monotone_on_a_dense_scan() {
    for d in grids() {
        let mut prev = f64::NEG_INFINITY;
        for v in scan() {
            let out = d.map(v);
            assert!(out >= prev, "m={} v={v}", d.m());
            prev = out;
        }
    }
}

#[test]
fn grid_is_right_continuous_at_every_boundary() {
    for d in grids() {
        for &b in d.boundaries() {
            let at = d.map(b);
            for e in 3..=9 {
                let delta = 10f64.powi(-e);
                assert_eq!(d.map(b + delta), at, "m={} boundary {b} delta {delta}", d.m());
            }
            // left of the boundary belongs to the previous cell
            assert!(d.map(b - 1e-9) < at);
        }
    }
}

#[test]
fn grid_is_idempotent_with_range_at_most_m() {
    for d in grids() {
        let mut seen = std::collections::BTreeSet::new();
        for v in scan() {
            let once = d.map(v);
            assert_eq!(d.map(once), once);
            assert!(d.in_codomain(once));
            assert!((0.0..=1.0).contains(&once));
            assert!((once - v).abs() <= 0.5 / d.m() as f64 + 1e-15);
            seen.insert(once.to_bits());
        }
        assert_eq!(seen.len(), d.m());
    }
}

#[test]
fn quantile_is_monotone_and_right_continuous() {
    let scores: Vec<f64> = (0..97).map(|i| ((i * 37) % 97) as f64 / 96.0).collect();
    for m in [1, 2, 10, 100] {
        let d = Discretizer::quantile(m, &scores).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for v in scan().step_by(10) {
            let out = d.map(v);
            assert!(out >= prev);
            assert_eq!(d.map(out), out);
            prev = out;
        }
        for &b in d.boundaries() {
            for e in 3..=9 {
                assert_eq!(d.map(b + 10f64.powi(-e)), d.map(b));
            }
        }
        assert!(d.outputs().len() <= m);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn rounding_error_obeys_the_analytic_bound(
        inst in common::instance(64, 3, 64),
        preds in prop::collection::vec(0.0f64..=1.0, 64),
    ) {
        let ds = inst.ds;
        let pred = &preds[..ds.n()];
        for d in grids() {
            let e = discretization_error(&ds, pred, &d).unwrap();
            let h = 0.5 / d.m() as f64;
            prop_assert!(e.abs() <= h * (2.0 + h) + 1e-12, "m={} e={e}", d.m());
        }
    }
}
