#![allow(dead_code)]

use multical::CalibrationDataset;
use proptest::prelude::*;

/// A small dataset whose base scores take at most `max_levels` distinct
/// values.
#[derive(Debug, Clone)]
pub struct Instance {
    pub ds: CalibrationDataset,
}

pub fn names(k: usize) -> Vec<String> {
    (0..k).map(|i| format!("g{i}")).collect()
}

pub fn instance(max_n: usize, max_k: usize, max_levels: usize) -> impl Strategy<Value = Instance> {
    (1..=max_n, 1..=max_k, 1..=max_levels).prop_flat_map(|(n, k, l)| {
        (
            prop::collection::vec(0.0f64..=1.0, l),
            prop::collection::vec(0..l, n),
            prop::collection::vec(0u8..=1, n * k),
            prop::collection::vec(0.0f64..=1.0, n),
        )
            .prop_map(move |(levels, pick, groups, labels)| {
                let base = pick.iter().map(|&j| levels[j]).collect();
                Instance {
                    ds: CalibrationDataset::new(base, groups, labels, names(k)).unwrap(),
                }
            })
    })
}

/// Every group assignment in `{0,1}^k`.
pub fn all_assignments(k: usize) -> Vec<Vec<u8>> {
    (0..1usize << k)
        .map(|bits| (0..k).map(|i| ((bits >> i) & 1) as u8).collect())
        .collect()
}
