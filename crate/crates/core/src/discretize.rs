//! m-discretization: monotone, right-continuous step maps with at most `m`
//! output values.
//!
//! Every discretizer is stored as sorted interior boundaries `b_1 < ... <
//! b_{c-1}` plus `c` non-decreasing outputs; `v` maps to `outputs[j]` where
//! `j` counts boundaries `<= v`. Using `<=` makes every step right-continuous.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::data::CalibrationDataset;
use crate::error::{Error, Result};
use crate::metrics::squared_loss;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiscretizerKind {
    Grid,
    Quantile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretizer {
    kind: DiscretizerKind,
    m: usize,
    boundaries: Vec<f64>,
    outputs: Vec<f64>,
}

impl Discretizer {
    /// Nearest point of `{1/(2m), 3/(2m), ..., (2m-1)/(2m)}`, ties upward.
    pub fn grid(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::config("discretizer needs m >= 1"));
        }
        let mf = m as f64;
        let boundaries = (1..m).map(|k| k as f64 / mf).collect();
        let outputs = (0..m).map(|k| (2 * k + 1) as f64 / (2.0 * mf)).collect();
        Ok(Self {
            kind: DiscretizerKind::Grid,
            m,
            boundaries,
            outputs,
        })
    }

    /// Cells at empirical quantiles of `scores`; each cell outputs the mean
    /// of the scores it contains. With at most `m` distinct scores every
    /// distinct score gets its own cell.
    pub fn quantile(m: usize, scores: &[f64]) -> Result<Self> {
        if m == 0 {
            return Err(Error::config("discretizer needs m >= 1"));
        }
        if scores.is_empty() {
            return Err(Error::data("quantile discretizer needs at least one score"));
        }
        if scores.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("quantile discretizer got a non-finite score"));
        }
        let mut sorted = scores.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let mut distinct = sorted.clone();
        distinct.dedup();

        let boundaries: Vec<f64> = if distinct.len() <= m {
            distinct[1..].to_vec()
        } else {
            let mut cuts = Vec::with_capacity(m - 1);
            for k in 1..m {
                let b = sorted[k * n / m];
                if b > sorted[0] && cuts.last().is_none_or(|&last| b > last) {
                    cuts.push(b);
                }
            }
            cuts
        };

        let cells = boundaries.len() + 1;
        let mut sums = vec![0.0; cells];
        let mut counts = vec![0usize; cells];
        for &v in &sorted {
            let j = boundaries.partition_point(|&b| b <= v);
            sums[j] += v;
            counts[j] += 1;
        }
        // every cell is nonempty: each boundary is itself an observed score
        let outputs = sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect();
        Ok(Self {
            kind: DiscretizerKind::Quantile,
            m,
            boundaries,
            outputs,
        })
    }

    pub fn kind(&self) -> DiscretizerKind {
        self.kind
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    pub fn cell(&self, v: f64) -> usize {
        self.boundaries.partition_point(|&b| b <= v)
    }

    pub fn map(&self, v: f64) -> f64 {
        self.outputs[self.cell(v)]
    }

    pub fn apply(&self, scores: &[f64]) -> Vec<f64> {
        scores.iter().map(|&v| self.map(v)).collect()
    }

    /// Whether `v` is one of this discretizer's output values.
    pub fn in_codomain(&self, v: f64) -> bool {
        self.outputs.contains(&v)
    }

    /// Number of distinct outputs actually attained on `scores`.
    pub fn nonempty_range_size(&self, scores: &[f64]) -> usize {
        scores.iter().map(|&v| self.cell(v)).collect::<BTreeSet<_>>().len()
    }
}

/// Signed squared-loss change caused by discretizing `pred`:
/// `loss(d(pred)) - loss(pred)`.
pub fn discretization_error(ds: &CalibrationDataset, pred: &[f64], d: &Discretizer) -> Result<f64> {
    if pred.len() != ds.n() {
        return Err(Error::data(format!(
            "length mismatch: {} predictions for {} rows",
            pred.len(),
            ds.n()
        )));
    }
    let discrete = d.apply(pred);
    Ok(squared_loss(&discrete, ds.labels())? - squared_loss(pred, ds.labels())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rounds_to_nearest_center() {
        let d = Discretizer::grid(10).unwrap();
        assert!((d.map(0.52) - 0.55).abs() < 1e-15);
        assert_eq!(d.map(0.50), d.outputs()[5]);
        assert!((d.map(0.50) - 0.55).abs() < 1e-15);
        assert_eq!(d.map(0.0), 0.05);
        assert_eq!(d.map(1.0), 0.95);
        let one = Discretizer::grid(1).unwrap();
        for v in [0.0, 0.3, 0.5, 0.99, 1.0] {
            assert_eq!(one.map(v), 0.5);
        }
        assert!(Discretizer::grid(0).is_err());
    }

    #[test]
    fn quantile_cells_use_means() {
        let d = Discretizer::quantile(2, &[0.1, 0.2, 0.8, 0.9]).unwrap();
        let out = d.apply(&[0.1, 0.2, 0.8, 0.9]);
        assert!((out[0] - 0.15).abs() < 1e-15 && (out[1] - 0.15).abs() < 1e-15);
        assert!((out[2] - 0.85).abs() < 1e-15 && (out[3] - 0.85).abs() < 1e-15);

        let scores = [0.3, 0.1, 0.3, 0.7, 0.1, 0.1, 0.1, 0.1];
        let d = Discretizer::quantile(3, &scores).unwrap();
        assert_eq!(d.apply(&scores), scores.to_vec());

        let d = Discretizer::quantile(1, &[0.2, 0.4, 0.9]).unwrap();
        assert!((d.map(0.0) - 0.5).abs() < 1e-15);
        assert!(Discretizer::quantile(0, &[0.2]).is_err());
        assert!(Discretizer::quantile(2, &[]).is_err());
    }

    #[test]
    fn discretization_error_examples() {
        let ds = CalibrationDataset::new(vec![0.5], vec![1], vec![0.52], vec!["a".into()]).unwrap();
        let d = Discretizer::grid(10).unwrap();
        let e = discretization_error(&ds, &[0.52], &d).unwrap();
        assert!((e - 9e-4).abs() < 1e-15, "{e}");

        let on_grid = discretization_error(&ds, &[0.55], &d).unwrap();
        assert_eq!(on_grid, 0.0);

        let ds2 = CalibrationDataset::new(vec![0.5; 2], vec![1, 1], vec![0.0, 1.0], vec!["a".into()]).unwrap();
        for m in [1, 3, 10] {
            let d = Discretizer::grid(m).unwrap();
            let c = d.map(0.5);
            let e = discretization_error(&ds2, &[0.5, 0.5], &d).unwrap();
            assert!((e - (c - 0.5).powi(2)).abs() < 1e-15);
        }
        assert!(discretization_error(&ds2, &[0.5], &d).is_err());
    }

    #[test]
    fn range_size_counts_attained_cells() {
        let d = Discretizer::grid(10).unwrap();
        assert_eq!(d.nonempty_range_size(&[0.5; 7]), 1);
        let centers: Vec<f64> = (0..10).map(|k| (2 * k + 1) as f64 / 20.0).collect();
        assert_eq!(d.nonempty_range_size(&centers), 10);

        let d = Discretizer::grid(100).unwrap();
        let scores: Vec<f64> = (0..20).map(|i| i as f64 / 19.0).collect();
        // brute force: distinct rounded indices of floor(100 v), top clamped
        let mut idx: Vec<usize> = scores.iter().map(|&v| ((v * 100.0).floor() as usize).min(99)).collect();
        idx.dedup();
        assert_eq!(d.nonempty_range_size(&scores), idx.len());
    }
}
