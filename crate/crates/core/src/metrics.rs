//! Evaluation quantities: squared loss, multicalibration error, multiaccuracy
//! error and worst-group binned ECE. All probabilities are empirical.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::CalibrationDataset;
use crate::discretize::{discretization_error, Discretizer};
use crate::error::{Error, Result};

/// Largest number of distinct prediction values accepted by
/// [`multicalibration_error`]; continuous predictors must be discretized.
pub const MAX_LEVELS: usize = 10_000;

pub const DEFAULT_ECE_BINS: usize = 10;

fn check_lengths(pred: &[f64], labels: &[f64]) -> Result<()> {
    if pred.len() != labels.len() {
        return Err(Error::data(format!(
            "length mismatch: {} predictions for {} labels",
            pred.len(),
            labels.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::data("empty prediction vector"));
    }
    Ok(())
}

fn check_groups(n: usize, groups: &[u8], k: usize) -> Result<()> {
    if k == 0 || groups.len() != n * k {
        return Err(Error::data(format!(
            "group matrix has {} entries, expected {}x{}",
            groups.len(),
            n,
            k
        )));
    }
    Ok(())
}

/// Mean squared error.
pub fn squared_loss(pred: &[f64], labels: &[f64]) -> Result<f64> {
    check_lengths(pred, labels)?;
    let sum: f64 = pred.iter().zip(labels).map(|(p, y)| (p - y) * (p - y)).sum();
    Ok(sum / pred.len() as f64)
}

/// Multicalibration error of a finite-range predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct McError {
    pub max: f64,
    pub worst_group: usize,
    pub per_group: Vec<f64>,
    /// Groups with no member rows; they contribute 0.
    pub empty_groups: Vec<usize>,
}

/// For each group, the sum over attained prediction values `v` of
/// `Pr[pred=v, g=1] * |E[pred - y | pred=v, g=1]|`; returns the maximum
/// over groups along with the per-group vector.
pub fn multicalibration_error(pred_discrete: &[f64], groups: &[u8], k: usize, labels: &[f64]) -> Result<McError> {
    check_lengths(pred_discrete, labels)?;
    let n = labels.len();
    check_groups(n, groups, k)?;

    let mut level_of: BTreeMap<u64, usize> = BTreeMap::new();
    let mut levels = Vec::with_capacity(n);
    for &p in pred_discrete {
        if !p.is_finite() {
            return Err(Error::data("non-finite prediction"));
        }
        let next = level_of.len();
        let id = *level_of.entry(canonical_bits(p)).or_insert(next);
        if level_of.len() > MAX_LEVELS {
            return Err(Error::data(format!(
                "predictor has more than {MAX_LEVELS} distinct values; discretize it first"
            )));
        }
        levels.push(id);
    }
    let num_levels = level_of.len();

    // per (group, level): residual sum and member count
    let mut resid = vec![0.0; k * num_levels];
    let mut count = vec![0usize; k * num_levels];
    for row in 0..n {
        let r = pred_discrete[row] - labels[row];
        let lv = levels[row];
        for i in 0..k {
            if groups[row * k + i] == 1 {
                resid[i * num_levels + lv] += r;
                count[i * num_levels + lv] += 1;
            }
        }
    }
    let nf = n as f64;
    let mut per_group = vec![0.0; k];
    let mut empty_groups = Vec::new();
    for (i, term) in per_group.iter_mut().enumerate() {
        let cells = i * num_levels..(i + 1) * num_levels;
        if count[cells.clone()].iter().all(|&c| c == 0) {
            empty_groups.push(i);
            continue;
        }
        // Pr[cell] * |mean| = |sum| / n
        *term = resid[cells].iter().map(|s| s.abs()).sum::<f64>() / nf;
    }
    let (worst_group, max) = argmax(&per_group);
    Ok(McError {
        max,
        worst_group,
        per_group,
        empty_groups,
    })
}

fn canonical_bits(v: f64) -> u64 {
    // -0.0 and 0.0 are the same level
    if v == 0.0 {
        0
    } else {
        v.to_bits()
    }
}

fn argmax(v: &[f64]) -> (usize, f64) {
    let mut best = (0, v[0]);
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > best.1 {
            best = (i, x);
        }
    }
    best
}

/// Max over groups of `Pr[g=1] * |E[pred - y | g=1]|`.
pub fn multiaccuracy_error(pred: &[f64], groups: &[u8], k: usize, labels: &[f64]) -> Result<f64> {
    check_lengths(pred, labels)?;
    let n = labels.len();
    check_groups(n, groups, k)?;
    let mut sums = vec![0.0; k];
    for row in 0..n {
        let r = pred[row] - labels[row];
        for (i, s) in sums.iter_mut().enumerate() {
            if groups[row * k + i] == 1 {
                *s += r;
            }
        }
    }
    Ok(sums.iter().map(|s| s.abs() / n as f64).fold(0.0, f64::max))
}

/// Max over nonempty groups of the within-group binned ECE with `bins`
/// equal-width bins on [0,1].
pub fn worst_group_binned_ece(pred: &[f64], groups: &[u8], k: usize, labels: &[f64], bins: usize) -> Result<f64> {
    check_lengths(pred, labels)?;
    let n = labels.len();
    check_groups(n, groups, k)?;
    if bins == 0 {
        return Err(Error::config("binned ECE needs at least one bin"));
    }
    let mut worst: f64 = 0.0;
    for i in 0..k {
        let mut pred_sum = vec![0.0; bins];
        let mut label_sum = vec![0.0; bins];
        let mut count = vec![0usize; bins];
        let mut members = 0usize;
        for row in 0..n {
            if groups[row * k + i] != 1 {
                continue;
            }
            let b = ((pred[row] * bins as f64).floor().max(0.0) as usize).min(bins - 1);
            pred_sum[b] += pred[row];
            label_sum[b] += labels[row];
            count[b] += 1;
            members += 1;
        }
        if members == 0 {
            continue;
        }
        // (n_b / n_g) |mean pred - mean y| = |sum pred - sum y| / n_g
        let ece: f64 = (0..bins)
            .filter(|&b| count[b] > 0)
            .map(|b| (pred_sum[b] - label_sum[b]).abs())
            .sum::<f64>()
            / members as f64;
        worst = worst.max(ece);
    }
    Ok(worst)
}

/// All metrics for one predictor on one dataset at one discretization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub m: usize,
    pub nonempty_range: usize,
    pub squared_loss: f64,
    pub mc_error: f64,
    pub worst_group_index: usize,
    pub per_group_mc: Vec<f64>,
    pub multiaccuracy_error: f64,
    pub worst_group_binned_ece: f64,
    pub ece_bins: usize,
    pub epsilon_round: f64,
}

/// Evaluates continuous (or already discrete) predictions: losses,
/// multiaccuracy and ECE use `pred` as given; multicalibration uses `d(pred)`.
pub fn evaluate(ds: &CalibrationDataset, pred: &[f64], d: &Discretizer, bins: usize) -> Result<EvaluationReport> {
    let k = ds.num_groups();
    let discrete = d.apply(pred);
    let mc = multicalibration_error(&discrete, ds.groups(), k, ds.labels())?;
    Ok(EvaluationReport {
        m: d.m(),
        nonempty_range: d.nonempty_range_size(pred),
        squared_loss: squared_loss(pred, ds.labels())?,
        mc_error: mc.max,
        worst_group_index: mc.worst_group,
        per_group_mc: mc.per_group,
        multiaccuracy_error: multiaccuracy_error(pred, ds.groups(), k, ds.labels())?,
        worst_group_binned_ece: worst_group_binned_ece(pred, ds.groups(), k, ds.labels(), bins)?,
        ece_bins: bins,
        epsilon_round: discretization_error(ds, pred, d)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn squared_loss_examples() {
        assert_eq!(squared_loss(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_eq!(squared_loss(&[0.5, 0.5], &[0.0, 1.0]).unwrap(), 0.25);
        let l = squared_loss(&[0.2, 0.8, 0.4], &[0.0, 1.0, 1.0]).unwrap();
        assert!((l - 0.44 / 3.0).abs() < 1e-15);
        assert!(squared_loss(&[0.1], &[0.1, 0.2]).is_err());
    }

    #[test]
    fn running_example_mc_error() {
        let pred = [0.5; 4];
        let y = [1.0, 1.0, 0.0, 0.0];
        let g = [1, 1, 0, 0];
        let mc = multicalibration_error(&pred, &g, 1, &y).unwrap();
        assert!((mc.max - 0.25).abs() < 1e-15);
        assert!((multiaccuracy_error(&pred, &g, 1, &y).unwrap() - 0.25).abs() < 1e-15);
        let ece = worst_group_binned_ece(&pred, &g, 1, &y, 10).unwrap();
        assert!((ece - 0.5).abs() < 1e-15);
    }

    #[test]
    fn calibrated_cells_have_zero_error() {
        let pred = [0.5, 0.5, 0.25, 0.25];
        let y = [1.0, 0.0, 0.5, 0.0];
        let g = [1, 1, 1, 1];
        assert_eq!(multicalibration_error(&pred, &g, 1, &y).unwrap().max, 0.0);
        let exact = [1.0, 0.0, 1.0];
        assert_eq!(worst_group_binned_ece(&exact, &[1, 1, 1], 1, &exact, 10).unwrap(), 0.0);
        assert_eq!(multiaccuracy_error(&exact, &[1, 1, 1], 1, &exact).unwrap(), 0.0);
    }

    #[test]
    fn xor_population_predictor_has_gamma_over_four() {
        let gamma = 0.2;
        let mut pred = Vec::new();
        let mut y = Vec::new();
        let mut g = Vec::new();
        for cell in 0..8u8 {
            let (g1, g2, g3) = (cell & 1, (cell >> 1) & 1, (cell >> 2) & 1);
            let lin = 0.5 * g1 as f64 + 0.25 * g2 as f64 + 0.125 * g3 as f64;
            pred.push((1.0 - gamma) * lin + gamma / 2.0);
            y.push((1.0 - gamma) * lin + gamma * (g1 ^ g2 ^ g3) as f64);
            g.extend([g1, g2, g3]);
        }
        let mc = multicalibration_error(&pred, &g, 3, &y).unwrap();
        for v in mc.per_group {
            assert!((v - 0.05).abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn one_bin_ece_is_mean_gap() {
        let pred = [0.2, 0.9, 0.4];
        let y = [0.0, 1.0, 1.0];
        let ece = worst_group_binned_ece(&pred, &[1, 1, 1], 1, &y, 1).unwrap();
        assert!((ece - (1.5f64 / 3.0 - 2.0 / 3.0).abs()).abs() < 1e-15);
    }

    #[test]
    fn empty_groups_are_flagged() {
        let mc = multicalibration_error(&[0.5, 0.5], &[1, 0, 1, 0], 2, &[1.0, 0.0]).unwrap();
        assert_eq!(mc.empty_groups, vec![1]);
        assert_eq!(mc.per_group[1], 0.0);
    }

    #[test]
    fn too_many_levels_is_rejected() {
        let n = MAX_LEVELS + 1;
        let pred: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        let y = vec![0.0; n];
        let g = vec![1u8; n];
        assert!(multicalibration_error(&pred, &g, 1, &y).is_err());
    }

    #[test]
    fn constant_predictor_mc_equals_multiaccuracy() {
        let pred = [0.3; 5];
        let y = [0.1, 0.9, 0.4, 0.0, 1.0];
        let g = [1, 0, 1, 1, 0, 1, 0, 0, 1, 1];
        let mc = multicalibration_error(&pred, &g, 2, &y).unwrap().max;
        let ma = multiaccuracy_error(&pred, &g, 2, &y).unwrap();
        assert!((mc - ma).abs() < 1e-15);
    }
}
