//! Brute-force ground truth for small instances: the exact optimum of the
//! per-level-set affine patch class by least squares, the constructive
//! worst-group patch, and a literal enumeration of the multicalibration
//! error. Nothing here shares code with the solvers or the metrics module.

use nalgebra::{DMatrix, DVector};

use crate::data::CalibrationDataset;
use crate::error::{Error, Result};
use crate::tree::{distinct_levels, LevelSetPatch};

fn check_base(ds: &CalibrationDataset, base: &[f64]) -> Result<()> {
    if base.len() != ds.n() {
        return Err(Error::data(format!(
            "length mismatch: {} base values for {} rows",
            base.len(),
            ds.n()
        )));
    }
    if base.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("non-finite base value"));
    }
    Ok(())
}

/// Minimum-norm least squares via the pseudo-inverse of the normal matrix.
fn min_norm_lstsq(x: &DMatrix<f64>, t: &DVector<f64>) -> Result<DVector<f64>> {
    let xtx = x.transpose() * x;
    let xtt = x.transpose() * t;
    let scale = xtx.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1.0);
    let pinv = xtx
        .pseudo_inverse(1e-11 * scale)
        .map_err(|e| Error::numeric(format!("pseudo-inverse failed: {e}")))?;
    Ok(pinv * xtt)
}

/// Best squared loss of `base + patch` over all per-level-set affine
/// patches, solved independently on each level set, and the patch itself.
pub fn optimal_patch_loss(ds: &CalibrationDataset, base_discrete: &[f64]) -> Result<(f64, LevelSetPatch)> {
    check_base(ds, base_discrete)?;
    let k = ds.num_groups();
    let levels = distinct_levels(base_discrete);
    let mut patch = LevelSetPatch::zeros(levels.clone(), k);
    let mut sse = 0.0;
    for (j, &v) in levels.iter().enumerate() {
        let rows: Vec<usize> = (0..ds.n()).filter(|&r| base_discrete[r] == v).collect();
        let x = DMatrix::from_fn(rows.len(), k + 1, |r, c| {
            if c == 0 {
                1.0
            } else {
                ds.group_row(rows[r])[c - 1] as f64
            }
        });
        let t = DVector::from_iterator(rows.len(), rows.iter().map(|&r| ds.labels()[r] - v));
        let coef = min_norm_lstsq(&x, &t)?;
        patch.intercepts[j] = coef[0];
        for i in 0..k {
            patch.coefficients[j][i] = coef[i + 1];
        }
        for &r in &rows {
            let p = v + patch.eval_level(j, ds.group_row(r));
            sse += (p - ds.labels()[r]).powi(2);
        }
    }
    Ok((sse / ds.n() as f64, patch))
}

/// Constructive loss-reducing patch on the worst group.
#[derive(Debug, Clone, PartialEq)]
pub struct WorstGroupPatch {
    pub group: usize,
    pub mc_error: f64,
    pub patch: LevelSetPatch,
    /// `loss(pred) - loss(pred + patch)`, evaluated row by row.
    pub reduction: f64,
}

/// Picks the group with the largest multicalibration error and, on every
/// level, shifts that group's members by minus their mean residual.
pub fn worst_group_patch(ds: &CalibrationDataset, pred_discrete: &[f64]) -> Result<WorstGroupPatch> {
    check_base(ds, pred_discrete)?;
    let n = ds.n();
    let k = ds.num_groups();
    let levels = distinct_levels(pred_discrete);
    let level_of = |v: f64| levels.iter().position(|&l| l == v).unwrap();

    let mut sums = vec![vec![0.0; levels.len()]; k];
    let mut counts = vec![vec![0usize; levels.len()]; k];
    for r in 0..n {
        let j = level_of(pred_discrete[r]);
        for i in 0..k {
            if ds.in_group(r, i) {
                sums[i][j] += pred_discrete[r] - ds.labels()[r];
                counts[i][j] += 1;
            }
        }
    }
    let errors: Vec<f64> = (0..k)
        .map(|i| {
            (0..levels.len())
                .filter(|&j| counts[i][j] > 0)
                .map(|j| counts[i][j] as f64 / n as f64 * (sums[i][j] / counts[i][j] as f64).abs())
                .sum()
        })
        .collect();
    let mut group = 0;
    for i in 1..k {
        if errors[i] > errors[group] {
            group = i;
        }
    }
    let mc_error = errors[group];

    let mut patch = LevelSetPatch::zeros(levels.clone(), k);
    if mc_error > 0.0 {
        for j in 0..levels.len() {
            if counts[group][j] > 0 {
                patch.coefficients[j][group] = -sums[group][j] / counts[group][j] as f64;
            }
        }
    }
    let mut before = 0.0;
    let mut after = 0.0;
    for r in 0..n {
        let p = pred_discrete[r];
        let y = ds.labels()[r];
        let q = p + patch.eval_level(level_of(p), ds.group_row(r));
        before += (p - y).powi(2);
        after += (q - y).powi(2);
    }
    Ok(WorstGroupPatch {
        group,
        mc_error,
        patch,
        reduction: (before - after) / n as f64,
    })
}

/// Multicalibration error by literal enumeration of every (group, value)
/// cell over all rows.
pub fn exhaustive_mc_error(pred_discrete: &[f64], groups: &[u8], k: usize, labels: &[f64]) -> Result<f64> {
    let n = labels.len();
    if pred_discrete.len() != n || groups.len() != n * k {
        return Err(Error::data("shape mismatch"));
    }
    if n > 10_000 {
        return Err(Error::data("exhaustive enumeration is limited to 10000 rows"));
    }
    let mut values: Vec<f64> = Vec::new();
    for &p in pred_discrete {
        if !values.contains(&p) {
            values.push(p);
        }
    }
    let mut worst = 0.0f64;
    for i in 0..k {
        let mut total = 0.0;
        for &v in &values {
            let mut count = 0usize;
            let mut sum = 0.0;
            for r in 0..n {
                if pred_discrete[r] == v && groups[r * k + i] == 1 {
                    count += 1;
                    sum += pred_discrete[r] - labels[r];
                }
            }
            if count > 0 {
                let prob = count as f64 / n as f64;
                total += prob * (sum / count as f64).abs();
            }
        }
        worst = worst.max(total);
    }
    Ok(worst)
}
