//! L1-regularized linear correction on group indicators, fitted by cyclic
//! coordinate descent.

use serde::{Deserialize, Serialize};

use super::{CalibratedModel, CalibratorKind, Payload};
use crate::data::CalibrationDataset;
use crate::error::{Error, Result};

const TOLERANCE: f64 = 1e-10;
const MAX_SWEEPS: usize = 10_000;

/// `clamp(f0 + intercept + weights . g, 0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub weights: Vec<f64>,
    pub lambda: f64,
}

impl LinearModel {
    pub fn raw(&self, f0: f64, g: &[u8]) -> f64 {
        f0 + self.intercept
            + self
                .weights
                .iter()
                .zip(g)
                .filter(|(_, &gi)| gi == 1)
                .map(|(w, _)| w)
                .sum::<f64>()
    }

    pub fn predict(&self, f0: f64, g: &[u8]) -> f64 {
        self.raw(f0, g).clamp(0.0, 1.0)
    }
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Minimizes `mean((y - f0 - b - w.g)^2) + lambda * |w|_1`, leaving the
/// intercept unpenalized. Stops when no coefficient moves by more than
/// 1e-10 in a sweep, or after 10000 sweeps.
pub fn fit_linear(ds: &CalibrationDataset, lambda: f64) -> Result<LinearModel> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::config(format!("lambda must be >= 0, got {lambda}")));
    }
    let n = ds.n();
    let k = ds.num_groups();
    let nf = n as f64;
    // e = r - b - w.g, kept current through every update
    let mut e: Vec<f64> = (0..n).map(|r| ds.labels()[r] - ds.base_scores()[r]).collect();
    let members: Vec<Vec<usize>> = (0..k)
        .map(|i| (0..n).filter(|&r| ds.in_group(r, i)).collect())
        .collect();
    let mut b = 0.0;
    let mut w = vec![0.0; k];
    for _ in 0..MAX_SWEEPS {
        let mut largest = 0.0f64;
        let shift = e.iter().sum::<f64>() / nf;
        b += shift;
        e.iter_mut().for_each(|x| *x -= shift);
        largest = largest.max(shift.abs());
        for i in 0..k {
            if members[i].is_empty() {
                continue;
            }
            let z = members[i].len() as f64 / nf;
            let rho = members[i].iter().map(|&r| e[r]).sum::<f64>() / nf + z * w[i];
            // the squared term carries no 1/2, so the threshold is lambda / 2
            let new = soft_threshold(rho, lambda / 2.0) / z;
            let delta = new - w[i];
            if delta != 0.0 {
                for &r in &members[i] {
                    e[r] -= delta;
                }
                w[i] = new;
            }
            largest = largest.max(delta.abs());
        }
        if largest < TOLERANCE {
            break;
        }
    }
    if !b.is_finite() || w.iter().any(|x| !x.is_finite()) {
        return Err(Error::numeric("coordinate descent diverged"));
    }
    Ok(LinearModel {
        intercept: b,
        weights: w,
        lambda,
    })
}

pub fn calibrate_multiaccurate(ds: &CalibrationDataset, lambda: f64) -> Result<CalibratedModel> {
    Ok(CalibratedModel {
        kind: CalibratorKind::Multiaccurate,
        num_groups: ds.num_groups(),
        discretizer: None,
        payload: Payload::Linear(fit_linear(ds, lambda)?),
    })
}
