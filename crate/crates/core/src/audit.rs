//! Loss-saturation audit, the multicalibration bound check, and the
//! sample-size calculator.

use serde::{Deserialize, Serialize};

use crate::boost::{fit_greedy, BoostConfig, FitTrace};
use crate::calibrators::{calibrate_ours, CalibratedModel, CalibratorKind};
use crate::data::CalibrationDataset;
use crate::discretize::{discretization_error, Discretizer};
use crate::error::{Error, Result};
use crate::metrics::{multicalibration_error, squared_loss};
use crate::tree::EnsemblePredictor;

pub const DEFAULT_SATURATION_THRESHOLD: f64 = 1e-3;
pub const DEFAULT_DELTA: f64 = 0.05;

/// Test-set losses of the base scores, the calibrated model, and a second
/// boosting pass run on top of the calibrated model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationReport {
    pub loss_f0: f64,
    pub loss_fcal: f64,
    pub loss_second_pass: f64,
    /// `loss_fcal - loss_second_pass`; negative when the second pass
    /// overfits.
    pub epsilon_hat_loss: f64,
    pub threshold: f64,
    pub passes: bool,
    pub first_pass_trees: usize,
    pub second_pass_trees: usize,
}

#[derive(Debug, Clone)]
pub struct SaturationAudit {
    pub report: SaturationReport,
    pub model: CalibratedModel,
    pub first_trace: FitTrace,
    pub second_pass: EnsemblePredictor,
    pub second_trace: FitTrace,
}

fn check_compatible(a: &CalibrationDataset, b: &CalibrationDataset) -> Result<()> {
    if a.num_groups() != b.num_groups() || a.group_names() != b.group_names() {
        return Err(Error::data(format!(
            "group mismatch: calibration set has {:?}, test set has {:?}",
            a.group_names(),
            b.group_names()
        )));
    }
    Ok(())
}

/// Calibrates on `cal`, then boosts again on `cal` with the calibrated
/// predictions as base scores; all three losses are measured on `test`.
pub fn audit_saturation(
    cal: &CalibrationDataset,
    test: &CalibrationDataset,
    cfg: &BoostConfig,
    threshold: f64,
) -> Result<SaturationAudit> {
    check_compatible(cal, test)?;
    if threshold.is_nan() || threshold < 0.0 {
        return Err(Error::config(format!("threshold must be >= 0, got {threshold}")));
    }
    let (model, first_trace) = calibrate_ours(cal, cfg)?;
    let cal2 = cal.with_base_scores(model.predict_dataset(cal)?)?;
    let (second_pass, second_trace) = fit_greedy(&cal2, cfg)?;

    let fcal_test = model.predict_dataset(test)?;
    let second_test = second_pass.predict_dataset(&test.with_base_scores(fcal_test.clone())?)?;
    let loss_f0 = squared_loss(test.base_scores(), test.labels())?;
    let loss_fcal = squared_loss(&fcal_test, test.labels())?;
    let loss_second_pass = squared_loss(&second_test, test.labels())?;
    let epsilon_hat_loss = loss_fcal - loss_second_pass;
    let report = SaturationReport {
        loss_f0,
        loss_fcal,
        loss_second_pass,
        epsilon_hat_loss,
        threshold,
        passes: epsilon_hat_loss.abs() < threshold,
        first_pass_trees: first_trace.kept_trees,
        second_pass_trees: second_trace.kept_trees,
    };
    Ok(SaturationAudit {
        report,
        model,
        first_trace,
        second_pass,
        second_trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub m: usize,
    pub mc_error: f64,
    pub epsilon_hat_loss: f64,
    pub epsilon_round: f64,
    /// `sqrt(max(0, epsilon_hat_loss) + max(0, epsilon_round))`.
    pub bound: f64,
    pub slack: f64,
    pub delta: f64,
    pub satisfied: bool,
}

/// Finite-sample allowance `2 sqrt(ln(2K/delta) / 2n)`.
pub fn statistical_slack(n: usize, k: usize, delta: f64) -> f64 {
    2.0 * ((2.0 * k as f64 / delta).ln() / (2.0 * n as f64)).sqrt()
}

/// Checks `mc_error(d(model)) <= sqrt(eps_loss + eps_round) + slack` on
/// `test`, with both epsilons floored at zero.
pub fn check_mc_bound(
    test: &CalibrationDataset,
    model: &CalibratedModel,
    d: &Discretizer,
    saturation: &SaturationReport,
    delta: f64,
) -> Result<BoundCheck> {
    if model.kind != CalibratorKind::Ours {
        return Err(Error::config(format!(
            "the bound applies to continuous models; got a {} model",
            model.kind
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::config(format!("delta must be in (0,1), got {delta}")));
    }
    let pred = model.predict_dataset(test)?;
    let mc = multicalibration_error(&d.apply(&pred), test.groups(), test.num_groups(), test.labels())?;
    let epsilon_round = discretization_error(test, &pred, d)?;
    let bound = (saturation.epsilon_hat_loss.max(0.0) + epsilon_round.max(0.0)).sqrt();
    let slack = statistical_slack(test.n(), test.num_groups(), delta);
    Ok(BoundCheck {
        m: d.m(),
        mc_error: mc.max,
        epsilon_hat_loss: saturation.epsilon_hat_loss,
        epsilon_round,
        bound,
        slack,
        delta,
        satisfied: mc.max <= bound + slack,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleComplexity {
    pub n_trees: u64,
    pub n_samples: u64,
    pub label: String,
}

/// Trees and samples for target error `alpha`, minimum weak-learner edge
/// `epsilon_min`, `num_groups` groups and failure probability `delta`,
/// with every hidden constant set to 1:
/// `N_T = ceil(2 ln(1/alpha) / eps^2)` and
/// `n = ceil(alpha^-4 eps^-4 ln|G| ln^2(1/alpha) + alpha^-4 ln(1/delta))`.
pub fn sample_complexity(alpha: f64, epsilon_min: f64, num_groups: usize, delta: f64) -> Result<SampleComplexity> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config(format!("alpha must be in (0,1), got {alpha}")));
    }
    if !(epsilon_min > 0.0 && epsilon_min <= 1.0) {
        return Err(Error::config(format!(
            "epsilon_min must be in (0,1], got {epsilon_min}"
        )));
    }
    if num_groups == 0 {
        return Err(Error::config("num_groups must be positive"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::config(format!("delta must be in (0,1), got {delta}")));
    }
    let la = (1.0 / alpha).ln();
    let trees = (2.0 * la / (epsilon_min * epsilon_min)).ceil();
    let a4 = alpha.powi(-4);
    let samples = (a4 * epsilon_min.powi(-4) * (num_groups as f64).ln() * la * la + a4 * (1.0 / delta).ln()).ceil();
    let to_int = |v: f64| {
        if v.is_finite() && v < u64::MAX as f64 {
            Ok(v as u64)
        } else {
            Err(Error::numeric(format!("estimate {v} does not fit in 64 bits")))
        }
    };
    Ok(SampleComplexity {
        n_trees: to_int(trees)?,
        n_samples: to_int(samples)?,
        label: "unit-constant asymptotic estimate".into(),
    })
}
