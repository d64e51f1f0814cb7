//! The four calibration procedures compared by this crate and the model
//! envelope they all serialize to.

mod lsboost;
mod mcboost;
mod multiaccurate;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use lsboost::{calibrate_lsboost, LevelLearner, LsBoostConfig, LsBoostModel};
pub use mcboost::{calibrate_mcboost, McBoostConfig, PatchRecord, PatchTable};
pub use multiaccurate::{calibrate_multiaccurate, LinearModel};

use crate::boost::{fit_greedy, BoostConfig, FitTrace};
use crate::data::CalibrationDataset;
use crate::discretize::{Discretizer, DiscretizerKind};
use crate::error::{Error, Result};
use crate::tree::EnsemblePredictor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CalibratorKind {
    Ours,
    Mcboost,
    Lsboost,
    Multiaccurate,
}

impl CalibratorKind {
    pub const ALL: [CalibratorKind; 4] = [
        CalibratorKind::Ours,
        CalibratorKind::Mcboost,
        CalibratorKind::Lsboost,
        CalibratorKind::Multiaccurate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CalibratorKind::Ours => "ours",
            CalibratorKind::Mcboost => "mcboost",
            CalibratorKind::Lsboost => "lsboost",
            CalibratorKind::Multiaccurate => "multiaccurate",
        }
    }
}

impl std::fmt::Display for CalibratorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for CalibratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CalibratorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("unknown calibrator '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Payload {
    Ensemble(EnsemblePredictor),
    LevelSetBoost(LsBoostModel),
    Patches(PatchTable),
    Linear(LinearModel),
}

/// A fitted calibrator. The JSON form is
/// `{"kind", "num_groups", "discretizer", "payload"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedModel {
    pub kind: CalibratorKind,
    pub num_groups: usize,
    pub discretizer: Option<Discretizer>,
    pub payload: Payload,
}

impl CalibratedModel {
    fn check(&self) -> Result<()> {
        let ok = matches!(
            (self.kind, &self.payload),
            (CalibratorKind::Ours, Payload::Ensemble(_))
                | (CalibratorKind::Mcboost, Payload::Patches(_))
                | (CalibratorKind::Lsboost, Payload::LevelSetBoost(_))
                | (CalibratorKind::Multiaccurate, Payload::Linear(_))
        );
        if !ok {
            return Err(Error::config(format!(
                "payload does not match model kind '{}'",
                self.kind
            )));
        }
        if matches!(self.kind, CalibratorKind::Mcboost | CalibratorKind::Lsboost) && self.discretizer.is_none() {
            return Err(Error::config(format!("{} model is missing its discretizer", self.kind)));
        }
        if let Payload::Linear(l) = &self.payload {
            if l.weights.len() != self.num_groups {
                return Err(Error::config("linear model weight count does not match num_groups"));
            }
        }
        Ok(())
    }

    pub fn predict(&self, f0: f64, g: &[u8]) -> Result<f64> {
        if g.len() != self.num_groups {
            return Err(Error::data(format!(
                "model expects {} groups, got {}",
                self.num_groups,
                g.len()
            )));
        }
        match &self.payload {
            Payload::Ensemble(e) => e.predict(f0, g),
            Payload::Patches(t) => Ok(t.replay(self.discretizer()?, f0, g)),
            Payload::LevelSetBoost(m) => Ok(m.replay(self.discretizer()?, f0, g)),
            Payload::Linear(l) => Ok(l.predict(f0, g)),
        }
    }

    pub fn predict_dataset(&self, ds: &CalibrationDataset) -> Result<Vec<f64>> {
        if ds.num_groups() != self.num_groups {
            return Err(Error::data(format!(
                "model expects {} groups, dataset has {}",
                self.num_groups,
                ds.num_groups()
            )));
        }
        (0..ds.n())
            .map(|r| self.predict(ds.base_scores()[r], ds.group_row(r)))
            .collect()
    }

    pub fn ensemble(&self) -> Option<&EnsemblePredictor> {
        match &self.payload {
            Payload::Ensemble(e) => Some(e),
            _ => None,
        }
    }

    fn discretizer(&self) -> Result<&Discretizer> {
        self.discretizer
            .as_ref()
            .ok_or_else(|| Error::config(format!("{} model is missing its discretizer", self.kind)))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: CalibratedModel = serde_json::from_str(s)?;
        model.check()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

pub(crate) fn require_grid(d: &Discretizer) -> Result<()> {
    if d.kind() != DiscretizerKind::Grid {
        return Err(Error::config("this calibrator needs a grid discretizer"));
    }
    Ok(())
}

/// Greedy depth-two boosting on `(f0, g)` with targets `y - f0`; the result
/// is a continuous, clamped predictor with no discretizer.
pub fn calibrate_ours(ds: &CalibrationDataset, cfg: &BoostConfig) -> Result<(CalibratedModel, FitTrace)> {
    let (ensemble, trace) = fit_greedy(ds, cfg)?;
    Ok((
        CalibratedModel {
            kind: CalibratorKind::Ours,
            num_groups: ds.num_groups(),
            discretizer: None,
            payload: Payload::Ensemble(ensemble),
        },
        trace,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> CalibrationDataset {
        CalibrationDataset::new(
            vec![0.2, 0.4, 0.6, 0.8],
            vec![1, 0, 1, 0],
            vec![0.3, 0.4, 0.7, 0.8],
            vec!["a".into()],
        )
        .unwrap()
    }

    #[test]
    fn kind_names_round_trip() {
        for k in CalibratorKind::ALL {
            assert_eq!(k.name().parse::<CalibratorKind>().unwrap(), k);
        }
        assert!("other".parse::<CalibratorKind>().is_err());
    }

    #[test]
    fn identity_when_labels_equal_scores() {
        let ds = CalibrationDataset::new(
            vec![0.1, 0.5, 0.9, 0.3],
            vec![1, 0, 1, 1],
            vec![0.1, 0.5, 0.9, 0.3],
            vec!["a".into()],
        )
        .unwrap();
        let cfg = BoostConfig {
            holdout_fraction: 0.0,
            ..Default::default()
        };
        let (m, _) = calibrate_ours(&ds, &cfg).unwrap();
        assert_eq!(m.predict_dataset(&ds).unwrap(), ds.base_scores());
    }

    #[test]
    fn each_kind_predicts_one_row() {
        let ds = tiny();
        let d = Discretizer::grid(10).unwrap();
        let cfg = BoostConfig {
            holdout_fraction: 0.0,
            ..Default::default()
        };
        let models = [
            calibrate_ours(&ds, &cfg).unwrap().0,
            calibrate_mcboost(&ds, &d, &McBoostConfig::default()).unwrap().0,
            calibrate_lsboost(&ds, &d, &LsBoostConfig::default()).unwrap().0,
            calibrate_multiaccurate(&ds, 0.0).unwrap(),
        ];
        for m in &models {
            let p = m.predict(0.5, &[1]).unwrap();
            assert!((0.0..=1.0).contains(&p), "{} {p}", m.kind);
            assert!(m.predict(0.5, &[1, 0]).is_err());
            if m.discretizer.is_some() {
                assert!(d.in_codomain(p));
            }
        }
    }

    #[test]
    fn json_envelope_round_trips_every_kind() {
        let ds = tiny();
        let d = Discretizer::grid(5).unwrap();
        let models = [
            calibrate_ours(
                &ds,
                &BoostConfig {
                    holdout_fraction: 0.0,
                    ..Default::default()
                },
            )
            .unwrap()
            .0,
            calibrate_mcboost(&ds, &d, &McBoostConfig::default()).unwrap().0,
            calibrate_lsboost(&ds, &d, &LsBoostConfig::default()).unwrap().0,
            calibrate_multiaccurate(&ds, 1e-3).unwrap(),
        ];
        for m in &models {
            let json = m.to_json().unwrap();
            let v: serde_json::Value = serde_json::from_str(&json).unwrap();
            assert_eq!(v["kind"], m.kind.name());
            assert!(v.get("payload").is_some() && v.get("discretizer").is_some());
            let back = CalibratedModel::from_json(&json).unwrap();
            assert_eq!(&back, m);
        }
    }

    #[test]
    fn mismatched_payload_is_rejected() {
        let ds = tiny();
        let mut m = calibrate_multiaccurate(&ds, 0.0).unwrap();
        m.kind = CalibratorKind::Ours;
        let json = serde_json::to_string(&m).unwrap();
        assert!(CalibratedModel::from_json(&json).is_err());
    }
}
