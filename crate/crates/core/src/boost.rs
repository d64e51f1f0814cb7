//! Ensemble solvers over depth-two trees: greedy least-squares boosting with
//! holdout early stopping, and the variance-leveraging SquareLev.R loop.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{split_indices, CalibrationDataset, SplitSpec};
use crate::error::{Error, Result};
use crate::split::{best_tree, candidates, Atoms, Binning, Family, TreeFit};
use crate::tree::{DepthTwoTree, EnsembleMetadata, EnsemblePredictor, SplitPredicate};

const SUBSAMPLE_STREAM: u64 = 0x5eed_5ab5_a3c1_e000;

/// Tree family searched by the boosting solvers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitFamily {
    /// Thresholds and group indicators pooled at every node; each child
    /// chooses its own predicate.
    Pooled,
    /// Threshold root with one group predicate shared by both children,
    /// which is exactly the per-level-set affine class on a discrete base.
    Strict,
}

impl From<SplitFamily> for Family {
    fn from(f: SplitFamily) -> Self {
        match f {
            SplitFamily::Pooled => Family::Pooled,
            SplitFamily::Strict => Family::Strict,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostConfig {
    pub learning_rate: f64,
    pub max_trees: usize,
    pub patience: usize,
    /// Fraction of rows held out for early stopping; 0 disables early
    /// stopping and trains on every row.
    pub holdout_fraction: f64,
    pub feature_subsample: f64,
    pub min_leaf_count: usize,
    pub seed: u64,
    pub threshold_bins: usize,
    pub family: SplitFamily,
    pub clamp: bool,
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            max_trees: 5000,
            patience: 50,
            holdout_fraction: 0.3,
            feature_subsample: 1.0,
            min_leaf_count: 1,
            seed: 0,
            threshold_bins: 256,
            family: SplitFamily::Pooled,
            clamp: true,
        }
    }
}

impl BoostConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.max_trees == 0 || self.patience == 0 || self.min_leaf_count == 0 || self.threshold_bins == 0 {
            return Err(Error::config(
                "max_trees, patience, min_leaf_count and threshold_bins must be positive",
            ));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::config(format!(
                "holdout fraction must be in [0,1), got {}",
                self.holdout_fraction
            )));
        }
        if !(self.feature_subsample > 0.0 && self.feature_subsample <= 1.0) {
            return Err(Error::config(format!(
                "feature subsample must be in (0,1], got {}",
                self.feature_subsample
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareLevConfig {
    /// Stop once the residual variance drops below this.
    pub rho: f64,
    pub t_max: usize,
    /// Stop when a step's edge falls below this.
    pub epsilon_floor: f64,
    pub threshold_bins: usize,
}

impl Default for SquareLevConfig {
    fn default() -> Self {
        Self {
            rho: 1e-12,
            t_max: 1000,
            epsilon_floor: 0.0,
            threshold_bins: 256,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxTrees,
    EarlyStop,
    ZeroVariance,
    NoGain,
    ZeroEdge,
    EdgeBelowFloor,
    VarianceFloor,
    /// No candidate update changes the model any more.
    Converged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub train_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub holdout_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub holdout_mc_error: Option<f64>,
    pub split: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edge: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variance_before: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variance_after: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    pub records: Vec<IterationRecord>,
    pub stop_reason: StopReason,
    /// Number of trees kept in the returned ensemble.
    pub kept_trees: usize,
    pub initial_train_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_holdout_loss: Option<f64>,
}

impl FitTrace {
    /// One JSON object per iteration, then a summary line carrying
    /// `config`.
    pub fn write_jsonl<W: Write, C: Serialize>(&self, mut out: W, config: &C) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        let summary = serde_json::json!({
            "stop_reason": self.stop_reason,
            "kept_trees": self.kept_trees,
            "initial_train_loss": self.initial_train_loss,
            "initial_holdout_loss": self.initial_holdout_loss,
            "config": config,
        });
        serde_json::to_writer(&mut out, &summary)?;
        out.write_all(b"\n")?;
        Ok(())
    }
}

fn target_rows<'a>(
    ds: &'a CalibrationDataset,
    rows: &'a [usize],
) -> impl Iterator<Item = (f64, &'a [u8], f64)> + Clone + 'a {
    rows.iter().map(move |&r| {
        let f0 = ds.base_scores()[r];
        (f0, ds.group_row(r), ds.labels()[r] - f0)
    })
}

fn apply_tree(atoms: &Atoms, fit: &TreeFit, leaves: &[f64; 4], pred: &mut [f64]) {
    for (a, p) in pred.iter_mut().enumerate() {
        *p += leaves[fit.leaf_of(atoms, a)];
    }
}

fn residual_sums(atoms: &Atoms, pred: &[f64], offset: f64) -> Vec<f64> {
    (0..atoms.len())
        .map(|a| atoms.count[a] * (atoms.mean[a] - pred[a] - offset))
        .collect()
}

/// Greedy boosting of depth-two trees on targets `y - f0`: each tree is the
/// exhaustive best split triple for the current residuals, with leaf values
/// `learning_rate * mean residual`. With a holdout, training stops after
/// `patience` trees without strict holdout improvement and the ensemble is
/// truncated at the best holdout iteration.
pub fn fit_greedy(ds: &CalibrationDataset, cfg: &BoostConfig) -> Result<(EnsemblePredictor, FitTrace)> {
    cfg.validate()?;
    let all: Vec<usize> = (0..ds.n()).collect();
    let (train, hold) = if cfg.holdout_fraction > 0.0 {
        let (t, h) = split_indices(
            ds.n(),
            SplitSpec {
                seed: cfg.seed,
                holdout_fraction: cfg.holdout_fraction,
            },
        )?;
        if h.is_empty() || t.is_empty() {
            return Err(Error::data(format!(
                "holdout fraction {} is infeasible for {} rows",
                cfg.holdout_fraction,
                ds.n()
            )));
        }
        (t, Some(h))
    } else {
        (all, None)
    };

    let k = ds.num_groups();
    let train_scores: Vec<f64> = train.iter().map(|&r| ds.base_scores()[r]).collect();
    let binning = Binning::from_scores(&train_scores, cfg.threshold_bins);
    let (atoms, _) = Atoms::build(target_rows(ds, &train), k, &binning);
    let hold_atoms = hold.as_ref().map(|h| Atoms::build(target_rows(ds, h), k, &binning).0);

    let mut pred = vec![0.0; atoms.len()];
    let mut hold_pred = hold_atoms.as_ref().map(|h| vec![0.0; h.len()]);
    let hold_loss = |hp: &Option<Vec<f64>>| hold_atoms.as_ref().zip(hp.as_ref()).map(|(h, p)| h.loss(p));

    let initial_train_loss = atoms.loss(&pred);
    let initial_holdout_loss = hold_loss(&hold_pred);
    let mut best = (0usize, initial_holdout_loss.unwrap_or(f64::INFINITY));
    let mut since_best = 0usize;
    let mut trees = Vec::new();
    let mut records = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SUBSAMPLE_STREAM);
    let family = Family::from(cfg.family);
    let min_leaf = cfg.min_leaf_count as f64;

    let mut stop = StopReason::MaxTrees;
    for iteration in 1..=cfg.max_trees {
        let resid = residual_sums(&atoms, &pred, 0.0);
        if resid.iter().all(|&r| r == 0.0) && atoms.ss.iter().all(|&s| s == 0.0) {
            stop = StopReason::ZeroVariance;
            break;
        }
        let cands = candidates(&binning, k, true, cfg.feature_subsample, &mut rng);
        let Some(fit) = best_tree(&atoms, &resid, &binning, &cands, family, min_leaf) else {
            stop = StopReason::NoGain;
            break;
        };
        if fit.gain <= 0.0 {
            stop = if resid.iter().all(|&r| r == 0.0) {
                StopReason::ZeroVariance
            } else {
                StopReason::NoGain
            };
            break;
        }
        let means = fit.leaf_means();
        let leaves = means.map(|m| m * cfg.learning_rate);
        apply_tree(&atoms, &fit, &leaves, &mut pred);
        if let (Some(h), Some(hp)) = (hold_atoms.as_ref(), hold_pred.as_mut()) {
            apply_tree(h, &fit, &leaves, hp);
        }
        trees.push(fit.to_tree(&binning, leaves));
        let train_loss = atoms.loss(&pred);
        let holdout_loss = hold_loss(&hold_pred);
        records.push(IterationRecord {
            iteration,
            train_loss,
            holdout_loss,
            holdout_mc_error: None,
            split: fit.describe(&binning),
            edge: None,
            alpha: None,
            variance_before: None,
            variance_after: None,
        });
        if let Some(hl) = holdout_loss {
            if hl < best.1 {
                best = (iteration, hl);
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.patience {
                    stop = StopReason::EarlyStop;
                    break;
                }
            }
        }
    }

    let kept = if hold.is_some() { best.0 } else { trees.len() };
    trees.truncate(kept);
    let ensemble = EnsemblePredictor::new(
        trees,
        cfg.clamp,
        EnsembleMetadata {
            solver: "greedy".into(),
            iterations: records.len(),
            seed: cfg.seed,
        },
    );
    let trace = FitTrace {
        records,
        stop_reason: stop,
        kept_trees: kept,
        initial_train_loss,
        initial_holdout_loss,
    };
    Ok((ensemble, trace))
}

/// SquareLev.R on targets `y - f0` over all rows. Each step fits a greedy
/// depth-two tree to the centered residuals, scores it by its Pearson edge
/// with the residuals and adds it scaled by `edge * |r - mean r| / |f -
/// mean f|`. A final constant tree restores the residual mean, which the
/// variance-driven loop never fits.
pub fn fit_squarelev(ds: &CalibrationDataset, cfg: &SquareLevConfig) -> Result<(EnsemblePredictor, FitTrace)> {
    if ds.n() < 2 {
        return Err(Error::data("SquareLev.R needs at least 2 rows"));
    }
    if cfg.t_max == 0
        || cfg.threshold_bins == 0
        || cfg.rho.is_nan()
        || cfg.rho < 0.0
        || cfg.epsilon_floor.is_nan()
        || cfg.epsilon_floor < 0.0
    {
        return Err(Error::config("invalid SquareLev.R configuration"));
    }
    let k = ds.num_groups();
    let rows: Vec<usize> = (0..ds.n()).collect();
    let binning = Binning::from_scores(ds.base_scores(), cfg.threshold_bins);
    let (atoms, _) = Atoms::build(target_rows(ds, &rows), k, &binning);
    let m = atoms.total_count();
    let cands = candidates(&binning, k, true, 1.0, &mut ChaCha8Rng::seed_from_u64(0));

    let mut pred = vec![0.0; atoms.len()];
    let mean_resid = |pred: &[f64]| {
        (0..atoms.len())
            .map(|a| atoms.count[a] * (atoms.mean[a] - pred[a]))
            .sum::<f64>()
            / m
    };
    // |r - mean r|^2 including within-atom spread
    let centered_norm2 = |pred: &[f64], rbar: f64| {
        (0..atoms.len())
            .map(|a| {
                let d = atoms.mean[a] - pred[a] - rbar;
                atoms.ss[a] + atoms.count[a] * d * d
            })
            .sum::<f64>()
    };

    let initial_train_loss = atoms.loss(&pred);
    let mut trees = Vec::new();
    let mut records = Vec::new();
    let stop;
    loop {
        let rbar = mean_resid(&pred);
        let r_norm2 = centered_norm2(&pred, rbar);
        if r_norm2 < m * cfg.rho {
            stop = StopReason::VarianceFloor;
            break;
        }
        if trees.len() >= cfg.t_max {
            stop = StopReason::MaxTrees;
            break;
        }
        let resid = residual_sums(&atoms, &pred, rbar);
        let Some(fit) = best_tree(&atoms, &resid, &binning, &cands, Family::Pooled, 1.0) else {
            stop = StopReason::ZeroEdge;
            break;
        };
        let f_leaves = fit.leaf_means();
        let f_of = |a: usize| f_leaves[fit.leaf_of(&atoms, a)];
        let fbar = (0..atoms.len()).map(|a| atoms.count[a] * f_of(a)).sum::<f64>() / m;
        let mut f_norm2 = 0.0;
        let mut dot = 0.0;
        for a in 0..atoms.len() {
            let df = f_of(a) - fbar;
            f_norm2 += atoms.count[a] * df * df;
            dot += atoms.count[a] * (atoms.mean[a] - pred[a] - rbar) * df;
        }
        if f_norm2 <= 0.0 {
            stop = StopReason::ZeroEdge;
            break;
        }
        let r_norm = r_norm2.sqrt();
        let f_norm = f_norm2.sqrt();
        let edge = dot / (r_norm * f_norm);
        if edge < cfg.epsilon_floor {
            stop = StopReason::EdgeBelowFloor;
            break;
        }
        let alpha = edge * r_norm / f_norm;
        let leaves = f_leaves.map(|v| alpha * v);
        apply_tree(&atoms, &fit, &leaves, &mut pred);
        trees.push(fit.to_tree(&binning, leaves));
        let rbar_after = mean_resid(&pred);
        records.push(IterationRecord {
            iteration: trees.len(),
            train_loss: atoms.loss(&pred),
            holdout_loss: None,
            holdout_mc_error: None,
            split: fit.describe(&binning),
            edge: Some(edge),
            alpha: Some(alpha),
            variance_before: Some(r_norm2 / m),
            variance_after: Some(centered_norm2(&pred, rbar_after) / m),
        });
    }

    let rbar = mean_resid(&pred);
    if rbar != 0.0 {
        let always = SplitPredicate::Threshold { value: 0.0 };
        trees.push(DepthTwoTree {
            root: always,
            left: always,
            right: always,
            leaves: [rbar; 4],
        });
    }
    let kept = trees.len();
    let ensemble = EnsemblePredictor::new(
        trees,
        true,
        EnsembleMetadata {
            solver: "squarelev".into(),
            iterations: records.len(),
            seed: 0,
        },
    );
    Ok((
        ensemble,
        FitTrace {
            records,
            stop_reason: stop,
            kept_trees: kept,
            initial_train_loss,
            initial_holdout_loss: None,
        },
    ))
}

/// The edge and step size of one SquareLev.R update for residuals `r` and
/// base-learner outputs `f` given directly as vectors.
pub fn squarelev_step(r: &[f64], f: &[f64]) -> Option<(f64, f64)> {
    let m = r.len() as f64;
    let rbar = r.iter().sum::<f64>() / m;
    let fbar = f.iter().sum::<f64>() / m;
    let rn = r.iter().map(|x| (x - rbar).powi(2)).sum::<f64>().sqrt();
    let fnorm = f.iter().map(|x| (x - fbar).powi(2)).sum::<f64>().sqrt();
    if rn == 0.0 || fnorm == 0.0 {
        return None;
    }
    let dot: f64 = r.iter().zip(f).map(|(a, b)| (a - rbar) * (b - fbar)).sum();
    let edge = dot / (rn * fnorm);
    Some((edge, edge * rn / fnorm))
}
