//! LSBoost: per level set of the current grid prediction, fit a shallow
//! tree on the group indicators and step toward its output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{require_grid, CalibratedModel, CalibratorKind, Payload};
use crate::boost::{FitTrace, IterationRecord, StopReason};
use crate::data::{split_indices, CalibrationDataset, SplitSpec};
use crate::discretize::Discretizer;
use crate::error::{Error, Result};
use crate::split::{best_tree, candidates, Atoms, Binning, Family};
use crate::tree::DepthTwoTree;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsBoostConfig {
    /// 1 fits stumps, 2 fits depth-two trees.
    pub depth: usize,
    pub learning_rate: f64,
    /// Fraction of group predicates offered to each weak learner.
    pub subsample: f64,
    pub max_rounds: usize,
    pub holdout_fraction: f64,
    pub min_leaf_count: usize,
    pub seed: u64,
}

impl Default for LsBoostConfig {
    fn default() -> Self {
        Self {
            depth: 2,
            learning_rate: 1.0,
            subsample: 1.0,
            max_rounds: 100,
            holdout_fraction: 0.3,
            min_leaf_count: 1,
            seed: 0,
        }
    }
}

impl LsBoostConfig {
    fn validate(&self) -> Result<()> {
        if self.depth != 1 && self.depth != 2 {
            return Err(Error::config(format!("depth must be 1 or 2, got {}", self.depth)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::config(format!(
                "learning rate must be in (0,1], got {}",
                self.learning_rate
            )));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::config(format!(
                "subsample must be in (0,1], got {}",
                self.subsample
            )));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::config(format!(
                "holdout fraction must be in (0,1), got {}",
                self.holdout_fraction
            )));
        }
        if self.max_rounds == 0 || self.min_leaf_count == 0 {
            return Err(Error::config("max_rounds and min_leaf_count must be positive"));
        }
        Ok(())
    }
}

/// The weak learner fitted on the rows predicted `level` in one round. Its
/// thresholds are always true, so it only reads the group indicators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelLearner {
    pub level: f64,
    pub tree: DepthTwoTree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsBoostModel {
    pub learning_rate: f64,
    /// Learners of each round, sorted by level.
    pub rounds: Vec<Vec<LevelLearner>>,
}

impl LsBoostModel {
    pub fn replay(&self, d: &Discretizer, f0: f64, g: &[u8]) -> f64 {
        let mut p = d.map(f0);
        for round in &self.rounds {
            p = step(d, self.learning_rate, round, p, g);
        }
        p
    }
}

fn step(d: &Discretizer, lr: f64, learners: &[LevelLearner], p: f64, g: &[u8]) -> f64 {
    let i = learners.partition_point(|l| l.level < p);
    match learners.get(i) {
        Some(l) if l.level == p => {
            let h = l.tree.eval(p, g);
            d.map(p + lr * (h - p))
        }
        _ => p,
    }
}

fn loss(ds: &CalibrationDataset, rows: &[usize], p: &[f64]) -> f64 {
    rows.iter()
        .zip(p)
        .map(|(&r, &v)| (v - ds.labels()[r]).powi(2))
        .sum::<f64>()
        / rows.len() as f64
}

/// LSBoost with holdout early stopping on squared loss. Each round groups
/// the training rows by current prediction; every level set with at least
/// `min_leaf_count` rows gets a tree fitted to `y` and moves to
/// `d(p + learning_rate * (h - p))`. The first round that fails to lower
/// the holdout loss ends training and is not kept.
pub fn calibrate_lsboost(
    ds: &CalibrationDataset,
    d: &Discretizer,
    cfg: &LsBoostConfig,
) -> Result<(CalibratedModel, FitTrace)> {
    require_grid(d)?;
    cfg.validate()?;
    let (train, hold) = split_indices(
        ds.n(),
        SplitSpec {
            seed: cfg.seed,
            holdout_fraction: cfg.holdout_fraction,
        },
    )?;
    if train.is_empty() {
        return Err(Error::data("empty train split"));
    }
    if hold.is_empty() {
        return Err(Error::data("empty holdout split"));
    }

    let k = ds.num_groups();
    let binning = Binning::none();
    let family = if cfg.depth == 1 { Family::Stump } else { Family::Pooled };
    let min_leaf = cfg.min_leaf_count as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pt: Vec<f64> = train.iter().map(|&r| d.map(ds.base_scores()[r])).collect();
    let mut ph: Vec<f64> = hold.iter().map(|&r| d.map(ds.base_scores()[r])).collect();

    let initial_train_loss = loss(ds, &train, &pt);
    let initial_holdout_loss = loss(ds, &hold, &ph);
    let mut best_loss = initial_holdout_loss;
    let mut rounds: Vec<Vec<LevelLearner>> = Vec::new();
    let mut records = Vec::new();
    let mut stop = StopReason::MaxTrees;

    for round in 1..=cfg.max_rounds {
        let mut by_cell: Vec<Vec<usize>> = vec![Vec::new(); d.m()];
        for (pos, &p) in pt.iter().enumerate() {
            by_cell[d.cell(p)].push(pos);
        }
        let mut learners = Vec::new();
        let mut next = pt.clone();
        for members in by_cell.iter().filter(|m| !m.is_empty()) {
            if members.len() < cfg.min_leaf_count {
                continue;
            }
            let level = pt[members[0]];
            let rows = members.iter().map(|&pos| {
                let r = train[pos];
                (0.0, ds.group_row(r), ds.labels()[r])
            });
            let (atoms, assignment) = Atoms::build(rows, k, &binning);
            let sums: Vec<f64> = (0..atoms.len()).map(|a| atoms.count[a] * atoms.mean[a]).collect();
            let cands = candidates(&binning, k, false, cfg.subsample, &mut rng);
            let Some(fit) = best_tree(&atoms, &sums, &binning, &cands, family, min_leaf) else {
                continue;
            };
            let leaves = fit.leaf_means();
            for (&pos, &a) in members.iter().zip(&assignment) {
                let h = leaves[fit.leaf_of(&atoms, a)];
                next[pos] = d.map(level + cfg.learning_rate * (h - level));
            }
            learners.push(LevelLearner {
                level,
                tree: fit.to_tree(&binning, leaves),
            });
        }
        if learners.is_empty() {
            stop = StopReason::Converged;
            break;
        }
        pt = next;
        for (pos, &r) in hold.iter().enumerate() {
            ph[pos] = step(d, cfg.learning_rate, &learners, ph[pos], ds.group_row(r));
        }
        let holdout_loss = loss(ds, &hold, &ph);
        records.push(IterationRecord {
            iteration: round,
            train_loss: loss(ds, &train, &pt),
            holdout_loss: Some(holdout_loss),
            holdout_mc_error: None,
            split: format!("{} level learners", learners.len()),
            edge: None,
            alpha: None,
            variance_before: None,
            variance_after: None,
        });
        if holdout_loss < best_loss {
            best_loss = holdout_loss;
            rounds.push(learners);
        } else {
            stop = StopReason::EarlyStop;
            break;
        }
    }

    let kept = rounds.len();
    let model = CalibratedModel {
        kind: CalibratorKind::Lsboost,
        num_groups: k,
        discretizer: Some(d.clone()),
        payload: Payload::LevelSetBoost(LsBoostModel {
            learning_rate: cfg.learning_rate,
            rounds,
        }),
    };
    let trace = FitTrace {
        records,
        stop_reason: stop,
        kept_trees: kept,
        initial_train_loss,
        initial_holdout_loss: Some(initial_holdout_loss),
    };
    Ok((model, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rounds(m: &CalibratedModel) -> &[Vec<LevelLearner>] {
        match &m.payload {
            Payload::LevelSetBoost(b) => &b.rounds,
            _ => unreachable!(),
        }
    }

    #[test]
    fn fixed_point_keeps_no_rounds() {
        // labels equal the grid value of every row already
        let n = 30;
        let ds = CalibrationDataset::new(
            (0..n).map(|r| if r % 3 == 0 { 0.15 } else { 0.65 }).collect(),
            (0..n).map(|r| (r % 2) as u8).collect(),
            (0..n).map(|r| if r % 3 == 0 { 0.15 } else { 0.65 }).collect(),
            vec!["a".into()],
        )
        .unwrap();
        let d = Discretizer::grid(10).unwrap();
        let (m, trace) = calibrate_lsboost(&ds, &d, &LsBoostConfig::default()).unwrap();
        assert!(rounds(&m).is_empty());
        assert_eq!(trace.stop_reason, StopReason::EarlyStop);
        assert_eq!(m.predict(0.15, &[1]).unwrap(), 0.15);
    }

    #[test]
    fn stump_recovers_group_means_in_one_step() {
        // one level set, y = g1
        let n = 40;
        let groups: Vec<u8> = (0..n).map(|r| (r % 2) as u8).collect();
        let labels: Vec<f64> = groups.iter().map(|&g| g as f64).collect();
        let ds = CalibrationDataset::new(vec![0.5; n], groups, labels, vec!["a".into()]).unwrap();
        let d = Discretizer::grid(10).unwrap();
        let cfg = LsBoostConfig {
            depth: 1,
            learning_rate: 1.0,
            ..Default::default()
        };
        let (m, _) = calibrate_lsboost(&ds, &d, &cfg).unwrap();
        assert!(!rounds(&m).is_empty());
        let first = &rounds(&m)[0][0];
        assert_eq!(first.level, 0.55);
        assert_eq!(first.tree.eval(0.55, &[1]), 1.0);
        assert_eq!(first.tree.eval(0.55, &[0]), 0.0);
        assert_eq!(m.predict(0.5, &[1]).unwrap(), d.map(1.0));
        assert_eq!(m.predict(0.5, &[0]).unwrap(), d.map(0.0));
    }

    #[test]
    fn holdout_loss_decreases_over_kept_rounds() {
        let n = 600;
        let scores: Vec<f64> = (0..n).map(|r| (r * 53 % 97) as f64 / 97.0).collect();
        let groups: Vec<u8> = (0..3 * n).map(|i| ((i * 13 + i / 5) % 4 == 0) as u8).collect();
        let labels: Vec<f64> = (0..n)
            .map(|r| (scores[r] + 0.25 * groups[3 * r] as f64 - 0.25 * groups[3 * r + 2] as f64).clamp(0.0, 1.0))
            .collect();
        let ds = CalibrationDataset::new(scores, groups, labels, vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let d = Discretizer::grid(20).unwrap();
        let (m, trace) = calibrate_lsboost(
            &ds,
            &d,
            &LsBoostConfig {
                learning_rate: 1.0,
                ..Default::default()
            },
        )
        .unwrap();
        let kept = rounds(&m).len();
        let mut prev = trace.initial_holdout_loss.unwrap();
        for r in &trace.records[..kept] {
            let h = r.holdout_loss.unwrap();
            assert!(h < prev);
            prev = h;
        }
        for p in m.predict_dataset(&ds).unwrap() {
            assert!(d.in_codomain(p));
        }
    }

    #[test]
    fn bad_depth_is_rejected() {
        let ds = CalibrationDataset::new(vec![0.1, 0.9], vec![1, 0], vec![0.0, 1.0], vec!["a".into()]).unwrap();
        let d = Discretizer::grid(4).unwrap();
        let cfg = LsBoostConfig {
            depth: 3,
            ..Default::default()
        };
        assert!(calibrate_lsboost(&ds, &d, &cfg).is_err());
    }
}
