//! MCBoost on a grid: repeatedly move the (group, level) cell with the
//! largest mass-weighted deviation to its re-discretized label mean.

use serde::{Deserialize, Serialize};

use super::{require_grid, CalibratedModel, CalibratorKind, Payload};
use crate::boost::{FitTrace, IterationRecord, StopReason};
use crate::data::{split_indices, CalibrationDataset, SplitSpec};
use crate::discretize::Discretizer;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McBoostConfig {
    pub holdout_fraction: f64,
    pub max_rounds: usize,
    pub seed: u64,
}

impl Default for McBoostConfig {
    fn default() -> Self {
        Self {
            holdout_fraction: 0.3,
            max_rounds: 1000,
            seed: 0,
        }
    }
}

/// Members of `group` currently predicted `level` move to `value`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchRecord {
    pub group: usize,
    pub level: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchTable {
    pub records: Vec<PatchRecord>,
}

impl PatchTable {
    /// Discretizes `f0` and applies every record in order.
    pub fn replay(&self, d: &Discretizer, f0: f64, g: &[u8]) -> f64 {
        let mut p = d.map(f0);
        for r in &self.records {
            if p == r.level && g[r.group] == 1 {
                p = r.value;
            }
        }
        p
    }
}

/// Per (group, cell) row counts and label sums.
struct CellStats {
    m: usize,
    count: Vec<f64>,
    sum_y: Vec<f64>,
}

impl CellStats {
    fn build(ds: &CalibrationDataset, rows: &[usize], cells: &[usize], m: usize) -> Self {
        let k = ds.num_groups();
        let mut s = CellStats {
            m,
            count: vec![0.0; k * m],
            sum_y: vec![0.0; k * m],
        };
        for (&r, &c) in rows.iter().zip(cells) {
            s.add(ds, r, c, 1.0);
        }
        s
    }

    fn add(&mut self, ds: &CalibrationDataset, r: usize, c: usize, sign: f64) {
        for (i, &g) in ds.group_row(r).iter().enumerate() {
            if g == 1 {
                self.count[i * self.m + c] += sign;
                self.sum_y[i * self.m + c] += sign * ds.labels()[r];
            }
        }
    }

    fn mc_error(&self, outputs: &[f64], n: f64) -> f64 {
        self.count
            .chunks(self.m)
            .zip(self.sum_y.chunks(self.m))
            .map(|(cnt, sy)| (0..self.m).map(|c| (cnt[c] * outputs[c] - sy[c]).abs()).sum::<f64>() / n)
            .fold(0.0, f64::max)
    }
}

fn loss(ds: &CalibrationDataset, rows: &[usize], cells: &[usize], outputs: &[f64]) -> f64 {
    rows.iter()
        .zip(cells)
        .map(|(&r, &c)| (outputs[c] - ds.labels()[r]).powi(2))
        .sum::<f64>()
        / rows.len() as f64
}

/// Moves every row of `rows` in `group` at cell `from` to cell `to`.
fn apply(
    ds: &CalibrationDataset,
    rows: &[usize],
    cells: &mut [usize],
    stats: &mut CellStats,
    group: usize,
    from: usize,
    to: usize,
) {
    for (&r, c) in rows.iter().zip(cells.iter_mut()) {
        if *c == from && ds.in_group(r, group) {
            stats.add(ds, r, from, -1.0);
            stats.add(ds, r, to, 1.0);
            *c = to;
        }
    }
}

/// MCBoost with holdout early stopping. A cell is eligible when moving it
/// to the grid point nearest its label mean strictly lowers the training
/// loss; among eligible cells the largest `Pr[cell] * |E[p - y | cell]|`
/// wins (ties to the lowest group, then lowest level). Training stops when
/// nothing is eligible, after `max_rounds`, or when the holdout
/// multicalibration error has not improved for one pass over all
/// (group, level) cells; the table is cut at the best holdout round.
pub fn calibrate_mcboost(
    ds: &CalibrationDataset,
    d: &Discretizer,
    cfg: &McBoostConfig,
) -> Result<(CalibratedModel, FitTrace)> {
    require_grid(d)?;
    if !(cfg.holdout_fraction > 0.0 && cfg.holdout_fraction < 1.0) {
        return Err(Error::config(format!(
            "holdout fraction must be in (0,1), got {}",
            cfg.holdout_fraction
        )));
    }
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
    let m = d.m();
    let outputs = d.outputs();
    let mut tc: Vec<usize> = train.iter().map(|&r| d.cell(ds.base_scores()[r])).collect();
    let mut hc: Vec<usize> = hold.iter().map(|&r| d.cell(ds.base_scores()[r])).collect();
    let mut ts = CellStats::build(ds, &train, &tc, m);
    let mut hs = CellStats::build(ds, &hold, &hc, m);
    let n_train = train.len() as f64;
    let n_hold = hold.len() as f64;

    let mut occupied = vec![false; m];
    for &c in &tc {
        occupied[c] = true;
    }
    let pass = k * occupied.iter().filter(|&&o| o).count();

    let initial_train_loss = loss(ds, &train, &tc, outputs);
    let initial_holdout_loss = loss(ds, &hold, &hc, outputs);
    let mut best = (0usize, hs.mc_error(outputs, n_hold));
    let mut since_best = 0usize;
    let mut table = Vec::new();
    let mut records = Vec::new();
    let mut stop = StopReason::MaxTrees;

    for round in 1..=cfg.max_rounds {
        let mut pick: Option<(f64, usize, usize, usize)> = None;
        for i in 0..k {
            for c in 0..m {
                let cnt = ts.count[i * m + c];
                if cnt == 0.0 {
                    continue;
                }
                let ybar = ts.sum_y[i * m + c] / cnt;
                let to = d.cell(ybar);
                if to == c || (outputs[to] - ybar).powi(2) >= (outputs[c] - ybar).powi(2) {
                    continue;
                }
                let score = (cnt * outputs[c] - ts.sum_y[i * m + c]).abs() / n_train;
                if pick.is_none_or(|(s, ..)| score > s) {
                    pick = Some((score, i, c, to));
                }
            }
        }
        let Some((_, group, from, to)) = pick else {
            stop = StopReason::Converged;
            break;
        };
        apply(ds, &train, &mut tc, &mut ts, group, from, to);
        apply(ds, &hold, &mut hc, &mut hs, group, from, to);
        table.push(PatchRecord {
            group,
            level: outputs[from],
            value: outputs[to],
        });
        let hold_mc = hs.mc_error(outputs, n_hold);
        records.push(IterationRecord {
            iteration: round,
            train_loss: loss(ds, &train, &tc, outputs),
            holdout_loss: Some(loss(ds, &hold, &hc, outputs)),
            holdout_mc_error: Some(hold_mc),
            split: format!("g{group}: {} -> {}", outputs[from], outputs[to]),
            edge: None,
            alpha: None,
            variance_before: None,
            variance_after: None,
        });
        if hold_mc < best.1 {
            best = (round, hold_mc);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= pass {
                stop = StopReason::EarlyStop;
                break;
            }
        }
    }

    table.truncate(best.0);
    let model = CalibratedModel {
        kind: CalibratorKind::Mcboost,
        num_groups: k,
        discretizer: Some(d.clone()),
        payload: Payload::Patches(PatchTable { records: table }),
    };
    let trace = FitTrace {
        records,
        stop_reason: stop,
        kept_trees: best.0,
        initial_train_loss,
        initial_holdout_loss: Some(initial_holdout_loss),
    };
    Ok((model, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn patches(m: &CalibratedModel) -> &[PatchRecord] {
        match &m.payload {
            Payload::Patches(t) => &t.records,
            _ => unreachable!(),
        }
    }

    #[test]
    fn calibrated_input_gives_empty_table() {
        // every cell already sits at its label mean
        let n = 20;
        let ds = CalibrationDataset::new(
            vec![0.25; n],
            (0..n).map(|r| (r % 2) as u8).collect(),
            vec![0.25; n],
            vec!["a".into()],
        )
        .unwrap();
        let d = Discretizer::grid(2).unwrap();
        let (m, trace) = calibrate_mcboost(&ds, &d, &McBoostConfig::default()).unwrap();
        assert!(patches(&m).is_empty());
        assert_eq!(trace.stop_reason, StopReason::Converged);
    }

    #[test]
    fn one_cell_moves_to_its_mean() {
        // one group, one level 0.45, labels at the grid point 0.85
        let n = 40;
        let ds = CalibrationDataset::new(vec![0.42; n], vec![1; n], vec![0.85; n], vec!["a".into()]).unwrap();
        let d = Discretizer::grid(10).unwrap();
        let (m, trace) = calibrate_mcboost(&ds, &d, &McBoostConfig::default()).unwrap();
        let t = patches(&m);
        assert_eq!(t.len(), 1, "{t:?}");
        assert_eq!((t[0].group, t[0].level), (0, 0.45));
        assert!((t[0].value - 0.85).abs() < 1e-12);
        assert!(trace.records[0].holdout_mc_error.unwrap() < 1e-12);
        assert_eq!(m.predict(0.42, &[1]).unwrap(), t[0].value);
        assert_eq!(m.predict(0.42, &[0]).unwrap(), 0.45);
    }

    #[test]
    fn every_patch_lowers_train_loss() {
        let n = 400;
        let scores: Vec<f64> = (0..n).map(|r| (r * 37 % 100) as f64 / 100.0).collect();
        let groups: Vec<u8> = (0..2 * n).map(|i| ((i * 7 + i / 3) % 3 == 0) as u8).collect();
        let labels: Vec<f64> = (0..n)
            .map(|r| (scores[r] + 0.3 * groups[2 * r] as f64 - 0.2 * groups[2 * r + 1] as f64).clamp(0.0, 1.0))
            .collect();
        let ds = CalibrationDataset::new(scores, groups, labels, vec!["a".into(), "b".into()]).unwrap();
        let d = Discretizer::grid(10).unwrap();
        let cfg = McBoostConfig {
            max_rounds: 200,
            ..Default::default()
        };
        let (m, trace) = calibrate_mcboost(&ds, &d, &cfg).unwrap();
        let mut prev = trace.initial_train_loss;
        for r in &trace.records {
            assert!(r.train_loss < prev, "{} !< {}", r.train_loss, prev);
            prev = r.train_loss;
        }
        for p in m.predict_dataset(&ds).unwrap() {
            assert!(d.in_codomain(p));
        }
    }

    #[test]
    fn quantile_discretizer_is_rejected() {
        let ds = CalibrationDataset::new(vec![0.1, 0.9], vec![1, 0], vec![0.0, 1.0], vec!["a".into()]).unwrap();
        let d = Discretizer::quantile(2, ds.base_scores()).unwrap();
        assert!(calibrate_mcboost(&ds, &d, &McBoostConfig::default()).is_err());
    }
}
