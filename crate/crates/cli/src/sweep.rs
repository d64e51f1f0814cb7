use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use multical::calibrators::{
    calibrate_lsboost, calibrate_mcboost, calibrate_multiaccurate, calibrate_ours, CalibratedModel, LsBoostConfig,
    McBoostConfig,
};
use multical::data::{split_indices, SplitSpec};
use multical::metrics::squared_loss;
use multical::{multicalibration_error, BoostConfig, CalibrationDataset, CalibratorKind, Discretizer};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::calibrate::Method;
use crate::io::{load, sibling, write_json};
use crate::usage;

#[derive(Args)]
pub struct SweepArgs {
    #[arg(value_enum)]
    method: Method,
    /// Calibration CSV
    #[arg(long = "in", value_name = "CSV")]
    input: PathBuf,
    /// Number of random calibration/validation re-splits
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 0.3)]
    val_fraction: f64,
    /// Grid size: the objective of mcboost and lsboost, and their grid
    #[arg(long, default_value_t = 20)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_delimiter = ',')]
    lr_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    subsample_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    depth_grid: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    holdout_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    lambda_grid: Option<Vec<f64>>,
    /// Tree cap for ours
    #[arg(long)]
    max_trees: Option<usize>,
    /// Round cap for mcboost and lsboost
    #[arg(long)]
    max_rounds: Option<usize>,
    /// Ranked CSV; the winning configuration goes to <stem>.best.json
    #[arg(short, long)]
    out: PathBuf,
}

/// One grid point, fully resolved.
#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
enum Point {
    Ours(BoostConfig),
    Mcboost(McBoostConfig),
    Lsboost(LsBoostConfig),
    Multiaccurate { lambda: f64 },
}

impl Point {
    fn describe(&self) -> String {
        match self {
            Point::Ours(c) => format!("lr={};subsample={}", c.learning_rate, c.feature_subsample),
            Point::Mcboost(c) => format!("holdout={}", c.holdout_fraction),
            Point::Lsboost(c) => format!("depth={};lr={};subsample={}", c.depth, c.learning_rate, c.subsample),
            Point::Multiaccurate { lambda } => format!("lambda={lambda}"),
        }
    }

    fn with_seed(&self, seed: u64) -> Point {
        match self {
            Point::Ours(c) => Point::Ours(BoostConfig { seed, ..c.clone() }),
            Point::Mcboost(c) => Point::Mcboost(McBoostConfig { seed, ..c.clone() }),
            Point::Lsboost(c) => Point::Lsboost(LsBoostConfig { seed, ..c.clone() }),
            Point::Multiaccurate { lambda } => Point::Multiaccurate { lambda: *lambda },
        }
    }

    fn fit(&self, ds: &CalibrationDataset, d: &Discretizer) -> multical::Result<CalibratedModel> {
        Ok(match self {
            Point::Ours(c) => calibrate_ours(ds, c)?.0,
            Point::Mcboost(c) => calibrate_mcboost(ds, d, c)?.0,
            Point::Lsboost(c) => calibrate_lsboost(ds, d, c)?.0,
            Point::Multiaccurate { lambda } => calibrate_multiaccurate(ds, *lambda)?,
        })
    }
}

/// Five geometric points from 0.01 to 1.
fn default_lr_grid() -> Vec<f64> {
    (0..5).map(|k| 10f64.powf(-2.0 + k as f64 / 2.0)).collect()
}

fn tenths() -> Vec<f64> {
    (1..=10).map(|k| k as f64 / 10.0).collect()
}

fn build_grid(args: &SweepArgs) -> Vec<Point> {
    let lrs = |default: Vec<f64>| args.lr_grid.clone().unwrap_or(default);
    let subs = args.subsample_grid.clone().unwrap_or_else(tenths);
    let mut grid = Vec::new();
    match args.method {
        Method::Ours => {
            for lr in lrs(default_lr_grid()) {
                for &s in &subs {
                    grid.push(Point::Ours(BoostConfig {
                        learning_rate: lr,
                        feature_subsample: s,
                        max_trees: args.max_trees.unwrap_or(BoostConfig::default().max_trees),
                        ..Default::default()
                    }));
                }
            }
        }
        Method::Mcboost => {
            let holdouts = args
                .holdout_grid
                .clone()
                .unwrap_or_else(|| (1..=5).map(|k| k as f64 / 10.0).collect());
            for h in holdouts {
                grid.push(Point::Mcboost(McBoostConfig {
                    holdout_fraction: h,
                    max_rounds: args.max_rounds.unwrap_or(McBoostConfig::default().max_rounds),
                    ..Default::default()
                }));
            }
        }
        Method::Lsboost => {
            for depth in args.depth_grid.clone().unwrap_or_else(|| vec![1, 2]) {
                for lr in lrs(vec![0.1, 0.3, 1.0]) {
                    for &s in &subs {
                        grid.push(Point::Lsboost(LsBoostConfig {
                            depth,
                            learning_rate: lr,
                            subsample: s,
                            max_rounds: args.max_rounds.unwrap_or(LsBoostConfig::default().max_rounds),
                            ..Default::default()
                        }));
                    }
                }
            }
        }
        Method::Multiaccurate => {
            let lambdas = args
                .lambda_grid
                .clone()
                .unwrap_or_else(|| vec![0.0, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2]);
            grid.extend(lambdas.into_iter().map(|lambda| Point::Multiaccurate { lambda }));
        }
    }
    grid
}

fn threads() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("MULTICAL_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| usage(format!("MULTICAL_THREADS must be a positive integer, got '{v}'")))?;
        builder = builder.num_threads(n.max(1));
    }
    builder.build().context("cannot start worker threads")
}

#[derive(Serialize)]
struct RankedRow<'a> {
    rank: usize,
    method: &'a str,
    params: String,
    objective: &'a str,
    mean_objective: f64,
    std_objective: f64,
}

pub fn run(args: SweepArgs) -> Result<()> {
    if args.folds == 0 {
        return Err(usage("--folds must be positive"));
    }
    let grid = build_grid(&args);
    if grid.is_empty() {
        return Err(usage("the hyperparameter grid is empty"));
    }
    let ds = load(&args.input)?;
    let d = Discretizer::grid(args.m)?;
    let kind = CalibratorKind::from(args.method);
    let objective = match args.method {
        Method::Ours | Method::Multiaccurate => "squared_loss".to_string(),
        Method::Mcboost | Method::Lsboost => format!("mc_error@m={}", args.m),
    };

    let mut folds = Vec::with_capacity(args.folds);
    for f in 0..args.folds {
        let spec = SplitSpec {
            seed: args.seed.wrapping_add(f as u64),
            holdout_fraction: args.val_fraction,
        };
        let (train, val) = split_indices(ds.n(), spec)?;
        folds.push((ds.subset(&train)?, ds.subset(&val)?));
    }

    let jobs: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|p| (0..args.folds).map(move |f| (p, f)))
        .collect();
    let pool = threads()?;
    let scores: Vec<multical::Result<f64>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(p, f)| {
                let (train, val) = &folds[f];
                let point = grid[p].with_seed(args.seed.wrapping_add(f as u64));
                let model = point.fit(train, &d)?;
                let pred = model.predict_dataset(val)?;
                match args.method {
                    Method::Ours | Method::Multiaccurate => squared_loss(&pred, val.labels()),
                    Method::Mcboost | Method::Lsboost => {
                        Ok(multicalibration_error(&d.apply(&pred), val.groups(), val.num_groups(), val.labels())?.max)
                    }
                }
            })
            .collect()
    });

    let mut per_point = vec![Vec::with_capacity(args.folds); grid.len()];
    for (&(p, _), s) in jobs.iter().zip(scores) {
        per_point[p].push(s?);
    }
    let mut ranked: Vec<(usize, f64, f64)> = per_point
        .iter()
        .enumerate()
        .map(|(p, v)| {
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
            (p, mean, var.sqrt())
        })
        .collect();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));

    let mut w = csv::Writer::from_writer(crate::io::create(&args.out)?);
    for (rank, &(p, mean, sd)) in ranked.iter().enumerate() {
        w.serialize(RankedRow {
            rank: rank + 1,
            method: kind.name(),
            params: grid[p].describe(),
            objective: &objective,
            mean_objective: mean,
            std_objective: sd,
        })?;
    }
    w.flush()?;

    let (best, mean, sd) = ranked[0];
    let best_path = sibling(&args.out, ".best.json");
    let config: Value = serde_json::to_value(grid[best].with_seed(args.seed))?;
    write_json(
        &best_path,
        &json!({
            "method": kind,
            "params": grid[best].describe(),
            "objective": objective,
            "mean_objective": mean,
            "std_objective": sd,
            "config": config,
            "sweep": {
                "input": args.input.display().to_string(),
                "folds": args.folds,
                "val_fraction": args.val_fraction,
                "m": args.m,
                "seed": args.seed,
                "grid_size": grid.len(),
            },
        }),
    )?;
    println!(
        "{}: best of {} points is {} ({} {:.6} ± {:.6}), ranking {}, winner {}",
        kind,
        grid.len(),
        grid[best].describe(),
        objective,
        mean,
        sd,
        args.out.display(),
        best_path.display()
    );
    Ok(())
}
