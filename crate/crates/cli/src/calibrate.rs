use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, ValueEnum};
use multical::boost::{FitTrace, StopReason};
use multical::calibrators::{
    calibrate_lsboost, calibrate_mcboost, calibrate_multiaccurate, calibrate_ours, LsBoostConfig, McBoostConfig,
};
use multical::metrics::squared_loss;
use multical::{BoostConfig, CalibratorKind, Discretizer, SplitFamily};
use serde_json::json;

use crate::io::{create, load, sibling};
use crate::usage;

#[derive(Clone, Copy, ValueEnum)]
pub enum Method {
    Ours,
    Mcboost,
    Lsboost,
    Multiaccurate,
}

impl From<Method> for CalibratorKind {
    fn from(m: Method) -> Self {
        match m {
            Method::Ours => CalibratorKind::Ours,
            Method::Mcboost => CalibratorKind::Mcboost,
            Method::Lsboost => CalibratorKind::Lsboost,
            Method::Multiaccurate => CalibratorKind::Multiaccurate,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
pub enum FamilyArg {
    Pooled,
    Strict,
}

/// Flags of the greedy depth-two booster.
#[derive(Args, Default)]
pub struct BoostArgs {
    /// Learning rate (also used by lsboost)
    #[arg(long)]
    pub lr: Option<f64>,
    /// Fraction of split predicates offered per tree (also used by lsboost)
    #[arg(long)]
    pub subsample: Option<f64>,
    #[arg(long)]
    pub max_trees: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Holdout fraction for early stopping (also used by mcboost and lsboost)
    #[arg(long)]
    pub holdout: Option<f64>,
    /// Minimum rows per nonempty leaf (also used by lsboost)
    #[arg(long)]
    pub min_leaf: Option<usize>,
    #[arg(long)]
    pub threshold_bins: Option<usize>,
    #[arg(long, value_enum)]
    pub family: Option<FamilyArg>,
    /// Do not clamp predictions to [0, 1]
    #[arg(long)]
    pub no_clamp: bool,
}

impl BoostArgs {
    pub fn config(&self, seed: u64) -> BoostConfig {
        let d = BoostConfig::default();
        BoostConfig {
            learning_rate: self.lr.unwrap_or(d.learning_rate),
            max_trees: self.max_trees.unwrap_or(d.max_trees),
            patience: self.patience.unwrap_or(d.patience),
            holdout_fraction: self.holdout.unwrap_or(d.holdout_fraction),
            feature_subsample: self.subsample.unwrap_or(d.feature_subsample),
            min_leaf_count: self.min_leaf.unwrap_or(d.min_leaf_count),
            seed,
            threshold_bins: self.threshold_bins.unwrap_or(d.threshold_bins),
            family: match self.family {
                Some(FamilyArg::Strict) => SplitFamily::Strict,
                Some(FamilyArg::Pooled) | None => d.family,
            },
            clamp: !self.no_clamp,
        }
    }
}

#[derive(Args)]
pub struct CalibrateArgs {
    #[arg(value_enum)]
    method: Method,
    /// Calibration CSV
    #[arg(long = "in", value_name = "CSV")]
    input: PathBuf,
    /// Model JSON
    #[arg(short, long)]
    out: PathBuf,
    /// Trace JSONL [default: <out stem>.trace.jsonl]
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Grid size (mcboost and lsboost only)
    #[arg(long)]
    m: Option<usize>,
    #[command(flatten)]
    boost: BoostArgs,
    /// Rounds cap (mcboost and lsboost)
    #[arg(long)]
    max_rounds: Option<usize>,
    /// Weak-learner depth, 1 or 2 (lsboost)
    #[arg(long)]
    depth: Option<usize>,
    /// L1 penalty (multiaccurate)
    #[arg(long)]
    lambda: Option<f64>,
}

impl CalibrateArgs {
    /// Rejects flags the method does not read.
    fn check_flags(&self) -> Result<()> {
        let b = &self.boost;
        let set = [
            ("m", self.m.is_some()),
            ("lr", b.lr.is_some()),
            ("subsample", b.subsample.is_some()),
            ("max-trees", b.max_trees.is_some()),
            ("patience", b.patience.is_some()),
            ("holdout", b.holdout.is_some()),
            ("min-leaf", b.min_leaf.is_some()),
            ("threshold-bins", b.threshold_bins.is_some()),
            ("family", b.family.is_some()),
            ("no-clamp", b.no_clamp),
            ("max-rounds", self.max_rounds.is_some()),
            ("depth", self.depth.is_some()),
            ("lambda", self.lambda.is_some()),
        ];
        let allowed: &[&str] = match self.method {
            Method::Ours => &[
                "lr",
                "subsample",
                "max-trees",
                "patience",
                "holdout",
                "min-leaf",
                "threshold-bins",
                "family",
                "no-clamp",
            ],
            Method::Mcboost => &["m", "holdout", "max-rounds"],
            Method::Lsboost => &["m", "lr", "subsample", "holdout", "min-leaf", "max-rounds", "depth"],
            Method::Multiaccurate => &["lambda"],
        };
        let name = CalibratorKind::from(self.method).name();
        if matches!(self.method, Method::Ours) && self.m.is_some() {
            return Err(usage("--m is not accepted by ours: ours is discretization-free"));
        }
        for (flag, on) in set {
            if on && !allowed.contains(&flag) {
                return Err(usage(format!("--{flag} is not accepted by {name}")));
            }
        }
        if matches!(self.method, Method::Mcboost | Method::Lsboost) && self.m.is_none() {
            return Err(usage(format!("{name} requires --m")));
        }
        Ok(())
    }
}

pub fn run(args: CalibrateArgs) -> Result<()> {
    args.check_flags()?;
    let ds = load(&args.input)?;
    let kind = CalibratorKind::from(args.method);
    let grid = |m: usize| Discretizer::grid(m);
    let (model, trace, config) = match args.method {
        Method::Ours => {
            let cfg = args.boost.config(args.seed);
            let (model, trace) = calibrate_ours(&ds, &cfg)?;
            (model, trace, json!(cfg))
        }
        Method::Mcboost => {
            let d = McBoostConfig::default();
            let cfg = McBoostConfig {
                holdout_fraction: args.boost.holdout.unwrap_or(d.holdout_fraction),
                max_rounds: args.max_rounds.unwrap_or(d.max_rounds),
                seed: args.seed,
            };
            let m = args.m.unwrap_or_default();
            let (model, trace) = calibrate_mcboost(&ds, &grid(m)?, &cfg)?;
            (model, trace, json!({ "m": m, "mcboost": cfg }))
        }
        Method::Lsboost => {
            let d = LsBoostConfig::default();
            let b = &args.boost;
            let cfg = LsBoostConfig {
                depth: args.depth.unwrap_or(d.depth),
                learning_rate: b.lr.unwrap_or(d.learning_rate),
                subsample: b.subsample.unwrap_or(d.subsample),
                max_rounds: args.max_rounds.unwrap_or(d.max_rounds),
                holdout_fraction: b.holdout.unwrap_or(d.holdout_fraction),
                min_leaf_count: b.min_leaf.unwrap_or(d.min_leaf_count),
                seed: args.seed,
            };
            let m = args.m.unwrap_or_default();
            let (model, trace) = calibrate_lsboost(&ds, &grid(m)?, &cfg)?;
            (model, trace, json!({ "m": m, "lsboost": cfg }))
        }
        Method::Multiaccurate => {
            let lambda = args.lambda.unwrap_or(0.0);
            let model = calibrate_multiaccurate(&ds, lambda)?;
            let trace = FitTrace {
                records: Vec::new(),
                stop_reason: StopReason::Converged,
                kept_trees: 0,
                initial_train_loss: squared_loss(ds.base_scores(), ds.labels())?,
                initial_holdout_loss: None,
            };
            (model, trace, json!({ "lambda": lambda }))
        }
    };
    let config = json!({
        "method": kind,
        "input": args.input.display().to_string(),
        "seed": args.seed,
        "settings": config,
    });
    model.save(&args.out)?;
    let trace_path = args.trace.clone().unwrap_or_else(|| sibling(&args.out, ".trace.jsonl"));
    let mut out = create(&trace_path)?;
    trace.write_jsonl(&mut out, &config)?;
    std::io::Write::flush(&mut out)?;
    println!(
        "{kind}: kept {} of {} steps ({}), model {}, trace {}",
        trace.kept_trees,
        trace.records.len(),
        serde_json::to_value(trace.stop_reason)?.as_str().unwrap_or(""),
        args.out.display(),
        trace_path.display()
    );
    Ok(())
}
