use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use log::warn;
use multical::metrics::{evaluate, EvaluationReport, DEFAULT_ECE_BINS};
use multical::{CalibratedModel, Discretizer};
use serde::Serialize;
use serde_json::json;

use crate::io::{create, load, sibling, write_json};
use crate::usage;

pub const DEFAULT_SWEEP: [usize; 6] = [10, 20, 30, 50, 75, 100];

#[derive(Args)]
pub struct EvaluateArgs {
    /// Model JSON
    #[arg(long, required_unless_present = "uncalibrated", conflicts_with = "uncalibrated")]
    model: Option<PathBuf>,
    /// Evaluate the base scores themselves
    #[arg(long)]
    uncalibrated: bool,
    /// Test CSV
    #[arg(long = "in", value_name = "CSV")]
    input: PathBuf,
    /// Discretization sizes
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SWEEP)]
    m_sweep: Vec<usize>,
    /// Equal-width bins of the worst-group ECE
    #[arg(long, default_value_t = DEFAULT_ECE_BINS)]
    bins: usize,
    /// Report CSV; the JSON report is written next to it
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct Row<'a> {
    method: &'a str,
    m: usize,
    nonempty_range: usize,
    mc_error: f64,
    squared_loss: f64,
    epsilon_round: f64,
    worst_group_binned_ece: f64,
    multiaccuracy_error: f64,
}

pub fn run(args: EvaluateArgs) -> Result<()> {
    if args.m_sweep.is_empty() {
        return Err(usage("--m-sweep is empty"));
    }
    let ds = load(&args.input)?;
    let (method, model) = match &args.model {
        Some(path) => {
            let model = CalibratedModel::load(path).with_context(|| format!("reading {}", path.display()))?;
            (model.kind.name().to_string(), Some(model))
        }
        None => ("uncalibrated".to_string(), None),
    };
    let pred = match &model {
        Some(m) => m.predict_dataset(&ds)?,
        None => ds.base_scores().to_vec(),
    };

    let mut sweep = args.m_sweep.clone();
    sweep.sort_unstable();
    sweep.dedup();
    if let Some(native) = model.as_ref().and_then(|m| m.discretizer.as_ref()) {
        let others: Vec<usize> = sweep.iter().copied().filter(|&m| m != native.m()).collect();
        if !others.is_empty() {
            warn!(
                "{method} is calibrated on a grid of size {}; skipping m = {:?}",
                native.m(),
                others
            );
        }
        sweep = vec![native.m()];
    }

    let mut reports: Vec<EvaluationReport> = Vec::new();
    for &m in &sweep {
        let d = match model.as_ref().and_then(|mdl| mdl.discretizer.clone()) {
            Some(d) => d,
            None => Discretizer::grid(m)?,
        };
        reports.push(evaluate(&ds, &pred, &d, args.bins)?);
    }

    let mut w = csv::Writer::from_writer(create(&args.out)?);
    for r in &reports {
        w.serialize(Row {
            method: &method,
            m: r.m,
            nonempty_range: r.nonempty_range,
            mc_error: r.mc_error,
            squared_loss: r.squared_loss,
            epsilon_round: r.epsilon_round,
            worst_group_binned_ece: r.worst_group_binned_ece,
            multiaccuracy_error: r.multiaccuracy_error,
        })?;
    }
    w.flush()?;
    let json_path = sibling(&args.out, ".json");
    write_json(
        &json_path,
        &json!({
            "config": {
                "method": method,
                "model": args.model.as_ref().map(|p| p.display().to_string()),
                "input": args.input.display().to_string(),
                "m_sweep": sweep,
                "bins": args.bins,
            },
            "reports": reports,
        }),
    )?;
    for r in &reports {
        println!(
            "{method} m={}: mc_error {:.6} (group {}), loss {:.6}, eps_round {:.3e}, ece {:.6}, ma {:.6}",
            r.m,
            r.mc_error,
            r.worst_group_index,
            r.squared_loss,
            r.epsilon_round,
            r.worst_group_binned_ece,
            r.multiaccuracy_error
        );
    }
    Ok(())
}
