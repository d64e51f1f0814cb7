use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use multical::audit::{audit_saturation, check_mc_bound, DEFAULT_DELTA, DEFAULT_SATURATION_THRESHOLD};
use multical::Discretizer;
use serde_json::json;

use crate::calibrate::BoostArgs;
use crate::io::{load, write_json};

#[derive(Args)]
pub struct AuditArgs {
    /// Calibration CSV
    #[arg(long, value_name = "CSV")]
    cal: PathBuf,
    /// Test CSV
    #[arg(long, value_name = "CSV")]
    test: PathBuf,
    /// Grid size of the bound check
    #[arg(long, default_value_t = 20)]
    m: usize,
    /// Saturation passes when |eps_hat_loss| is below this
    #[arg(long, default_value_t = DEFAULT_SATURATION_THRESHOLD)]
    threshold: f64,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    boost: BoostArgs,
    /// JSON report
    #[arg(short, long)]
    out: Option<PathBuf>,
}

pub fn run(args: AuditArgs) -> Result<()> {
    let cal = load(&args.cal)?;
    let test = load(&args.test)?;
    let cfg = args.boost.config(args.seed);
    let audit = audit_saturation(&cal, &test, &cfg, args.threshold)?;
    let d = Discretizer::grid(args.m)?;
    let check = check_mc_bound(&test, &audit.model, &d, &audit.report, args.delta)?;
    let r = &audit.report;
    println!(
        "{:>12} {:>12} {:>12} {:>12} {:>7} {:>5} {:>10} {:>10} {:>9}",
        "loss(f0)", "loss(fcal)", "loss(2nd)", "eps_hat", "passes", "m", "mc_error", "bound", "satisfied"
    );
    println!(
        "{:>12.6e} {:>12.6e} {:>12.6e} {:>12.4e} {:>7} {:>5} {:>10.6} {:>10.6} {:>9}",
        r.loss_f0,
        r.loss_fcal,
        r.loss_second_pass,
        r.epsilon_hat_loss,
        r.passes,
        check.m,
        check.mc_error,
        check.bound + check.slack,
        check.satisfied
    );
    if let Some(path) = &args.out {
        write_json(
            path,
            &json!({
                "config": {
                    "cal": args.cal.display().to_string(),
                    "test": args.test.display().to_string(),
                    "m": args.m,
                    "threshold": args.threshold,
                    "delta": args.delta,
                    "boost": cfg,
                },
                "saturation": r,
                "bound_check": check,
            }),
        )?;
    }
    Ok(())
}
