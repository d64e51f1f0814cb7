use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Subcommand};
use multical::synthetic::{gen_group_bias, gen_xor, GroupBiasSpec, XorSpec};
use multical::CalibrationDataset;

use crate::io::{sibling, write_json};

#[derive(Subcommand)]
pub enum GenCommand {
    /// Three uniform groups, labels linear in the groups plus a parity term
    Xor(XorArgs),
    /// Uniform base scores with additive per-group label bias
    GroupBias(GroupBiasArgs),
}

#[derive(Args)]
pub struct XorArgs {
    #[arg(long)]
    gamma: f64,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// The constant base score
    #[arg(long, default_value_t = 0.5)]
    base_constant: f64,
    /// Cycle through the eight group cells instead of sampling them
    #[arg(long)]
    stratified: bool,
    #[arg(short, long, default_value = "xor.csv")]
    out: PathBuf,
}

#[derive(Args)]
pub struct GroupBiasArgs {
    #[arg(long, default_value_t = 8)]
    k: usize,
    #[arg(long, default_value_t = 50_000)]
    n: usize,
    /// Largest per-group bias; group i gets ±bias·(i+1)/k, alternating sign
    #[arg(long, default_value_t = 0.2)]
    bias: f64,
    #[arg(long, default_value_t = 0.1)]
    noise_sd: f64,
    #[arg(long, default_value_t = 0.3)]
    membership: f64,
    #[arg(long, default_value_t = 0.0)]
    score_low: f64,
    #[arg(long, default_value_t = 1.0)]
    score_high: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long, default_value = "group_bias.csv")]
    out: PathBuf,
}

fn summarize(ds: &CalibrationDataset, out: &std::path::Path, sidecar: &std::path::Path) {
    println!(
        "wrote {} rows, {} groups to {} (sidecar {})",
        ds.n(),
        ds.num_groups(),
        out.display(),
        sidecar.display()
    );
    for (i, name) in ds.group_names().iter().enumerate() {
        let members = (0..ds.n()).filter(|&r| ds.in_group(r, i)).count();
        println!("  {name}: {members} members");
    }
}

pub fn run(cmd: GenCommand) -> Result<()> {
    match cmd {
        GenCommand::Xor(a) => {
            let spec = XorSpec {
                gamma: a.gamma,
                n: a.n,
                seed: a.seed,
                base_constant: a.base_constant,
                stratified: a.stratified,
            };
            let (ds, side) = gen_xor(&spec)?;
            ds.write_csv(&a.out)?;
            let path = sibling(&a.out, ".sidecar.json");
            write_json(&path, &side)?;
            summarize(&ds, &a.out, &path);
            println!(
                "  optimum loss {}, optimum MC error {}, saturation gap {}",
                side.optimum_loss, side.optimum_mc_error, side.epsilon_loss
            );
        }
        GenCommand::GroupBias(a) => {
            if a.k == 0 {
                return Err(crate::usage("--k must be positive"));
            }
            let spec = GroupBiasSpec {
                noise_sd: a.noise_sd,
                membership: a.membership,
                score_low: a.score_low,
                score_high: a.score_high,
                ..GroupBiasSpec::graded(a.k, a.n, a.bias, a.seed)
            };
            let ds = gen_group_bias(&spec)?;
            ds.write_csv(&a.out)?;
            let path = sibling(&a.out, ".sidecar.json");
            write_json(&path, &spec)?;
            summarize(&ds, &a.out, &path);
        }
    }
    Ok(())
}
