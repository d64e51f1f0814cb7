//! Synthetic datasets with known ground truth.
//!
//! Every row draws from its own ChaCha stream keyed by the row index, so
//! growing `n` never changes the rows already generated.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::CalibrationDataset;
use crate::error::{Error, Result};

fn row_rng(seed: u64, row: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row as u64);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XorSpec {
    pub gamma: f64,
    pub n: usize,
    pub seed: u64,
    pub base_constant: f64,
    /// Cycle through the eight group cells in order instead of sampling.
    pub stratified: bool,
}

impl XorSpec {
    pub fn new(gamma: f64, n: usize, seed: u64) -> Self {
        Self {
            gamma,
            n,
            seed,
            base_constant: 0.5,
            stratified: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::config(format!("gamma must be in (0,1), got {}", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.base_constant) {
            return Err(Error::config(format!(
                "base constant must be in [0,1], got {}",
                self.base_constant
            )));
        }
        if self.n == 0 {
            return Err(Error::config("n must be positive"));
        }
        Ok(())
    }
}

/// Label of the XOR construction for group bits `g`.
pub fn xor_label(gamma: f64, g: [u8; 3]) -> f64 {
    let linear = g[0] as f64 / 2.0 + g[1] as f64 / 4.0 + g[2] as f64 / 8.0;
    (1.0 - gamma) * linear + gamma * (g[0] ^ g[1] ^ g[2]) as f64
}

/// Analytic facts about the XOR construction, written next to the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XorSidecar {
    pub spec: XorSpec,
    /// The best depth-two predictor is `intercept + coefficients . g`.
    pub optimum_intercept: f64,
    pub optimum_coefficients: [f64; 3],
    pub optimum_loss: f64,
    pub optimum_mc_error: f64,
    pub epsilon_loss: f64,
}

impl XorSidecar {
    pub fn for_spec(spec: &XorSpec) -> Self {
        let g = spec.gamma;
        Self {
            spec: spec.clone(),
            optimum_intercept: g / 2.0,
            optimum_coefficients: [(1.0 - g) / 2.0, (1.0 - g) / 4.0, (1.0 - g) / 8.0],
            optimum_loss: g * g / 4.0,
            optimum_mc_error: g / 4.0,
            epsilon_loss: g * g / 4.0,
        }
    }

    pub fn optimum(&self, g: [u8; 3]) -> f64 {
        self.optimum_intercept + (0..3).map(|i| self.optimum_coefficients[i] * g[i] as f64).sum::<f64>()
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }
}

pub fn gen_xor(spec: &XorSpec) -> Result<(CalibrationDataset, XorSidecar)> {
    spec.validate()?;
    let mut groups = Vec::with_capacity(spec.n * 3);
    let mut labels = Vec::with_capacity(spec.n);
    for r in 0..spec.n {
        let g: [u8; 3] = if spec.stratified {
            let c = r % 8;
            [(c >> 2 & 1) as u8, (c >> 1 & 1) as u8, (c & 1) as u8]
        } else {
            let mut rng = row_rng(spec.seed, r);
            [
                rng.gen::<bool>() as u8,
                rng.gen::<bool>() as u8,
                rng.gen::<bool>() as u8,
            ]
        };
        groups.extend_from_slice(&g);
        labels.push(xor_label(spec.gamma, g));
    }
    let ds = CalibrationDataset::new(
        vec![spec.base_constant; spec.n],
        groups,
        labels,
        vec!["g1".into(), "g2".into(), "g3".into()],
    )?;
    Ok((ds, XorSidecar::for_spec(spec)))
}

/// Base scores uniform on `[score_low, score_high]`, independent group
/// memberships, and labels `clamp(f0 + sum_i bias_i g_i + noise, 0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupBiasSpec {
    pub n: usize,
    pub biases: Vec<f64>,
    pub noise_sd: f64,
    /// Membership probability of every group.
    pub membership: f64,
    pub score_low: f64,
    pub score_high: f64,
    pub seed: u64,
}

impl GroupBiasSpec {
    /// `k` groups with biases alternating in sign and growing linearly in
    /// magnitude up to `bias`: `bias * (i + 1) / k * (-1)^i`.
    pub fn graded(k: usize, n: usize, bias: f64, seed: u64) -> Self {
        Self {
            n,
            biases: (0..k)
                .map(|i| {
                    let b = bias * (i + 1) as f64 / k as f64;
                    if i % 2 == 0 {
                        b
                    } else {
                        -b
                    }
                })
                .collect(),
            noise_sd: 0.1,
            membership: 0.3,
            score_low: 0.0,
            score_high: 1.0,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.biases.is_empty() {
            return Err(Error::config("n and the number of groups must be positive"));
        }
        if self.biases.iter().any(|b| !b.is_finite()) {
            return Err(Error::config("biases must be finite"));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::config(format!("noise sd must be >= 0, got {}", self.noise_sd)));
        }
        if !(0.0..=1.0).contains(&self.membership) {
            return Err(Error::config(format!(
                "membership probability must be in [0,1], got {}",
                self.membership
            )));
        }
        if !(0.0 <= self.score_low && self.score_low <= self.score_high && self.score_high <= 1.0) {
            return Err(Error::config("score range must satisfy 0 <= low <= high <= 1"));
        }
        Ok(())
    }
}

pub fn gen_group_bias(spec: &GroupBiasSpec) -> Result<CalibrationDataset> {
    spec.validate()?;
    let k = spec.biases.len();
    let noise = Normal::new(0.0, spec.noise_sd).map_err(|e| Error::config(e.to_string()))?;
    let mut scores = Vec::with_capacity(spec.n);
    let mut groups = Vec::with_capacity(spec.n * k);
    let mut labels = Vec::with_capacity(spec.n);
    for r in 0..spec.n {
        let mut rng = row_rng(spec.seed, r);
        let f0 = spec.score_low + (spec.score_high - spec.score_low) * rng.gen::<f64>();
        let mut y = f0;
        for &b in &spec.biases {
            let g = rng.gen_bool(spec.membership) as u8;
            groups.push(g);
            y += b * g as f64;
        }
        if spec.noise_sd > 0.0 {
            y += noise.sample(&mut rng);
        }
        scores.push(f0);
        labels.push(y.clamp(0.0, 1.0));
    }
    let names = (1..=k).map(|i| format!("g{i}")).collect();
    CalibrationDataset::new(scores, groups, labels, names)
}
