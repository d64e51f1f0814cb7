//! Dataset model shared by every calibrator: base score `f0(x)`, binary
//! group memberships `g(x)` and label `y` per row. Calibrators never see raw
//! features.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Immutable calibration dataset. Groups are stored row-major as 0/1 bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationDataset {
    base_scores: Vec<f64>,
    groups: Vec<u8>,
    labels: Vec<f64>,
    group_names: Vec<String>,
    empty_groups: Vec<usize>,
}

impl CalibrationDataset {
    pub fn new(base_scores: Vec<f64>, groups: Vec<u8>, labels: Vec<f64>, group_names: Vec<String>) -> Result<Self> {
        let n = labels.len();
        let k = group_names.len();
        if n == 0 {
            return Err(Error::data("dataset has no rows"));
        }
        if k == 0 {
            return Err(Error::data("dataset has no group columns"));
        }
        if base_scores.len() != n {
            return Err(Error::data(format!(
                "length mismatch: {} base scores for {} labels",
                base_scores.len(),
                n
            )));
        }
        if groups.len() != n * k {
            return Err(Error::data(format!(
                "group matrix has {} entries, expected {}x{}",
                groups.len(),
                n,
                k
            )));
        }
        for (row, &f) in base_scores.iter().enumerate() {
            check_unit("base score", row, f)?;
        }
        for (row, &y) in labels.iter().enumerate() {
            check_unit("label", row, y)?;
        }
        if let Some(pos) = groups.iter().position(|&g| g > 1) {
            return Err(Error::data(format!(
                "group value not binary at row {}, group {}",
                pos / k,
                pos % k
            )));
        }
        let empty_groups = (0..k).filter(|&i| (0..n).all(|r| groups[r * k + i] == 0)).collect();
        Ok(Self {
            base_scores,
            groups,
            labels,
            group_names,
            empty_groups,
        })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn num_groups(&self) -> usize {
        self.group_names.len()
    }

    pub fn base_scores(&self) -> &[f64] {
        &self.base_scores
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn group_names(&self) -> &[String] {
        &self.group_names
    }

    /// Row-major n x K membership matrix.
    pub fn groups(&self) -> &[u8] {
        &self.groups
    }

    pub fn group_row(&self, row: usize) -> &[u8] {
        let k = self.num_groups();
        &self.groups[row * k..(row + 1) * k]
    }

    pub fn in_group(&self, row: usize, group: usize) -> bool {
        self.groups[row * self.num_groups() + group] == 1
    }

    /// Groups with no member rows, flagged at construction.
    pub fn empty_groups(&self) -> &[usize] {
        &self.empty_groups
    }

    /// Rows at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let k = self.num_groups();
        let mut groups = Vec::with_capacity(indices.len() * k);
        for &i in indices {
            groups.extend_from_slice(self.group_row(i));
        }
        Self::new(
            indices.iter().map(|&i| self.base_scores[i]).collect(),
            groups,
            indices.iter().map(|&i| self.labels[i]).collect(),
            self.group_names.clone(),
        )
    }

    /// Same rows and groups with new base scores (e.g. a calibrated
    /// predictor's outputs used as the base of a second pass).
    pub fn with_base_scores(&self, base_scores: Vec<f64>) -> Result<Self> {
        Self::new(
            base_scores,
            self.groups.clone(),
            self.labels.clone(),
            self.group_names.clone(),
        )
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(File::create(path)?);
        self.write_csv_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn write_csv_to<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["y".to_string(), "f0".to_string()];
        header.extend(self.group_names.iter().map(|g| format!("g_{g}")));
        w.write_record(&header)?;
        for row in 0..self.n() {
            let mut rec = vec![self.labels[row].to_string(), self.base_scores[row].to_string()];
            rec.extend(self.group_row(row).iter().map(|g| g.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_unit(what: &str, row: usize, v: f64) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::data(format!("{what} not finite at row {row}")));
    }
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::data(format!("{what} out of range at row {row}: {v}")));
    }
    Ok(())
}

fn parse_number(field: &str, column: &str, row: usize) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::data(format!("unparseable value {field:?} in column {column} at row {row}")))?;
    if !v.is_finite() {
        return Err(Error::data(format!("non-finite value in column {column} at row {row}")));
    }
    Ok(v)
}

/// Parses a dataset CSV: required `y` and `f0` columns, every `g_*` column
/// is a group, anything else is ignored with a warning.
pub fn load_csv(path: impl AsRef<Path>) -> Result<CalibrationDataset> {
    let file = File::open(path.as_ref())?;
    read_csv(file)
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<CalibrationDataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.is_empty() {
        return Err(Error::data("empty file"));
    }
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let y_col = find("y").ok_or_else(|| Error::data("missing y column"))?;
    let f0_col = find("f0").ok_or_else(|| Error::data("missing f0 column"))?;
    let mut group_cols = Vec::new();
    let mut group_names = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        let h = h.trim();
        if let Some(name) = h.strip_prefix("g_") {
            group_cols.push(i);
            group_names.push(name.to_string());
        } else if i != y_col && i != f0_col {
            log::warn!("ignoring column {h:?}");
        }
    }

    let mut labels = Vec::new();
    let mut base = Vec::new();
    let mut groups = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        let y = parse_number(&rec[y_col], "y", row)?;
        if !(0.0..=1.0).contains(&y) {
            return Err(Error::data(format!("label out of range at row {row}: {y}")));
        }
        let f0 = parse_number(&rec[f0_col], "f0", row)?;
        if !(0.0..=1.0).contains(&f0) {
            return Err(Error::data(format!("base score out of range at row {row}: {f0}")));
        }
        labels.push(y);
        base.push(f0);
        for (&c, name) in group_cols.iter().zip(&group_names) {
            let g = parse_number(&rec[c], &format!("g_{name}"), row)?;
            if g != 0.0 && g != 1.0 {
                return Err(Error::data(format!(
                    "group value not binary at row {row}, column g_{name}: {g}"
                )));
            }
            groups.push(g as u8);
        }
    }
    if labels.is_empty() {
        return Err(Error::data("empty file: no data rows"));
    }
    let ds = CalibrationDataset::new(base, groups, labels, group_names)?;
    for &g in ds.empty_groups() {
        log::warn!("group {:?} has no members", ds.group_names()[g]);
    }
    Ok(ds)
}

/// Seed and fraction defining a deterministic holdout split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
    pub holdout_fraction: f64,
}

/// Number of holdout rows: floor(fraction * n), robust to representation
/// error in the fraction (0.3 * 10 must give 3).
pub fn holdout_size(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64) + 1e-9).floor() as usize
}

/// Row indices `(train, holdout)` of a seeded shuffle split; both sorted.
pub fn split_indices(n: usize, spec: SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::data(format!("cannot split a dataset with {n} rows")));
    }
    if !(spec.holdout_fraction > 0.0 && spec.holdout_fraction < 1.0) {
        return Err(Error::config(format!(
            "holdout fraction must be in (0,1), got {}",
            spec.holdout_fraction
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    perm.shuffle(&mut rng);
    let n_hold = holdout_size(n, spec.holdout_fraction);
    let mut hold = perm[..n_hold].to_vec();
    let mut train = perm[n_hold..].to_vec();
    hold.sort_unstable();
    train.sort_unstable();
    Ok((train, hold))
}

/// Splits into `(train, holdout)` with sizes ceil((1-f)n) and floor(fn).
pub fn split_holdout(ds: &CalibrationDataset, spec: SplitSpec) -> Result<(CalibrationDataset, CalibrationDataset)> {
    let (train, hold) = split_indices(ds.n(), spec)?;
    if hold.is_empty() {
        return Err(Error::data(format!(
            "holdout fraction {} leaves no holdout rows out of {}",
            spec.holdout_fraction,
            ds.n()
        )));
    }
    Ok((ds.subset(&train)?, ds.subset(&hold)?))
}
