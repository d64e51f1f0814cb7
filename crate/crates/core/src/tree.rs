//! Depth-two trees over base-score thresholds and group indicators, their
//! ensembles, and the per-level-set affine ("patch") form such ensembles
//! reduce to on a finite-range base.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::CalibrationDataset;
use crate::error::{Error, Result};

/// A split: `{x : f0(x) >= value}` or `{x : g_index(x) = 1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SplitPredicate {
    Threshold { value: f64 },
    Group { index: usize },
}

impl SplitPredicate {
    #[inline]
    pub fn contains(&self, f0: f64, g: &[u8]) -> bool {
        match *self {
            SplitPredicate::Threshold { value } => f0 >= value,
            SplitPredicate::Group { index } => g[index] == 1,
        }
    }

    fn max_group(&self) -> Option<usize> {
        match *self {
            SplitPredicate::Group { index } => Some(index),
            SplitPredicate::Threshold { .. } => None,
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            SplitPredicate::Threshold { value } => format!("f0>={value}"),
            SplitPredicate::Group { index } => format!("group#{index}"),
        }
    }
}

/// `c1` in-root and in-child, `c2` in-root and out-child, `c3` out-root and
/// in-child, `c4` out-root and out-child. `left` is the child evaluated
/// inside the root split, `right` the one outside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthTwoTree {
    pub root: SplitPredicate,
    pub left: SplitPredicate,
    pub right: SplitPredicate,
    pub leaves: [f64; 4],
}

impl DepthTwoTree {
    #[inline]
    pub fn leaf_index(&self, f0: f64, g: &[u8]) -> usize {
        if self.root.contains(f0, g) {
            if self.left.contains(f0, g) {
                0
            } else {
                1
            }
        } else if self.right.contains(f0, g) {
            2
        } else {
            3
        }
    }

    #[inline]
    pub(crate) fn eval(&self, f0: f64, g: &[u8]) -> f64 {
        self.leaves[self.leaf_index(f0, g)]
    }

    pub fn predict(&self, f0: f64, g: &[u8]) -> Result<f64> {
        if let Some(i) = self.max_group() {
            if i >= g.len() {
                return Err(Error::data(format!(
                    "tree references group {i} but input has {} groups",
                    g.len()
                )));
            }
        }
        Ok(self.eval(f0, g))
    }

    fn max_group(&self) -> Option<usize> {
        [self.root, self.left, self.right]
            .iter()
            .filter_map(SplitPredicate::max_group)
            .max()
    }

    /// The group index used together with a root group split on one path,
    /// when it differs from the root's: such a tree is not affine in `g`.
    fn mixed_groups(&self) -> Option<(usize, usize)> {
        let SplitPredicate::Group { index: r } = self.root else {
            return None;
        };
        [self.left, self.right].iter().find_map(|c| match *c {
            SplitPredicate::Group { index } if index != r => Some((r, index)),
            _ => None,
        })
    }

    pub fn describe(&self) -> String {
        format!(
            "[{} ? ({} ? {} : {}) : ({} ? {} : {})]",
            self.root.describe(),
            self.left.describe(),
            self.leaves[0],
            self.leaves[1],
            self.right.describe(),
            self.leaves[2],
            self.leaves[3]
        )
    }
}

/// Shorthand for [`DepthTwoTree::predict`].
pub fn tree_predict(t: &DepthTwoTree, f0: f64, g: &[u8]) -> Result<f64> {
    t.predict(f0, g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMetadata {
    pub solver: String,
    pub iterations: usize,
    pub seed: u64,
}

/// `f0 + sum of trees`, optionally clamped to [0,1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsemblePredictor {
    base: String,
    pub clamp: bool,
    pub trees: Vec<DepthTwoTree>,
    pub metadata: EnsembleMetadata,
}

impl EnsemblePredictor {
    pub fn new(trees: Vec<DepthTwoTree>, clamp: bool, metadata: EnsembleMetadata) -> Self {
        Self {
            base: "external".to_string(),
            clamp,
            trees,
            metadata,
        }
    }

    pub fn identity() -> Self {
        Self::new(
            Vec::new(),
            true,
            EnsembleMetadata {
                solver: "identity".into(),
                iterations: 0,
                seed: 0,
            },
        )
    }

    /// Largest group index referenced by any tree.
    pub fn max_group(&self) -> Option<usize> {
        self.trees.iter().filter_map(DepthTwoTree::max_group).max()
    }

    fn check_arity(&self, k: usize) -> Result<()> {
        match self.max_group() {
            Some(i) if i >= k => Err(Error::data(format!(
                "ensemble references group {i} but input has {k} groups"
            ))),
            _ => Ok(()),
        }
    }

    /// Sum of tree outputs, without `f0` and without clamping.
    pub fn correction(&self, f0: f64, g: &[u8]) -> Result<f64> {
        self.check_arity(g.len())?;
        Ok(self.trees.iter().map(|t| t.eval(f0, g)).sum())
    }

    pub fn predict(&self, f0: f64, g: &[u8]) -> Result<f64> {
        let raw = f0 + self.correction(f0, g)?;
        Ok(if self.clamp { raw.clamp(0.0, 1.0) } else { raw })
    }

    pub fn predict_dataset(&self, ds: &CalibrationDataset) -> Result<Vec<f64>> {
        self.check_arity(ds.num_groups())?;
        Ok((0..ds.n())
            .map(|row| {
                let f0 = ds.base_scores()[row];
                let g = ds.group_row(row);
                let raw = f0 + self.trees.iter().map(|t| t.eval(f0, g)).sum::<f64>();
                if self.clamp {
                    raw.clamp(0.0, 1.0)
                } else {
                    raw
                }
            })
            .collect())
    }

    /// The first `count` trees, for replaying partial fits.
    pub fn truncated(&self, count: usize) -> Self {
        let mut e = self.clone();
        e.trees.truncate(count);
        e
    }
}

pub fn ensemble_predict(e: &EnsemblePredictor, f0: f64, g: &[u8]) -> Result<f64> {
    e.predict(f0, g)
}

/// Per-level affine functions of the groups: on level `levels[j]` the
/// correction is `intercepts[j] + sum_i coefficients[j][i] * g_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSetPatch {
    pub levels: Vec<f64>,
    pub intercepts: Vec<f64>,
    pub coefficients: Vec<Vec<f64>>,
}

impl LevelSetPatch {
    pub fn zeros(levels: Vec<f64>, k: usize) -> Self {
        let m = levels.len();
        Self {
            levels,
            intercepts: vec![0.0; m],
            coefficients: vec![vec![0.0; k]; m],
        }
    }

    pub fn num_groups(&self) -> usize {
        self.coefficients.first().map_or(0, Vec::len)
    }

    pub fn level_index(&self, v: f64) -> Option<usize> {
        self.levels.iter().position(|&l| l == v)
    }

    pub fn eval_level(&self, j: usize, g: &[u8]) -> f64 {
        self.intercepts[j]
            + self.coefficients[j]
                .iter()
                .zip(g)
                .map(|(c, &gi)| c * gi as f64)
                .sum::<f64>()
    }

    /// Correction at base value `v`; values off the level set get 0.
    pub fn eval(&self, v: f64, g: &[u8]) -> f64 {
        self.level_index(v).map_or(0.0, |j| self.eval_level(j, g))
    }
}

/// Sorted distinct values of a finite-range base.
pub fn distinct_levels(base: &[f64]) -> Vec<f64> {
    let set: BTreeMap<u64, f64> = base.iter().map(|&v| (crate::util::order_key(v), v)).collect();
    set.into_values().collect()
}

/// Rewrites an ensemble over a finite-range base as one affine function of
/// the groups per level. Exact when no tree combines two different group
/// predicates on one root-to-leaf path; such trees are rejected.
pub fn decompose_to_patches(e: &EnsemblePredictor, base: &[f64], k: usize) -> Result<LevelSetPatch> {
    e.check_arity(k)?;
    if let Some((a, b)) = e.trees.iter().find_map(DepthTwoTree::mixed_groups) {
        return Err(Error::data(format!(
            "tree splits on groups {a} and {b} along one path; not affine in the groups"
        )));
    }
    let levels = distinct_levels(base);
    let mut patch = LevelSetPatch::zeros(levels, k);
    let mut g = vec![0u8; k];
    for (j, &v) in patch.levels.clone().iter().enumerate() {
        g.iter_mut().for_each(|x| *x = 0);
        let at_zero: f64 = e.trees.iter().map(|t| t.eval(v, &g)).sum();
        patch.intercepts[j] = at_zero;
        for i in 0..k {
            g[i] = 1;
            let at_unit: f64 = e.trees.iter().map(|t| t.eval(v, &g)).sum();
            g[i] = 0;
            patch.coefficients[j][i] = at_unit - at_zero;
        }
    }
    Ok(patch)
}

/// Builds an ensemble realizing `patch` by telescoping over the levels:
/// the trees under `f >= v_j` carry `h_j - h_{j-1}`.
pub fn patches_to_ensemble(patch: &LevelSetPatch) -> EnsemblePredictor {
    let k = patch.num_groups();
    let mut trees = Vec::new();
    for j in 0..patch.levels.len() {
        let root = SplitPredicate::Threshold { value: patch.levels[j] };
        let prev0 = if j == 0 { 0.0 } else { patch.intercepts[j - 1] };
        let c0 = patch.intercepts[j] - prev0;
        let any_group = SplitPredicate::Group { index: 0 };
        trees.push(DepthTwoTree {
            root,
            left: any_group,
            right: any_group,
            leaves: [c0, c0, 0.0, 0.0],
        });
        for i in 0..k {
            let prev = if j == 0 { 0.0 } else { patch.coefficients[j - 1][i] };
            let ci = patch.coefficients[j][i] - prev;
            let gi = SplitPredicate::Group { index: i };
            trees.push(DepthTwoTree {
                root,
                left: gi,
                right: gi,
                leaves: [ci, 0.0, 0.0, 0.0],
            });
        }
    }
    EnsemblePredictor::new(
        trees,
        false,
        EnsembleMetadata {
            solver: "patch".into(),
            iterations: patch.levels.len(),
            seed: 0,
        },
    )
}
