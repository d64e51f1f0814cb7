//! Exhaustive depth-two split search over compressed rows.
//!
//! Rows sharing a base-score bin and a group pattern are interchangeable for
//! every tree in the family, so they are merged into one atom carrying a
//! count, a target mean and a within-atom sum of squares. The search then
//! runs on prefix sums over bins and group co-membership tables.

use std::collections::HashMap;

use rand::seq::index;
use rand::Rng;

use crate::tree::{DepthTwoTree, SplitPredicate};
use crate::util::midpoint;

/// Candidate thresholds for `f0 >= t`, sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Binning {
    edges: Vec<f64>,
}

impl Binning {
    pub(crate) fn none() -> Self {
        Self { edges: Vec::new() }
    }

    /// Exact midpoints between distinct values when there are at most
    /// `max_bins` of them, otherwise midpoints at `max_bins` quantiles.
    pub(crate) fn from_scores(scores: &[f64], max_bins: usize) -> Self {
        let mut sorted = scores.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut distinct = sorted.clone();
        distinct.dedup();
        let mut edges = Vec::new();
        if distinct.len() <= max_bins.max(1) {
            for w in distinct.windows(2) {
                edges.push(midpoint(w[0], w[1]));
            }
        } else {
            let n = sorted.len();
            for q in 1..max_bins {
                let idx = q * n / max_bins;
                let lo = sorted[idx - 1];
                // first distinct value above lo
                let hi_pos = sorted.partition_point(|&v| v <= lo);
                if hi_pos >= n {
                    continue;
                }
                let e = midpoint(lo, sorted[hi_pos]);
                if edges.last().is_none_or(|&last| e > last) {
                    edges.push(e);
                }
            }
        }
        Self { edges }
    }

    pub(crate) fn num_bins(&self) -> usize {
        self.edges.len() + 1
    }

    #[inline]
    pub(crate) fn bin(&self, v: f64) -> u32 {
        self.edges.partition_point(|&e| e <= v) as u32
    }

    /// Threshold value of candidate `e`: rows with `bin >= e`. `e = 0` is
    /// the always-true split.
    pub(crate) fn threshold(&self, e: u32) -> f64 {
        if e == 0 {
            0.0
        } else {
            self.edges[e as usize - 1]
        }
    }
}

/// Rows merged by (bin, group pattern).
#[derive(Debug, Clone)]
pub(crate) struct Atoms {
    pub k: usize,
    pub bins: Vec<u32>,
    pub patterns: Vec<u8>,
    pub count: Vec<f64>,
    pub mean: Vec<f64>,
    /// Within-atom sum of squared deviations of the target from `mean`.
    pub ss: Vec<f64>,
}

impl Atoms {
    /// `rows` yields `(f0, group row, target)`.
    pub(crate) fn build<'a, I>(rows: I, k: usize, binning: &Binning) -> (Self, Vec<usize>)
    where
        I: Iterator<Item = (f64, &'a [u8], f64)> + Clone,
    {
        let mut index: HashMap<(u32, &'a [u8]), usize> = HashMap::new();
        let mut atoms = Atoms {
            k,
            bins: Vec::new(),
            patterns: Vec::new(),
            count: Vec::new(),
            mean: Vec::new(),
            ss: Vec::new(),
        };
        let mut sums = Vec::new();
        let mut assignment = Vec::new();
        for (f0, g, t) in rows.clone() {
            let b = binning.bin(f0);
            let next = index.len();
            let id = *index.entry((b, g)).or_insert(next);
            if id == next {
                atoms.bins.push(b);
                atoms.patterns.extend_from_slice(g);
                atoms.count.push(0.0);
                sums.push(0.0);
            }
            atoms.count[id] += 1.0;
            sums[id] += t;
            assignment.push(id);
        }
        atoms.mean = sums.iter().zip(&atoms.count).map(|(s, c)| s / c).collect();
        atoms.ss = vec![0.0; atoms.len()];
        for ((_, _, t), &id) in rows.zip(&assignment) {
            let d = t - atoms.mean[id];
            atoms.ss[id] += d * d;
        }
        (atoms, assignment)
    }

    pub(crate) fn len(&self) -> usize {
        self.count.len()
    }

    pub(crate) fn total_count(&self) -> f64 {
        self.count.iter().sum()
    }

    #[inline]
    pub(crate) fn pattern(&self, a: usize) -> &[u8] {
        &self.patterns[a * self.k..(a + 1) * self.k]
    }

    /// Mean squared error of the target against a per-atom prediction.
    pub(crate) fn loss(&self, pred: &[f64]) -> f64 {
        let mut total = 0.0;
        for a in 0..self.len() {
            let d = self.mean[a] - pred[a];
            total += self.ss[a] + self.count[a] * d * d;
        }
        total / self.total_count()
    }

    #[inline]
    fn contains(&self, a: usize, c: Cand) -> bool {
        match c {
            Cand::Thr(e) => self.bins[a] >= e,
            Cand::Grp(i) => self.patterns[a * self.k + i as usize] == 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Cand {
    Thr(u32),
    Grp(u32),
}

impl Cand {
    pub(crate) fn predicate(self, binning: &Binning) -> SplitPredicate {
        match self {
            Cand::Thr(e) => SplitPredicate::Threshold {
                value: binning.threshold(e),
            },
            Cand::Grp(i) => SplitPredicate::Group { index: i as usize },
        }
    }
}

/// Which trees the search may return.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Family {
    /// Any candidate at the root and, independently, at each child.
    Pooled,
    /// Threshold root, one shared group predicate at both children.
    Strict,
    /// A single split (the children are always-true).
    Stump,
}

/// Candidate list in tie-break order: thresholds ascending, then groups.
/// The always-true threshold is always present; of the rest a `ratio`
/// fraction (at least one) is kept.
pub(crate) fn candidates<R: Rng>(
    binning: &Binning,
    k: usize,
    use_thresholds: bool,
    ratio: f64,
    rng: &mut R,
) -> Vec<Cand> {
    let mut rest = Vec::new();
    if use_thresholds {
        rest.extend((1..binning.num_bins() as u32).map(Cand::Thr));
    }
    rest.extend((0..k as u32).map(Cand::Grp));
    if ratio < 1.0 && !rest.is_empty() {
        let keep = ((ratio * rest.len() as f64).ceil() as usize).clamp(1, rest.len());
        let mut picked = index::sample(rng, rest.len(), keep).into_vec();
        picked.sort_unstable();
        rest = picked.into_iter().map(|i| rest[i]).collect();
    }
    let mut out = vec![Cand::Thr(0)];
    out.extend(rest);
    out
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct TreeFit {
    pub root: Cand,
    pub left: Cand,
    pub right: Cand,
    pub sums: [f64; 4],
    pub counts: [f64; 4],
    /// Sum over leaves of `sum^2 / count`: the squared-error reduction of
    /// fitting leaf means.
    pub gain: f64,
}

impl TreeFit {
    pub(crate) fn leaf_means(&self) -> [f64; 4] {
        let mut out = [0.0; 4];
        for l in 0..4 {
            if self.counts[l] > 0.0 {
                out[l] = self.sums[l] / self.counts[l];
            }
        }
        out
    }

    pub(crate) fn to_tree(self, binning: &Binning, leaves: [f64; 4]) -> DepthTwoTree {
        DepthTwoTree {
            root: self.root.predicate(binning),
            left: self.left.predicate(binning),
            right: self.right.predicate(binning),
            leaves,
        }
    }

    #[inline]
    pub(crate) fn leaf_of(&self, atoms: &Atoms, a: usize) -> usize {
        if atoms.contains(a, self.root) {
            if atoms.contains(a, self.left) {
                0
            } else {
                1
            }
        } else if atoms.contains(a, self.right) {
            2
        } else {
            3
        }
    }

    pub(crate) fn describe(&self, binning: &Binning) -> String {
        format!(
            "{} ? {} : {}",
            self.root.predicate(binning).describe(),
            self.left.predicate(binning).describe(),
            self.right.predicate(binning).describe()
        )
    }
}

/// Aggregated counts and target sums over bins and groups.
struct Tables {
    k: usize,
    nb: usize,
    // suffix over bins: index e covers bins >= e; length nb + 1
    sc: Vec<f64>,
    sr: Vec<f64>,
    // per (e, group): suffix over bins for members of the group
    sgc: Vec<f64>,
    sgr: Vec<f64>,
    // per (group i, group j): members of both
    ggc: Vec<f64>,
    ggr: Vec<f64>,
}

impl Tables {
    fn build(atoms: &Atoms, resid: &[f64], nb: usize, pairs: bool) -> Self {
        let k = atoms.k;
        let mut bc = vec![0.0; nb];
        let mut br = vec![0.0; nb];
        let mut bgc = vec![0.0; nb * k];
        let mut bgr = vec![0.0; nb * k];
        let mut ggc = vec![0.0; if pairs { k * k } else { 0 }];
        let mut ggr = vec![0.0; if pairs { k * k } else { 0 }];
        let mut members = Vec::with_capacity(k);
        for a in 0..atoms.len() {
            let b = atoms.bins[a] as usize;
            let c = atoms.count[a];
            let r = resid[a];
            bc[b] += c;
            br[b] += r;
            members.clear();
            members.extend(
                atoms
                    .pattern(a)
                    .iter()
                    .enumerate()
                    .filter(|(_, &g)| g == 1)
                    .map(|(i, _)| i),
            );
            for &i in &members {
                bgc[b * k + i] += c;
                bgr[b * k + i] += r;
            }
            if pairs {
                for &i in &members {
                    for &j in &members {
                        ggc[i * k + j] += c;
                        ggr[i * k + j] += r;
                    }
                }
            }
        }
        let mut sc = vec![0.0; nb + 1];
        let mut sr = vec![0.0; nb + 1];
        let mut sgc = vec![0.0; (nb + 1) * k];
        let mut sgr = vec![0.0; (nb + 1) * k];
        for b in (0..nb).rev() {
            sc[b] = sc[b + 1] + bc[b];
            sr[b] = sr[b + 1] + br[b];
            for i in 0..k {
                sgc[b * k + i] = sgc[(b + 1) * k + i] + bgc[b * k + i];
                sgr[b * k + i] = sgr[(b + 1) * k + i] + bgr[b * k + i];
            }
        }
        Self {
            k,
            nb,
            sc,
            sr,
            sgc,
            sgr,
            ggc,
            ggr,
        }
    }

    fn total(&self) -> (f64, f64) {
        (self.sc[0], self.sr[0])
    }

    /// Count and sum of rows on one side of `root` that satisfy `child`.
    #[inline]
    fn region(&self, root: Cand, inside: bool, child: Cand) -> (f64, f64) {
        let k = self.k;
        let inner = match (root, child) {
            (Cand::Thr(e1), Cand::Thr(e2)) => {
                let e = e1.max(e2) as usize;
                (self.sc[e], self.sr[e])
            }
            (Cand::Thr(e1), Cand::Grp(j)) => {
                let at = e1 as usize * k + j as usize;
                (self.sgc[at], self.sgr[at])
            }
            (Cand::Grp(i), Cand::Thr(e2)) => {
                let at = e2 as usize * k + i as usize;
                (self.sgc[at], self.sgr[at])
            }
            (Cand::Grp(i), Cand::Grp(j)) => {
                let at = i as usize * k + j as usize;
                (self.ggc[at], self.ggr[at])
            }
        };
        if inside {
            return inner;
        }
        // outside the root: (child members) - (child members inside the root)
        let child_all = match child {
            Cand::Thr(e) => (self.sc[e as usize], self.sr[e as usize]),
            Cand::Grp(j) => (self.sgc[j as usize], self.sgr[j as usize]),
        };
        (child_all.0 - inner.0, child_all.1 - inner.1)
    }
}

#[inline]
fn term(c: f64, s: f64) -> f64 {
    if c > 0.0 {
        s * s / c
    } else {
        0.0
    }
}

/// Searches `family` for the tree maximizing the squared-error reduction
/// of leaf-mean fits to residuals whose per-atom sums are `resid`. Leaves
/// must be empty or hold at least `min_leaf` rows.
pub(crate) fn best_tree(
    atoms: &Atoms,
    resid: &[f64],
    binning: &Binning,
    cands: &[Cand],
    family: Family,
    min_leaf: f64,
) -> Option<TreeFit> {
    let nb = binning.num_bins();
    let tables = Tables::build(atoms, resid, nb, family == Family::Pooled);
    debug_assert_eq!(tables.nb, nb);
    let (tc, tr) = tables.total();
    let ok = |c: f64| c == 0.0 || c >= min_leaf;

    // best child for one side of a root: (value, child, in-count, in-sum)
    let best_child = |root: Cand, inside: bool, side: (f64, f64), pool: &[Cand]| {
        let mut best: Option<(f64, Cand, f64, f64)> = None;
        for &c in pool {
            let (a, ra) = tables.region(root, inside, c);
            let (b, rb) = (side.0 - a, side.1 - ra);
            if !ok(a) || !ok(b) {
                continue;
            }
            let v = term(a, ra) + term(b, rb);
            if best.is_none_or(|(bv, ..)| v > bv) {
                best = Some((v, c, a, ra));
            }
        }
        best
    };

    let mut best: Option<TreeFit> = None;
    let trivial = [Cand::Thr(0)];
    let groups: Vec<Cand> = cands.iter().copied().filter(|c| matches!(c, Cand::Grp(_))).collect();
    for &root in cands {
        if family == Family::Strict && !matches!(root, Cand::Thr(_)) {
            continue;
        }
        let inside = tables.region(root, true, Cand::Thr(0));
        let outside = (tc - inside.0, tr - inside.1);
        if !ok(inside.0) || !ok(outside.0) {
            continue;
        }
        let fit = match family {
            Family::Pooled | Family::Stump => {
                let pool: &[Cand] = if family == Family::Stump { &trivial } else { cands };
                let (Some(l), Some(r)) = (
                    best_child(root, true, inside, pool),
                    best_child(root, false, outside, pool),
                ) else {
                    continue;
                };
                TreeFit {
                    root,
                    left: l.1,
                    right: r.1,
                    sums: [l.3, inside.1 - l.3, r.3, outside.1 - r.3],
                    counts: [l.2, inside.0 - l.2, r.2, outside.0 - r.2],
                    gain: l.0 + r.0,
                }
            }
            Family::Strict => {
                let mut local: Option<TreeFit> = None;
                for &c in &groups {
                    let (a, ra) = tables.region(root, true, c);
                    let (b, rb) = tables.region(root, false, c);
                    let counts = [a, inside.0 - a, b, outside.0 - b];
                    if !counts.iter().all(|&x| ok(x)) {
                        continue;
                    }
                    let sums = [ra, inside.1 - ra, rb, outside.1 - rb];
                    let gain = (0..4).map(|l| term(counts[l], sums[l])).sum();
                    if local.is_none_or(|f| gain > f.gain) {
                        local = Some(TreeFit {
                            root,
                            left: c,
                            right: c,
                            sums,
                            counts,
                            gain,
                        });
                    }
                }
                match local {
                    Some(f) => f,
                    None => continue,
                }
            }
        };
        if best.is_none_or(|b| fit.gain > b.gain) {
            best = Some(fit);
        }
    }
    best
}
