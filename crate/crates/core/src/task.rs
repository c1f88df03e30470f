//! Two-signal node classification: a local score averaged over the closed
//! 1-hop neighborhood, a far score averaged over the `r_star` shell, mixed by
//! `beta` and thresholded at zero.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::graphgen::{DistanceMatrix, Graph};
use crate::rng::rng_from_seed;

/// Minimum number of nodes with a nonempty far shell.
pub const MIN_VALID_NODES: usize = 30;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(deny_unknown_fields, default)
)]
pub struct TaskSpec {
    /// Locality mixture: 1 is purely local, 0 purely far.
    pub beta: f64,
    pub r_star: u32,
    /// (train, val, test)
    pub split_fractions: [f64; 3],
    pub split_seed: u64,
}

impl Default for TaskSpec {
    fn default() -> Self {
        Self {
            beta: 1.0,
            r_star: 3,
            split_fractions: [0.6, 0.2, 0.2],
            split_seed: 0,
        }
    }
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::InvalidParams(format!("beta = {} outside [0, 1]", self.beta)));
        }
        if self.r_star < 2 {
            return Err(Error::InvalidParams("r_star must be at least 2".into()));
        }
        if self.split_fractions.iter().any(|&f| !(f > 0.0 && f.is_finite())) {
            return Err(Error::InvalidParams("split fractions must be positive".into()));
        }
        let total: f64 = self.split_fractions.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParams(format!("split fractions sum to {total}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "lowercase"))]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTask {
    beta: f64,
    r_star: u32,
    labels: Vec<Option<u8>>,
    g_loc_hat: Vec<Option<f64>>,
    g_far_hat: Vec<Option<f64>>,
    splits: [Vec<usize>; 3],
}

impl LabeledTask {
    /// Reassembles a task from stored columns, re-checking the invariants
    /// that do not depend on the graph.
    pub fn from_parts(
        beta: f64,
        r_star: u32,
        labels: Vec<Option<u8>>,
        g_loc_hat: Vec<Option<f64>>,
        g_far_hat: Vec<Option<f64>>,
        splits: [Vec<usize>; 3],
    ) -> Result<Self> {
        let n = labels.len();
        if g_loc_hat.len() != n || g_far_hat.len() != n {
            return Err(Error::ShapeMismatch("task columns differ in length".into()));
        }
        for i in 0..n {
            let defined = [labels[i].is_some(), g_loc_hat[i].is_some(), g_far_hat[i].is_some()];
            if defined.iter().any(|&d| d != defined[0]) {
                return Err(Error::InvalidParams(format!("node {i} is partially labeled")));
            }
            if matches!(labels[i], Some(l) if l > 1) {
                return Err(Error::InvalidParams(format!("node {i} has a non-binary label")));
            }
        }
        let mut seen = vec![false; n];
        for split in &splits {
            for &i in split {
                if i >= n || labels[i].is_none() || seen[i] {
                    return Err(Error::InvalidParams(format!("split entry {i} is invalid or repeated")));
                }
                seen[i] = true;
            }
        }
        if (0..n).any(|i| labels[i].is_some() != seen[i]) {
            return Err(Error::InvalidParams("splits do not cover the valid nodes".into()));
        }
        Ok(Self { beta, r_star, labels, g_loc_hat, g_far_hat, splits })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn r_star(&self) -> u32 {
        self.r_star
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    /// Label per node; `None` for nodes with an empty far shell.
    pub fn labels(&self) -> &[Option<u8>] {
        &self.labels
    }

    pub fn is_valid(&self, i: usize) -> bool {
        self.labels[i].is_some()
    }

    pub fn valid_mask(&self) -> Vec<bool> {
        self.labels.iter().map(Option::is_some).collect()
    }

    pub fn n_valid(&self) -> usize {
        self.labels.iter().filter(|l| l.is_some()).count()
    }

    pub fn g_loc_hat(&self) -> &[Option<f64>] {
        &self.g_loc_hat
    }

    pub fn g_far_hat(&self) -> &[Option<f64>] {
        &self.g_far_hat
    }

    /// Sorted node indices of one split.
    pub fn split(&self, split: Split) -> &[usize] {
        &self.splits[split as usize]
    }

    /// Split membership per node.
    pub fn split_of(&self, i: usize) -> Option<Split> {
        Split::ALL.into_iter().find(|&s| self.split(s).binary_search(&i).is_ok())
    }
}

/// Mean latent signal over `{i}` and its neighbors.
pub fn local_score(g: &Graph, i: usize) -> f64 {
    let z = g.z();
    let sum: f64 = z[i] + g.neighbors(i).iter().map(|&j| z[j]).sum::<f64>();
    sum / (g.degree(i) + 1) as f64
}

/// Mean latent signal over the shell at `r_star` hops; `None` if empty.
pub fn far_score(g: &Graph, dm: &DistanceMatrix, i: usize, r_star: u32) -> Option<f64> {
    let z = g.z();
    let (sum, count) = dm
        .row(i)
        .iter()
        .zip(z)
        .filter(|&(&d, _)| d == r_star)
        .fold((0.0, 0usize), |(s, c), (_, &zj)| (s + zj, c + 1));
    (count > 0).then(|| sum / count as f64)
}

/// Standardizes `scores` over the entries where `mask` is set, using the
/// population standard deviation. Masked-out entries come back as `None`.
pub fn standardize(scores: &[f64], mask: &[bool]) -> Result<Vec<Option<f64>>> {
    if scores.len() != mask.len() {
        return Err(Error::ShapeMismatch("scores and mask differ in length".into()));
    }
    let valid: Vec<f64> = scores.iter().zip(mask).filter(|(_, &m)| m).map(|(&s, _)| s).collect();
    if valid.len() < 2 {
        return Err(Error::DegenerateTask(format!("{} valid scores", valid.len())));
    }
    let count = valid.len() as f64;
    let mean = valid.iter().sum::<f64>() / count;
    let var = valid.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / count;
    let std = libm::sqrt(var);
    if !(std > 0.0) || !std.is_finite() {
        return Err(Error::DegenerateTask("zero variance over valid nodes".into()));
    }
    Ok(scores
        .iter()
        .zip(mask)
        .map(|(&s, &m)| m.then(|| (s - mean) / std))
        .collect())
}

/// Builds labels and splits for one graph.
///
/// Nodes whose `r_star` shell is empty are invalid: they keep no label, are
/// left out of every split, and are not used to standardize the scores.
pub fn make_labels(g: &Graph, dm: &DistanceMatrix, spec: &TaskSpec) -> Result<LabeledTask> {
    spec.validate()?;
    if dm.n() != g.n() {
        return Err(Error::ShapeMismatch("distance matrix does not match graph".into()));
    }
    let valid: Vec<usize> = (0..g.n()).filter(|&i| far_score(g, dm, i, spec.r_star).is_some()).collect();
    if valid.len() < MIN_VALID_NODES {
        return Err(Error::TaskTooDegenerate { valid: valid.len(), required: MIN_VALID_NODES });
    }

    let scored = score_nodes(g, dm, spec.beta, spec.r_star)?;
    let splits = split_nodes(&valid, spec.split_fractions, spec.split_seed)?;
    Ok(LabeledTask {
        beta: spec.beta,
        r_star: spec.r_star,
        labels: scored.labels,
        g_loc_hat: scored.g_loc_hat,
        g_far_hat: scored.g_far_hat,
        splits,
    })
}

/// Standardized scores and labels, before any size check or split.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeScores {
    pub labels: Vec<Option<u8>>,
    pub g_loc_hat: Vec<Option<f64>>,
    pub g_far_hat: Vec<Option<f64>>,
}

/// Scores and labels every node. Ties `s(i) = 0` get label 0.
pub fn score_nodes(g: &Graph, dm: &DistanceMatrix, beta: f64, r_star: u32) -> Result<NodeScores> {
    let n = g.n();
    let far: Vec<Option<f64>> = (0..n).map(|i| far_score(g, dm, i, r_star)).collect();
    let mask: Vec<bool> = far.iter().map(Option::is_some).collect();
    let loc: Vec<f64> = (0..n).map(|i| local_score(g, i)).collect();
    let far_raw: Vec<f64> = far.iter().map(|f| f.unwrap_or(0.0)).collect();
    let g_loc_hat = standardize(&loc, &mask)?;
    let g_far_hat = standardize(&far_raw, &mask)?;
    let labels = (0..n)
        .map(|i| match (g_loc_hat[i], g_far_hat[i]) {
            (Some(l), Some(f)) => Some(u8::from(beta * l + (1.0 - beta) * f > 0.0)),
            _ => None,
        })
        .collect();
    Ok(NodeScores { labels, g_loc_hat, g_far_hat })
}

/// Shuffles `valid` and cuts it into train/val/test by rounded fractions.
fn split_nodes(valid: &[usize], fractions: [f64; 3], seed: u64) -> Result<[Vec<usize>; 3]> {
    let mut order = valid.to_vec();
    order.shuffle(&mut rng_from_seed(seed));
    let total = order.len();
    let n_train = libm::round(fractions[0] * total as f64) as usize;
    let n_val = libm::round(fractions[1] * total as f64) as usize;
    if n_train == 0 || n_val == 0 || n_train + n_val >= total {
        return Err(Error::DegenerateTask(format!("cannot split {total} valid nodes by {fractions:?}")));
    }
    let mut train = order[..n_train].to_vec();
    let mut val = order[n_train..n_train + n_val].to_vec();
    let mut test = order[n_train + n_val..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok([train, val, test])
}
