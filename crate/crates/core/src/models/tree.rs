//! CART decision trees (Gini for classification, squared error for
//! regression) with an optional per-split feature subsample.

use ndarray::{Array2, ArrayView1};
use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Task;
use crate::{Error, Result};

/// Rows with `x[feature] < threshold` go left, the rest right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        n: usize,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        /// Class-1 fraction (classification) or mean target (regression).
        value: f64,
        /// Per-class counts for classification, empty for regression.
        counts: Vec<usize>,
        n: usize,
    },
}

impl TreeNode {
    pub fn n(&self) -> usize {
        match self {
            TreeNode::Split { n, .. } | TreeNode::Leaf { n, .. } => *n,
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => 1 + left.node_count() + right.node_count(),
        }
    }

    /// Leaf reached by `x`.
    pub fn leaf(&self, x: ArrayView1<f64>) -> &TreeNode {
        let mut node = self;
        while let TreeNode::Split {
            feature,
            threshold,
            left,
            right,
            ..
        } = node
        {
            node = if x[*feature] < *threshold { left } else { right };
        }
        node
    }

    /// Leaf value: class-1 fraction or regression mean.
    pub fn leaf_value(&self, x: ArrayView1<f64>) -> f64 {
        match self.leaf(x) {
            TreeNode::Leaf { value, .. } => *value,
            TreeNode::Split { .. } => unreachable!("leaf() always ends at a leaf"),
        }
    }

    /// Majority class (ties to class 0) or mean.
    pub fn predict_one(&self, x: ArrayView1<f64>, task: Task) -> f64 {
        match (task, self.leaf(x)) {
            (Task::Classification, TreeNode::Leaf { counts, .. }) => majority(counts) as f64,
            (_, leaf) => match leaf {
                TreeNode::Leaf { value, .. } => *value,
                TreeNode::Split { .. } => unreachable!(),
            },
        }
    }

    pub(crate) fn leaves_mut(&mut self) -> Vec<&mut TreeNode> {
        match self {
            TreeNode::Leaf { .. } => vec![self],
            TreeNode::Split { left, right, .. } => {
                let mut v = left.leaves_mut();
                v.extend(right.leaves_mut());
                v
            }
        }
    }
}

/// Index of the largest count; the lowest index wins ties.
pub fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// `None` grows until leaves are pure or unsplittable.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features considered per split; `None` means all.
    pub mtry: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: None,
            min_leaf: 1,
            mtry: None,
        }
    }
}

/// Fitted tree with its task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub task: Task,
    pub n_features: usize,
    pub root: TreeNode,
}

impl TreeModel {
    pub fn predict(&self, x: &Array2<f64>) -> Result<Vec<f64>> {
        check_width(x, self.n_features)?;
        Ok(x.rows()
            .into_iter()
            .map(|r| self.root.predict_one(r, self.task))
            .collect())
    }
}

pub(crate) fn check_width(x: &Array2<f64>, n_features: usize) -> Result<()> {
    if x.ncols() != n_features {
        return Err(Error::Shape(format!(
            "model expects {n_features} features, got {}",
            x.ncols()
        )));
    }
    Ok(())
}

pub(crate) fn class_labels(y: &[f64]) -> Result<Vec<usize>> {
    y.iter()
        .map(|&v| match v {
            0.0 => Ok(0),
            1.0 => Ok(1),
            other => Err(Error::InvalidInput(format!("class label {other} is not 0 or 1"))),
        })
        .collect()
}

pub(crate) fn check_xy(x: &Array2<f64>, y: &[f64], min_rows: usize) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::Shape(format!("{} rows but {} targets", x.nrows(), y.len())));
    }
    if x.nrows() < min_rows {
        return Err(Error::InvalidInput(format!(
            "need at least {min_rows} rows, got {}",
            x.nrows()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training data".into()));
    }
    Ok(())
}

/// Fit a CART tree on all rows.
pub fn fit_cart(x: &Array2<f64>, y: &[f64], task: Task, params: TreeParams) -> Result<TreeModel> {
    check_xy(x, y, 1)?;
    let rows: Vec<usize> = (0..x.nrows()).collect();
    let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    fit_rows(x, y, task, params, &rows, &mut rng)
}

/// Fit on a multiset of row indices (repeats act as weights).
pub(crate) fn fit_rows(
    x: &Array2<f64>,
    y: &[f64],
    task: Task,
    params: TreeParams,
    rows: &[usize],
    rng: &mut ChaCha8Rng,
) -> Result<TreeModel> {
    if params.min_leaf == 0 {
        return Err(Error::Config("min_leaf must be at least 1".into()));
    }
    let labels = match task {
        Task::Classification => class_labels(y)?,
        Task::Regression => Vec::new(),
    };
    let builder = Builder {
        x,
        y,
        labels: &labels,
        task,
        params,
    };
    let mut rows = rows.to_vec();
    let root = builder.grow(&mut rows, 0, rng);
    Ok(TreeModel {
        task,
        n_features: x.ncols(),
        root,
    })
}

struct Builder<'a> {
    x: &'a Array2<f64>,
    y: &'a [f64],
    labels: &'a [usize],
    task: Task,
    params: TreeParams,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl Builder<'_> {
    fn leaf(&self, rows: &[usize]) -> TreeNode {
        let n = rows.len();
        match self.task {
            Task::Classification => {
                let mut counts = vec![0usize; 2];
                for &r in rows {
                    counts[self.labels[r]] += 1;
                }
                TreeNode::Leaf {
                    value: counts[1] as f64 / n as f64,
                    counts,
                    n,
                }
            }
            Task::Regression => TreeNode::Leaf {
                value: rows.iter().map(|&r| self.y[r]).sum::<f64>() / n as f64,
                counts: Vec::new(),
                n,
            },
        }
    }

    fn is_pure(&self, rows: &[usize]) -> bool {
        match self.task {
            Task::Classification => rows.iter().all(|&r| self.labels[r] == self.labels[rows[0]]),
            Task::Regression => rows.iter().all(|&r| self.y[r] == self.y[rows[0]]),
        }
    }

    fn grow(&self, rows: &mut [usize], depth: usize, rng: &mut ChaCha8Rng) -> TreeNode {
        let n = rows.len();
        let depth_left = self.params.max_depth.is_none_or(|d| depth < d);
        if !depth_left || n < 2 * self.params.min_leaf || self.is_pure(rows) {
            return self.leaf(rows);
        }
        let f = self.x.ncols();
        let features: Vec<usize> = match self.params.mtry {
            Some(m) if m < f => {
                let mut s = sample(rng, f, m.max(1)).into_vec();
                s.sort_unstable();
                s
            }
            _ => (0..f).collect(),
        };
        let mut best: Option<Candidate> = None;
        for &feature in &features {
            if let Some(c) = self.best_split(rows, feature) {
                if best.as_ref().is_none_or(|b| c.score < b.score) {
                    best = Some(c);
                }
            }
        }
        let Some(best) = best else {
            return self.leaf(rows);
        };
        // partition in place: left block first
        let mut left: Vec<usize> = Vec::with_capacity(n);
        let mut right: Vec<usize> = Vec::with_capacity(n);
        for &r in rows.iter() {
            if self.x[[r, best.feature]] < best.threshold {
                left.push(r);
            } else {
                right.push(r);
            }
        }
        TreeNode::Split {
            feature: best.feature,
            threshold: best.threshold,
            n,
            left: Box::new(self.grow(&mut left, depth + 1, rng)),
            right: Box::new(self.grow(&mut right, depth + 1, rng)),
        }
    }

    /// Lowest weighted child impurity over midpoints of distinct values.
    fn best_split(&self, rows: &[usize], feature: usize) -> Option<Candidate> {
        let mut sorted: Vec<(f64, usize)> = rows.iter().map(|&r| (self.x[[r, feature]], r)).collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = sorted.len();
        let min_leaf = self.params.min_leaf;
        let mut best: Option<Candidate> = None;
        match self.task {
            Task::Classification => {
                let total1 = sorted.iter().filter(|(_, r)| self.labels[*r] == 1).count() as f64;
                let mut left1 = 0.0;
                for i in 0..n - 1 {
                    left1 += self.labels[sorted[i].1] as f64;
                    let (a, b) = (sorted[i].0, sorted[i + 1].0);
                    let nl = (i + 1) as f64;
                    if a == b || i + 1 < min_leaf || n - i - 1 < min_leaf {
                        continue;
                    }
                    let nr = n as f64 - nl;
                    let right1 = total1 - left1;
                    let gini = |k: f64, m: f64| {
                        let p = k / m;
                        2.0 * p * (1.0 - p)
                    };
                    let score = nl * gini(left1, nl) + nr * gini(right1, nr);
                    consider(&mut best, feature, a, b, score);
                }
            }
            Task::Regression => {
                let total: f64 = sorted.iter().map(|(_, r)| self.y[*r]).sum();
                let total_sq: f64 = sorted.iter().map(|(_, r)| self.y[*r].powi(2)).sum();
                let (mut s, mut sq) = (0.0, 0.0);
                for i in 0..n - 1 {
                    let v = self.y[sorted[i].1];
                    s += v;
                    sq += v * v;
                    let (a, b) = (sorted[i].0, sorted[i + 1].0);
                    if a == b || i + 1 < min_leaf || n - i - 1 < min_leaf {
                        continue;
                    }
                    let nl = (i + 1) as f64;
                    let nr = n as f64 - nl;
                    let sse_l = (sq - s * s / nl).max(0.0);
                    let sse_r = ((total_sq - sq) - (total - s).powi(2) / nr).max(0.0);
                    consider(&mut best, feature, a, b, sse_l + sse_r);
                }
            }
        }
        best
    }
}

fn consider(best: &mut Option<Candidate>, feature: usize, a: f64, b: f64, score: f64) {
    if best.as_ref().is_none_or(|c| score < c.score) {
        let mid = a + (b - a) / 2.0;
        let threshold = if mid > a && mid <= b { mid } else { b };
        *best = Some(Candidate {
            feature,
            threshold,
            score,
        });
    }
}
