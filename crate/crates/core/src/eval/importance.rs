//! Permutation feature importance.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{accuracy, pearson_r2};
use crate::models::{Predictor, Task};
use crate::nn::RngStream;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub name: String,
    pub index: usize,
    /// Baseline metric minus mean permuted metric; may be negative.
    pub mean_drop: f64,
    pub std_drop: f64,
    /// 1 is most important.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRanking {
    pub metric: String,
    pub baseline: f64,
    pub n_repeats: usize,
    pub seed: u64,
    /// In feature order.
    pub features: Vec<FeatureImportance>,
}

impl ImportanceRanking {
    /// Features sorted by rank.
    pub fn ranked(&self) -> Vec<&FeatureImportance> {
        let mut v: Vec<&FeatureImportance> = self.features.iter().collect();
        v.sort_by_key(|f| f.rank);
        v
    }

    pub fn top(&self, k: usize) -> Vec<usize> {
        self.ranked().into_iter().take(k).map(|f| f.index).collect()
    }
}

pub fn task_metric(task: Task, preds: &[f64], truth: &[f64]) -> Result<f64> {
    match task {
        Task::Classification => accuracy(preds, truth),
        Task::Regression => Ok(pearson_r2(preds, truth)?.value),
    }
}

/// Seeded permutation importance; repeat `r` of feature `j` shuffles with the
/// stream `(seed, j)`.
pub fn permutation_importance(
    model: &dyn Predictor,
    x: &Array2<f64>,
    y: &[f64],
    names: &[String],
    n_repeats: usize,
    seed: u64,
) -> Result<ImportanceRanking> {
    let mut streams: Vec<Option<RngStream>> = vec![None; x.ncols()];
    permutation_importance_with(model, x, y, names, n_repeats, seed, &mut |feature, _repeat, perm| {
        streams[feature]
            .get_or_insert_with(|| RngStream::fork(seed, feature as u64))
            .shuffle(perm);
    })
}

/// Like [`permutation_importance`] with a caller-supplied row permutation:
/// `permute(feature, repeat, rows)` reorders `rows` in place.
pub fn permutation_importance_with(
    model: &dyn Predictor,
    x: &Array2<f64>,
    y: &[f64],
    names: &[String],
    n_repeats: usize,
    seed: u64,
    permute: &mut dyn FnMut(usize, usize, &mut [usize]),
) -> Result<ImportanceRanking> {
    let (n, f) = x.dim();
    if n < 2 || y.len() != n {
        return Err(Error::InvalidInput(format!(
            "need at least 2 rows with targets, got {n} rows, {} targets",
            y.len()
        )));
    }
    if names.len() != f {
        return Err(Error::Shape(format!("{} names for {f} features", names.len())));
    }
    if n_repeats == 0 {
        return Err(Error::Config("n_repeats must be positive".into()));
    }
    let task = model.task();
    let baseline = task_metric(task, &model.predict(x)?, y)?;
    let mut work = x.clone();
    let mut features = Vec::with_capacity(f);
    for j in 0..f {
        let col = x.column(j).to_owned();
        let mut drops = Vec::with_capacity(n_repeats);
        for r in 0..n_repeats {
            let mut perm: Vec<usize> = (0..n).collect();
            permute(j, r, &mut perm);
            for (i, &p) in perm.iter().enumerate() {
                work[[i, j]] = col[p];
            }
            drops.push(baseline - task_metric(task, &model.predict(&work)?, y)?);
        }
        work.column_mut(j).assign(&col);
        let mean = drops.iter().sum::<f64>() / n_repeats as f64;
        let var = drops.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n_repeats as f64;
        features.push(FeatureImportance {
            name: names[j].clone(),
            index: j,
            mean_drop: mean,
            std_drop: var.sqrt(),
            rank: 0,
        });
    }
    let mut order: Vec<usize> = (0..f).collect();
    order.sort_by(|&a, &b| features[b].mean_drop.total_cmp(&features[a].mean_drop).then(a.cmp(&b)));
    for (r, &j) in order.iter().enumerate() {
        features[j].rank = r + 1;
    }
    Ok(ImportanceRanking {
        metric: match task {
            Task::Classification => "accuracy".into(),
            Task::Regression => "pearson_r2".into(),
        },
        baseline,
        n_repeats,
        seed,
        features,
    })
}
