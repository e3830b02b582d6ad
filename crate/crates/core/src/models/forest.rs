use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{check_width, check_xy, fit_rows, TreeModel, TreeParams};
use super::Task;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// `None` picks ceil(sqrt(F)) for classification, ceil(F/3) for regression.
    pub mtry: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 300,
            max_depth: None,
            min_leaf: 1,
            mtry: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

pub fn default_mtry(task: Task, n_features: usize) -> usize {
    let f = n_features as f64;
    let m = match task {
        Task::Classification => f.sqrt().ceil(),
        Task::Regression => (f / 3.0).ceil(),
    };
    (m as usize).clamp(1, n_features.max(1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub task: Task,
    pub n_features: usize,
    pub mtry: usize,
    pub seed: u64,
    pub trees: Vec<TreeModel>,
}

/// Each tree uses seed `seed + index`, so fits are schedule-independent.
pub fn fit_random_forest(x: &Array2<f64>, y: &[f64], task: Task, cfg: &ForestConfig) -> Result<ForestModel> {
    check_xy(x, y, 2)?;
    if cfg.n_trees == 0 {
        return Err(Error::Config("n_trees must be positive".into()));
    }
    let f = x.ncols();
    let mtry = cfg.mtry.unwrap_or_else(|| default_mtry(task, f));
    if mtry == 0 || mtry > f {
        return Err(Error::Config(format!("mtry {mtry} outside 1..={f}")));
    }
    let params = TreeParams {
        max_depth: cfg.max_depth,
        min_leaf: cfg.min_leaf,
        mtry: Some(mtry),
    };
    let n = x.nrows();
    let trees = (0..cfg.n_trees)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(t as u64));
            let rows: Vec<usize> = if cfg.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            fit_rows(x, y, task, params, &rows, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ForestModel {
        task,
        n_features: f,
        mtry,
        seed: cfg.seed,
        trees,
    })
}

impl ForestModel {
    /// Class-1 vote share, or mean prediction for regression.
    pub fn scores(&self, x: &Array2<f64>) -> Result<Vec<f64>> {
        check_width(x, self.n_features)?;
        let k = self.trees.len() as f64;
        Ok(x.rows()
            .into_iter()
            .map(|r| self.trees.iter().map(|t| t.root.predict_one(r, self.task)).sum::<f64>() / k)
            .collect())
    }

    /// Majority vote (ties to class 0) or mean.
    pub fn predict(&self, x: &Array2<f64>) -> Result<Vec<f64>> {
        let s = self.scores(x)?;
        Ok(match self.task {
            Task::Classification => s.into_iter().map(|p| f64::from(u8::from(p > 0.5))).collect(),
            Task::Regression => s,
        })
    }
}
