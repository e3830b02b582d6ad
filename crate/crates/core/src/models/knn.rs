use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use super::tree::{check_width, check_xy, majority};
use super::Task;
use crate::{Error, Result};

/// Stored training set for Euclidean k-nearest-neighbor prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub task: Task,
    pub k: usize,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

pub fn fit_knn(x: &Array2<f64>, y: &[f64], task: Task, k: usize) -> Result<KnnModel> {
    check_xy(x, y, 1)?;
    if k == 0 || k > x.nrows() {
        return Err(Error::InvalidInput(format!("k = {k} but {} training rows", x.nrows())));
    }
    if task == Task::Classification {
        super::tree::class_labels(y)?;
    }
    Ok(KnnModel {
        task,
        k,
        x: x.rows().into_iter().map(|r| r.to_vec()).collect(),
        y: y.to_vec(),
    })
}

impl KnnModel {
    /// Training row indices of the k nearest, ties broken by lower index.
    pub fn neighbors(&self, q: ArrayView1<f64>) -> Vec<usize> {
        let mut d: Vec<(f64, usize)> = self
            .x
            .iter()
            .enumerate()
            .map(|(i, r)| (r.iter().zip(q.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>(), i))
            .collect();
        let k = self.k;
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < d.len() {
            d.select_nth_unstable_by(k - 1, cmp);
            d.truncate(k);
        }
        d.sort_by(cmp);
        d.into_iter().map(|(_, i)| i).collect()
    }

    fn width(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    /// Class-1 neighbor share or neighbor mean.
    pub fn scores(&self, x: &Array2<f64>) -> Result<Vec<f64>> {
        check_width(x, self.width())?;
        Ok(x.rows()
            .into_iter()
            .map(|q| self.neighbors(q).iter().map(|&i| self.y[i]).sum::<f64>() / self.k as f64)
            .collect())
    }

    pub fn predict(&self, x: &Array2<f64>) -> Result<Vec<f64>> {
        check_width(x, self.width())?;
        Ok(x.rows()
            .into_iter()
            .map(|q| {
                let nb = self.neighbors(q);
                match self.task {
                    Task::Classification => {
                        let mut counts = [0usize; 2];
                        for &i in &nb {
                            counts[self.y[i] as usize] += 1;
                        }
                        majority(&counts) as f64
                    }
                    Task::Regression => nb.iter().map(|&i| self.y[i]).sum::<f64>() / nb.len() as f64,
                }
            })
            .collect())
    }
}
