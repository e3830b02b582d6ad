//! Spatial-neighbor and random reference predictors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::LabeledDataset;
use crate::geo::haversine_km;
use crate::models::{majority, Task};
use crate::{Error, Result};

/// Default neighbor count before capping at the pool size.
pub const NEIGHBOR_K: usize = 1000;

/// Target value used for training and scoring: label or rescaled indicator.
pub fn target_value(dataset: &LabeledDataset, row: usize, indicator: &str, task: Task) -> Option<f64> {
    dataset.clusters[row].targets.get(indicator).map(|t| match task {
        Task::Classification => f64::from(t.label),
        Task::Regression => t.rescaled,
    })
}

/// For each cluster in `eval_rows`, predict from the `min(k, pool)` nearest
/// clusters of `pool_rows` in the same country that carry the indicator. The
/// evaluated cluster itself is never in its own pool.
pub fn neighbor_baseline(
    dataset: &LabeledDataset,
    eval_rows: &[usize],
    pool_rows: &[usize],
    indicator: &str,
    task: Task,
    k: usize,
) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::Config("neighbor baseline k must be positive".into()));
    }
    let pool: Vec<(usize, f64)> = pool_rows
        .iter()
        .filter_map(|&r| target_value(dataset, r, indicator, task).map(|v| (r, v)))
        .collect();
    eval_rows
        .iter()
        .map(|&row| {
            let me = &dataset.clusters[row];
            let mut cands: Vec<(f64, usize, f64)> = pool
                .iter()
                .filter(|(r, _)| *r != row && dataset.clusters[*r].country == me.country)
                .map(|&(r, v)| (haversine_km(&me.center, &dataset.clusters[r].center), r, v))
                .collect();
            if cands.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "no labeled neighbors for cluster {} and indicator {indicator}",
                    me.cluster_id
                )));
            }
            cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            cands.truncate(k);
            Ok(match task {
                Task::Classification => {
                    let mut counts = [0usize; 2];
                    for c in &cands {
                        counts[c.2 as usize] += 1;
                    }
                    majority(&counts) as f64
                }
                Task::Regression => cands.iter().map(|c| c.2).sum::<f64>() / cands.len() as f64,
            })
        })
        .collect()
}

/// Uniform draws: labels in {0, 1}, or values in [-1, 1].
pub fn random_baseline(n: usize, task: Task, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| match task {
            Task::Classification => f64::from(u8::from(rng.random::<bool>())),
            Task::Regression => rng.random_range(-1.0..=1.0),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, SynthConfig};
    use crate::eval::accuracy;

    fn small(seed: u64) -> LabeledDataset {
        let cfg = SynthConfig {
            seed,
            n_clusters: 60,
            images_per_cluster: (2, 4),
            n_classes: 6,
            n_planted: 2,
            mc_reps: 20,
            ..Default::default()
        };
        generate_synthetic(&cfg).unwrap().0
    }

    #[test]
    fn small_pool_gives_pool_majority_or_mean() {
        let d = small(1);
        let ind = d.indicators(None)[0].clone();
        let all: Vec<usize> = (0..d.clusters.len()).collect();
        let pool = &all[1..];
        let labels: Vec<f64> = pool
            .iter()
            .map(|&r| target_value(&d, r, &ind, Task::Classification).unwrap())
            .collect();
        let ones = labels.iter().filter(|&&l| l == 1.0).count();
        let mode = f64::from(u8::from(ones * 2 > labels.len()));
        let got = neighbor_baseline(&d, &[0], pool, &ind, Task::Classification, 5000).unwrap();
        assert_eq!(got, vec![mode]);
        let vals: Vec<f64> = pool
            .iter()
            .map(|&r| target_value(&d, r, &ind, Task::Regression).unwrap())
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let got = neighbor_baseline(&d, &[0], pool, &ind, Task::Regression, 5000).unwrap();
        assert!((got[0] - mean).abs() < 1e-12);
    }

    #[test]
    fn never_uses_own_label() {
        let mut d = small(2);
        let ind = d.indicators(None)[0].clone();
        let all: Vec<usize> = (0..d.clusters.len()).collect();
        let before = neighbor_baseline(&d, &all, &all, &ind, Task::Regression, 3).unwrap();
        // perturbing a cluster's own target cannot change its own prediction
        for row in [0, 7, 31] {
            d.clusters[row].targets.get_mut(&ind).unwrap().rescaled = 1e6;
            let after = neighbor_baseline(&d, &[row], &all, &ind, Task::Regression, 3).unwrap();
            assert_eq!(after[0], before[row]);
            d = small(2);
        }
    }

    #[test]
    fn labeled_surroundings_win() {
        let mut d = small(3);
        let ind = d.indicators(None)[0].clone();
        let all: Vec<usize> = (0..d.clusters.len()).collect();
        for c in &mut d.clusters[1..] {
            c.targets.get_mut(&ind).unwrap().label = 1;
        }
        d.clusters[0].targets.get_mut(&ind).unwrap().label = 0;
        assert_eq!(
            neighbor_baseline(&d, &[0], &all, &ind, Task::Classification, 3).unwrap(),
            vec![1.0]
        );
    }

    #[test]
    fn empty_pool_is_an_error() {
        let d = small(4);
        let ind = d.indicators(None)[0].clone();
        assert!(neighbor_baseline(&d, &[0], &[0], &ind, Task::Classification, 3).is_err());
    }

    #[test]
    fn random_baseline_properties() {
        let truth: Vec<f64> = (0..10_000).map(|i| (i % 2) as f64).collect();
        let p = random_baseline(10_000, Task::Classification, 5);
        let acc = accuracy(&p, &truth).unwrap();
        assert!((acc - 0.5).abs() <= 0.02, "{acc}");
        assert_eq!(p, random_baseline(10_000, Task::Classification, 5));
        let one = random_baseline(1, Task::Classification, 9);
        assert!(one[0] == 0.0 || one[0] == 1.0);
        assert!(random_baseline(100, Task::Regression, 1)
            .iter()
            .all(|v| (-1.0..=1.0).contains(v)));
    }
}
