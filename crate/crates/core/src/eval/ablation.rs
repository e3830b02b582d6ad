//! Accuracy as a function of the number of images sampled per cluster.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{accuracy, target_value};
use crate::dataset::{LabeledDataset, Part};
use crate::features::{aggregate_counts, standardize_features};
use crate::graph::{cluster_seed, sample_images};
use crate::models::{fit_mlp, MlpConfig, Task};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    /// Strictly ascending images-per-cluster sample sizes.
    pub sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub mlp: MlpConfig,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            sizes: vec![50, 100, 150, 200],
            seeds: (0..5).collect(),
            mlp: MlpConfig::default(),
        }
    }
}

impl AblationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() || self.sizes[0] == 0 {
            return Err(Error::Config("ablation sizes must be non-empty and positive".into()));
        }
        if self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "ablation sizes must be strictly ascending, got {:?}",
                self.sizes
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("ablation needs at least one seed".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub country: String,
    pub indicator: String,
    pub n_images: usize,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub n_seeds: usize,
}

/// Cluster features from `n` images per cluster, sampled with a per-cluster seed.
fn subsampled_features(dataset: &LabeledDataset, rows: &[usize], n: usize, seed: u64) -> Result<Array2<f64>> {
    let width = dataset.taxonomy.len() + 1;
    let mut out = Array2::zeros((rows.len(), width));
    for (r, &i) in rows.iter().enumerate() {
        let c = &dataset.clusters[i];
        let ids = sample_images(&c.image_ids, n, cluster_seed(seed, &c.cluster_id))?;
        let images = ids
            .iter()
            .map(|id| {
                dataset
                    .image(id)
                    .ok_or_else(|| Error::Schema(format!("unknown image {id}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let f = aggregate_counts(c, &images)?;
        out.row_mut(r).assign(&ndarray::Array1::from(f.z));
    }
    Ok(out)
}

/// Train the MLP classifier on each sample size and seed, per country, and
/// report validation accuracy. Requires a split on the dataset.
pub fn ablate_images(dataset: &LabeledDataset, indicator: &str, cfg: &AblationConfig) -> Result<Vec<AblationRow>> {
    cfg.validate()?;
    if dataset.split.is_none() {
        return Err(Error::InvalidInput(
            "image ablation needs a train/validation split".into(),
        ));
    }
    let largest = *cfg.sizes.last().expect("validated non-empty");
    let mut rows = Vec::new();
    for country in dataset.countries() {
        let labeled = |part: Part| -> Vec<usize> {
            dataset
                .part_indices(part)
                .into_iter()
                .filter(|&r| {
                    dataset.clusters[r].country == country && dataset.clusters[r].targets.contains_key(indicator)
                })
                .collect()
        };
        let (train, val) = (labeled(Part::Train), labeled(Part::Val));
        if train.is_empty() || val.is_empty() {
            continue;
        }
        if let Some(c) = train
            .iter()
            .chain(&val)
            .map(|&r| &dataset.clusters[r])
            .find(|c| c.n_images() < largest)
        {
            return Err(Error::InvalidInput(format!(
                "cluster {} has {} images, fewer than the largest sample size {largest}",
                c.cluster_id,
                c.n_images()
            )));
        }
        let y = |rows: &[usize]| -> Vec<f64> {
            rows.iter()
                .map(|&r| target_value(dataset, r, indicator, Task::Classification).expect("filtered on target"))
                .collect()
        };
        let (y_train, y_val) = (y(&train), y(&val));
        for &n in &cfg.sizes {
            let mut accs = Vec::with_capacity(cfg.seeds.len());
            for &seed in &cfg.seeds {
                let x_train = subsampled_features(dataset, &train, n, seed)?;
                let x_val = subsampled_features(dataset, &val, n, seed)?;
                let (scaler, xs) = standardize_features(&x_train)?;
                let xv = scaler.transform(&x_val)?;
                let mlp = MlpConfig {
                    seed,
                    ..cfg.mlp.clone()
                };
                let (model, _) = fit_mlp(&xs, &y_train, Task::Classification, Some((&xv, &y_val)), &mlp)?;
                accs.push(accuracy(&model.predict(&xv)?, &y_val)?);
            }
            let k = accs.len() as f64;
            let mean = accs.iter().sum::<f64>() / k;
            let std = (accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / k).sqrt();
            log::info!("ablation {country}/{indicator}: {n} images -> {mean:.4}");
            rows.push(AblationRow {
                country: country.clone(),
                indicator: indicator.to_string(),
                n_images: n,
                accuracy_mean: mean,
                accuracy_std: std,
                n_seeds: accs.len(),
            });
        }
    }
    Ok(rows)
}
