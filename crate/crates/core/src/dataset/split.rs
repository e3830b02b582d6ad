//! Train/validation splits and cross-country pooling.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledDataset, DATASET_VERSION};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Train,
    Val,
}

/// Seeded partition of clusters into train and validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
    pub train_fraction: f64,
    pub membership: BTreeMap<String, Part>,
}

impl SplitSpec {
    pub fn count(&self, part: Part) -> usize {
        self.membership.values().filter(|&&p| p == part).count()
    }
}

/// Split each country independently: `floor(f * N)` train clusters, the rest
/// validation.
pub fn split_train_val(dataset: &LabeledDataset, seed: u64, train_fraction: f64) -> Result<SplitSpec> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut membership = BTreeMap::new();
    for country in dataset.countries() {
        let mut ids: Vec<&str> = dataset
            .clusters
            .iter()
            .filter(|c| c.country == country)
            .map(|c| c.cluster_id.as_str())
            .collect();
        ids.shuffle(&mut rng);
        let n_train = (train_fraction * ids.len() as f64).floor() as usize;
        for (i, id) in ids.into_iter().enumerate() {
            let part = if i < n_train { Part::Train } else { Part::Val };
            membership.insert(id.to_string(), part);
        }
    }
    Ok(SplitSpec {
        seed,
        train_fraction,
        membership,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolOptions {
    /// Fraction of each dataset's training clusters to keep.
    pub fraction: f64,
    pub seed: u64,
    /// Keep indicators that only some datasets carry.
    pub keep_partial_indicators: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PoolReport {
    pub train_per_dataset: Vec<usize>,
    pub excluded_indicators: Vec<String>,
}

/// Merge datasets into one pooled training set.
///
/// A `fraction` of each input's training clusters is sampled without
/// replacement; unsampled training clusters are removed and every validation
/// cluster is kept so evaluation stays per country. Indicators absent from any
/// input are dropped unless `keep_partial_indicators` is set.
pub fn pool_datasets(datasets: &[&LabeledDataset], opts: PoolOptions) -> Result<(LabeledDataset, PoolReport)> {
    if datasets.is_empty() {
        return Err(Error::InvalidInput("nothing to pool".into()));
    }
    if !(opts.fraction > 0.0 && opts.fraction <= 1.0) {
        return Err(Error::Config(format!(
            "pool fraction must be in (0, 1], got {}",
            opts.fraction
        )));
    }
    let taxonomy = datasets[0].taxonomy.clone();
    if datasets.iter().any(|d| d.taxonomy != taxonomy) {
        return Err(Error::Schema("pooled datasets must share one taxonomy".into()));
    }
    let per_dataset: Vec<BTreeSet<String>> = datasets
        .iter()
        .map(|d| d.indicators(None).into_iter().collect())
        .collect();
    let all: BTreeSet<String> = per_dataset.iter().flatten().cloned().collect();
    let excluded: Vec<String> = if opts.keep_partial_indicators {
        Vec::new()
    } else {
        all.iter()
            .filter(|k| per_dataset.iter().any(|s| !s.contains(*k)))
            .cloned()
            .collect()
    };
    for k in &excluded {
        log::warn!("indicator {k} is missing from at least one pooled dataset; excluded");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut clusters = Vec::new();
    let mut images = Vec::new();
    let mut stats = Vec::new();
    let mut membership = BTreeMap::new();
    let mut report = PoolReport {
        excluded_indicators: excluded.clone(),
        ..Default::default()
    };
    for d in datasets {
        let split = d
            .split
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("pooling requires a train/val split".into()))?;
        let mut train: Vec<&str> = d
            .clusters
            .iter()
            .filter(|c| split.membership.get(&c.cluster_id) == Some(&Part::Train))
            .map(|c| c.cluster_id.as_str())
            .collect();
        train.shuffle(&mut rng);
        let keep = (opts.fraction * train.len() as f64).floor() as usize;
        let kept: BTreeSet<&str> = train.into_iter().take(keep).collect();
        report.train_per_dataset.push(kept.len());
        for c in &d.clusters {
            let part = match split.membership.get(&c.cluster_id) {
                Some(Part::Train) if kept.contains(c.cluster_id.as_str()) => Part::Train,
                Some(Part::Val) => Part::Val,
                _ => continue,
            };
            let mut c = c.clone();
            for k in &excluded {
                c.targets.remove(k);
            }
            membership.insert(c.cluster_id.clone(), part);
            images.extend(d.cluster_images(&c)?.into_iter().cloned());
            clusters.push(c);
        }
        stats.extend(d.stats.iter().filter(|s| !excluded.contains(&s.indicator)).cloned());
    }
    clusters.sort_by(|a, b| a.cluster_id.cmp(&b.cluster_id));
    if let Some(w) = clusters.windows(2).find(|w| w[0].cluster_id == w[1].cluster_id) {
        return Err(Error::InvalidInput(format!(
            "cluster id {} appears in two pooled datasets",
            w[0].cluster_id
        )));
    }
    images.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    images.dedup_by(|a, b| a.image_id == b.image_id);
    let pooled = LabeledDataset {
        version: DATASET_VERSION.to_string(),
        taxonomy,
        clusters,
        images,
        stats,
        split: Some(SplitSpec {
            seed: opts.seed,
            train_fraction: opts.fraction,
            membership,
        }),
    };
    Ok((pooled, report))
}
