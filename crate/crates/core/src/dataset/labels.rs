//! Target construction: [-1, 1] rescaling and median-split binary labels,
//! computed separately for every (country, indicator) pair.

use std::collections::{BTreeMap, BTreeSet};

use crate::dataset::{Cluster, ImageRecord, IndicatorStats, LabeledDataset, Target, Taxonomy, DATASET_VERSION};
use crate::{Error, Result};

/// Rescaled values plus the constants that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Rescale {
    pub values: Vec<f64>,
    pub min: f64,
    pub max: f64,
    /// True when all inputs were equal and every output is 0.
    pub degenerate: bool,
}

/// Map values linearly so that min -> -1 and max -> +1.
pub fn rescale_indicator(values: &[f64]) -> Result<Rescale> {
    if values.is_empty() {
        return Err(Error::InvalidInput("cannot rescale an empty column".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("indicator column".into()));
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        log::warn!("constant indicator column ({min}); rescaled to 0");
        return Ok(Rescale {
            values: vec![0.0; values.len()],
            min,
            max,
            degenerate: true,
        });
    }
    let span = max - min;
    let values = values
        .iter()
        .map(|&v| {
            if v == min {
                -1.0
            } else if v == max {
                1.0
            } else {
                (2.0 * (v - min) / span - 1.0).clamp(-1.0, 1.0)
            }
        })
        .collect();
    Ok(Rescale {
        values,
        min,
        max,
        degenerate: false,
    })
}

/// Sample median; the mean of the two middle order statistics for even n.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidInput("median of an empty column".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Ok(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MedianSplit {
    pub labels: Vec<u8>,
    pub median: f64,
    pub ones: usize,
    pub zeros: usize,
    /// Number of values exactly equal to the median.
    pub at_median: usize,
}

/// Label 1 iff value >= median.
pub fn median_split(values: &[f64]) -> Result<MedianSplit> {
    if values.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "median split needs at least 2 values, got {}",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("indicator column".into()));
    }
    let median = median(values)?;
    let labels: Vec<u8> = values.iter().map(|&v| u8::from(v >= median)).collect();
    let ones = labels.iter().filter(|&&l| l == 1).count();
    let zeros = labels.len() - ones;
    let at_median = values.iter().filter(|&&v| v == median).count();
    if ones.abs_diff(zeros) > at_median.max(1) {
        log::warn!("median split is imbalanced: {ones} ones vs {zeros} zeros ({at_median} tied at the median)");
    }
    Ok(MedianSplit {
        labels,
        median,
        ones,
        zeros,
        at_median,
    })
}

/// Assemble a labeled dataset from matched clusters.
///
/// Clusters without images are rejected; images not referenced by any cluster
/// are dropped. Targets are computed per country over the clusters that carry
/// the indicator.
pub fn build_labels(
    taxonomy: Taxonomy,
    mut clusters: Vec<Cluster>,
    images: Vec<ImageRecord>,
) -> Result<LabeledDataset> {
    clusters.sort_by(|a, b| a.cluster_id.cmp(&b.cluster_id));
    for pair in clusters.windows(2) {
        if pair[0].cluster_id == pair[1].cluster_id {
            return Err(Error::InvalidInput(format!(
                "duplicate cluster id {}",
                pair[0].cluster_id
            )));
        }
    }
    if let Some(c) = clusters.iter().find(|c| c.image_ids.is_empty()) {
        return Err(Error::InvalidInput(format!("cluster {} has no images", c.cluster_id)));
    }
    let referenced: BTreeSet<&str> = clusters
        .iter()
        .flat_map(|c| c.image_ids.iter().map(String::as_str))
        .collect();
    let mut images: Vec<ImageRecord> = images
        .into_iter()
        .filter(|r| referenced.contains(r.image_id.as_str()))
        .collect();
    images.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    if images.len() != referenced.len() {
        return Err(Error::Schema(format!(
            "clusters reference {} images but only {} were supplied",
            referenced.len(),
            images.len()
        )));
    }
    for r in &images {
        if r.counts.len() != taxonomy.len() {
            return Err(Error::Schema(format!(
                "image {} has {} counts, taxonomy has {}",
                r.image_id,
                r.counts.len(),
                taxonomy.len()
            )));
        }
    }

    let mut by_country: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, c) in clusters.iter().enumerate() {
        by_country.entry(c.country.clone()).or_default().push(i);
    }
    let mut stats = Vec::new();
    for c in clusters.iter_mut() {
        c.targets.clear();
    }
    for (country, members) in &by_country {
        let indicators: BTreeSet<String> = members
            .iter()
            .flat_map(|&i| clusters[i].indicators.keys().cloned())
            .collect();
        for indicator in indicators {
            let rows: Vec<usize> = members
                .iter()
                .copied()
                .filter(|&i| clusters[i].indicators.contains_key(&indicator))
                .collect();
            if rows.len() < 2 {
                log::warn!("{country}/{indicator}: fewer than 2 clusters carry this indicator; skipped");
                continue;
            }
            let raw: Vec<f64> = rows.iter().map(|&i| clusters[i].indicators[&indicator]).collect();
            let rescaled = rescale_indicator(&raw)?;
            let split = median_split(&raw)?;
            for (k, &i) in rows.iter().enumerate() {
                clusters[i].targets.insert(
                    indicator.clone(),
                    Target {
                        rescaled: rescaled.values[k],
                        label: split.labels[k],
                    },
                );
            }
            stats.push(IndicatorStats {
                country: country.clone(),
                indicator: indicator.clone(),
                min: rescaled.min,
                max: rescaled.max,
                median: split.median,
                n: rows.len(),
                ones: split.ones,
                zeros: split.zeros,
                at_median: split.at_median,
                degenerate_range: rescaled.degenerate,
            });
        }
    }
    Ok(LabeledDataset {
        version: DATASET_VERSION.to_string(),
        taxonomy,
        clusters,
        images,
        stats,
        split: None,
    })
}
