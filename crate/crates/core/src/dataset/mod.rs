//! Image records, clusters and the labeled dataset artifact.

mod io;
mod labels;
mod matching;
mod split;
mod synth;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::geo::GeoPoint;
use crate::{Error, Result};

pub use io::{
    load_clusters, load_images, load_taxonomy, write_clusters_csv, write_images_jsonl, write_taxonomy, LoadReport,
};
pub use labels::{build_labels, median, median_split, rescale_indicator, MedianSplit, Rescale};
pub use matching::{match_images_to_clusters, MatchMode, MatchReport};
pub use split::{pool_datasets, split_train_val, Part, PoolOptions, PoolReport, SplitSpec};
pub use synth::{generate_synthetic, NoiseSpec, SynthConfig, SyntheticOracle};

/// Version tag written into dataset artifacts.
pub const DATASET_VERSION: &str = "1";

/// One geotagged street-level image with its per-class object counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ImageRow", into = "ImageRow")]
pub struct ImageRecord {
    pub image_id: String,
    pub location: GeoPoint,
    pub counts: Vec<u32>,
    pub embedding: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct ImageRow {
    image_id: String,
    lat: f64,
    lon: f64,
    counts: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embedding: Option<Vec<f64>>,
}

impl TryFrom<ImageRow> for ImageRecord {
    type Error = Error;

    fn try_from(row: ImageRow) -> Result<Self> {
        if let Some(e) = &row.embedding {
            if e.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("embedding of image {}", row.image_id)));
            }
        }
        Ok(ImageRecord {
            location: GeoPoint::new(row.lat, row.lon)?,
            image_id: row.image_id,
            counts: row.counts,
            embedding: row.embedding,
        })
    }
}

impl From<ImageRecord> for ImageRow {
    fn from(r: ImageRecord) -> Self {
        ImageRow {
            image_id: r.image_id,
            lat: r.location.lat(),
            lon: r.location.lon(),
            counts: r.counts,
            embedding: r.embedding,
        }
    }
}

/// Ordered object class names; position defines the count index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Taxonomy {
    class_names: Vec<String>,
}

impl TryFrom<Vec<String>> for Taxonomy {
    type Error = Error;

    fn try_from(names: Vec<String>) -> Result<Self> {
        Taxonomy::new(names)
    }
}

impl From<Taxonomy> for Vec<String> {
    fn from(t: Taxonomy) -> Self {
        t.class_names
    }
}

impl Taxonomy {
    pub fn new(class_names: Vec<String>) -> Result<Self> {
        if class_names.is_empty() {
            return Err(Error::Schema("taxonomy must contain at least one class".into()));
        }
        let mut seen = BTreeSet::new();
        for name in &class_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::Schema(format!("duplicate class name '{name}'")));
            }
        }
        Ok(Taxonomy { class_names })
    }

    /// `class_00`, `class_01`, ... for synthetic data.
    pub fn numbered(n: usize) -> Result<Self> {
        Taxonomy::new((0..n).map(|i| format!("class_{i:02}")).collect())
    }

    pub fn len(&self) -> usize {
        self.class_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.class_names
    }

    /// Class names followed by the trailing image-count feature.
    pub fn feature_names(&self) -> Vec<String> {
        let mut names = self.class_names.clone();
        names.push("n_images".to_string());
        names
    }
}

/// Rescaled value and binary label of one indicator for one cluster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub rescaled: f64,
    pub label: u8,
}

/// A household cluster: a 5 km disc with ground-truth indicators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub cluster_id: String,
    pub center: GeoPoint,
    pub country: String,
    #[serde(default)]
    pub image_ids: Vec<String>,
    pub indicators: BTreeMap<String, f64>,
    #[serde(default)]
    pub targets: BTreeMap<String, Target>,
}

impl Cluster {
    pub fn n_images(&self) -> usize {
        self.image_ids.len()
    }
}

/// Per-(country, indicator) constants used to build targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorStats {
    pub country: String,
    pub indicator: String,
    pub min: f64,
    pub max: f64,
    pub median: f64,
    pub n: usize,
    pub ones: usize,
    pub zeros: usize,
    pub at_median: usize,
    pub degenerate_range: bool,
}

/// Clusters with matched images, per-country targets and an optional split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub version: String,
    pub taxonomy: Taxonomy,
    /// Sorted by `cluster_id`.
    pub clusters: Vec<Cluster>,
    /// Sorted by `image_id`; only images assigned to a cluster.
    pub images: Vec<ImageRecord>,
    pub stats: Vec<IndicatorStats>,
    #[serde(default)]
    pub split: Option<SplitSpec>,
}

impl LabeledDataset {
    pub fn image(&self, image_id: &str) -> Option<&ImageRecord> {
        self.images
            .binary_search_by(|r| r.image_id.as_str().cmp(image_id))
            .ok()
            .map(|i| &self.images[i])
    }

    pub fn cluster(&self, cluster_id: &str) -> Option<&Cluster> {
        self.clusters
            .binary_search_by(|c| c.cluster_id.as_str().cmp(cluster_id))
            .ok()
            .map(|i| &self.clusters[i])
    }

    /// Images of a cluster in `image_ids` order.
    pub fn cluster_images(&self, cluster: &Cluster) -> Result<Vec<&ImageRecord>> {
        cluster
            .image_ids
            .iter()
            .map(|id| {
                self.image(id).ok_or_else(|| {
                    Error::Schema(format!("cluster {} references unknown image {id}", cluster.cluster_id))
                })
            })
            .collect()
    }

    pub fn countries(&self) -> Vec<String> {
        self.clusters
            .iter()
            .map(|c| c.country.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Indicators with targets in at least one cluster of `country`.
    pub fn indicators(&self, country: Option<&str>) -> Vec<String> {
        self.clusters
            .iter()
            .filter(|c| country.is_none_or(|k| c.country == k))
            .flat_map(|c| c.targets.keys().cloned())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn embedding_dim(&self) -> Option<usize> {
        self.images.iter().find_map(|r| r.embedding.as_ref().map(Vec::len))
    }

    pub fn all_have_embeddings(&self) -> bool {
        !self.images.is_empty() && self.images.iter().all(|r| r.embedding.is_some())
    }

    /// Indices of clusters in a split part (all clusters when no split is set
    /// and `part` is `Train`).
    pub fn part_indices(&self, part: Part) -> Vec<usize> {
        match &self.split {
            Some(split) => self
                .clusters
                .iter()
                .enumerate()
                .filter(|(_, c)| split.membership.get(&c.cluster_id) == Some(&part))
                .map(|(i, _)| i)
                .collect(),
            None if part == Part::Train => (0..self.clusters.len()).collect(),
            None => Vec::new(),
        }
    }

    /// Sub-dataset restricted to one country, keeping its images, stats and split.
    pub fn filter_country(&self, country: &str) -> LabeledDataset {
        let clusters: Vec<Cluster> = self.clusters.iter().filter(|c| c.country == country).cloned().collect();
        let image_ids: BTreeSet<&str> = clusters
            .iter()
            .flat_map(|c| c.image_ids.iter().map(String::as_str))
            .collect();
        let images = self
            .images
            .iter()
            .filter(|r| image_ids.contains(r.image_id.as_str()))
            .cloned()
            .collect();
        let split = self.split.as_ref().map(|s| SplitSpec {
            seed: s.seed,
            train_fraction: s.train_fraction,
            membership: clusters
                .iter()
                .filter_map(|c| s.membership.get(&c.cluster_id).map(|p| (c.cluster_id.clone(), *p)))
                .collect(),
        });
        LabeledDataset {
            version: self.version.clone(),
            taxonomy: self.taxonomy.clone(),
            clusters,
            images,
            stats: self.stats.iter().filter(|s| s.country == country).cloned().collect(),
            split,
        }
    }

    /// Total number of images referenced by clusters.
    pub fn assigned_image_count(&self) -> usize {
        self.clusters.iter().map(Cluster::n_images).sum()
    }
}
