//! Cluster-level count vectors, per-image node features and standardization.

use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::{Cluster, ImageRecord, LabeledDataset};
use crate::{Error, Result};

/// Summed per-class counts of a cluster followed by its image count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterFeature {
    pub z: Vec<f64>,
}

impl ClusterFeature {
    pub fn n_images(&self) -> usize {
        self.z.last().copied().unwrap_or(0.0) as usize
    }

    pub fn counts(&self) -> &[f64] {
        &self.z[..self.z.len() - 1]
    }
}

/// Sum member image counts and append the number of images.
pub fn aggregate_counts(cluster: &Cluster, images: &[&ImageRecord]) -> Result<ClusterFeature> {
    let first = images
        .first()
        .ok_or_else(|| Error::InvalidInput(format!("cluster {} has no images to aggregate", cluster.cluster_id)))?;
    let c = first.counts.len();
    let mut z = vec![0.0; c + 1];
    for r in images {
        if r.counts.len() != c {
            return Err(Error::Shape(format!(
                "image {} has {} counts, expected {c}",
                r.image_id,
                r.counts.len()
            )));
        }
        for (acc, &k) in z.iter_mut().zip(&r.counts) {
            *acc += f64::from(k);
        }
    }
    z[c] = images.len() as f64;
    Ok(ClusterFeature { z })
}

/// Feature matrix (rows follow `rows`, an index list into `dataset.clusters`).
pub fn cluster_feature_matrix(dataset: &LabeledDataset, rows: &[usize]) -> Result<Array2<f64>> {
    let width = dataset.taxonomy.len() + 1;
    let mut out = Array2::zeros((rows.len(), width));
    for (r, &i) in rows.iter().enumerate() {
        let cluster = dataset
            .clusters
            .get(i)
            .ok_or_else(|| Error::InvalidInput(format!("cluster index {i} out of range")))?;
        let f = aggregate_counts(cluster, &dataset.cluster_images(cluster)?)?;
        out.row_mut(r).assign(&Array1::from(f.z));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum NodeFeatureMode {
    #[default]
    #[serde(rename = "counts")]
    Counts,
    #[serde(rename = "embedding")]
    Embedding,
    #[serde(rename = "counts+embedding")]
    CountsEmbedding,
}

impl NodeFeatureMode {
    pub fn uses_embedding(self) -> bool {
        self != NodeFeatureMode::Counts
    }

    /// Node feature width for `n_classes` counts and embeddings of `embedding_dim`.
    pub fn dim(self, n_classes: usize, embedding_dim: Option<usize>) -> Result<usize> {
        let e = || embedding_dim.ok_or_else(|| Error::InvalidInput("node feature mode needs embeddings".into()));
        Ok(match self {
            NodeFeatureMode::Counts => n_classes,
            NodeFeatureMode::Embedding => e()?,
            NodeFeatureMode::CountsEmbedding => n_classes + e()?,
        })
    }
}

impl std::str::FromStr for NodeFeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "counts" => Ok(NodeFeatureMode::Counts),
            "embedding" => Ok(NodeFeatureMode::Embedding),
            "counts+embedding" => Ok(NodeFeatureMode::CountsEmbedding),
            other => Err(Error::Config(format!("unknown node feature mode '{other}'"))),
        }
    }
}

/// One node's features: counts, embedding, or counts followed by embedding.
pub fn assemble_node_features(image: &ImageRecord, mode: NodeFeatureMode) -> Result<Vec<f64>> {
    let counts = image.counts.iter().map(|&k| f64::from(k));
    if !mode.uses_embedding() {
        return Ok(counts.collect());
    }
    let embedding = image
        .embedding
        .as_ref()
        .ok_or_else(|| Error::InvalidInput(format!("image {} has no embedding", image.image_id)))?;
    Ok(match mode {
        NodeFeatureMode::Embedding => embedding.clone(),
        _ => counts.chain(embedding.iter().copied()).collect(),
    })
}

/// Check that every image can provide features under `mode`; the error lists
/// the offending image ids.
pub fn check_node_mode(dataset: &LabeledDataset, mode: NodeFeatureMode) -> Result<()> {
    if !mode.uses_embedding() {
        return Ok(());
    }
    let missing: Vec<&str> = dataset
        .images
        .iter()
        .filter(|r| r.embedding.is_none())
        .map(|r| r.image_id.as_str())
        .collect();
    if missing.is_empty() {
        return Ok(());
    }
    let shown: Vec<&str> = missing.iter().take(10).copied().collect();
    Err(Error::InvalidInput(format!(
        "{} images lack embeddings: {}{}",
        missing.len(),
        shown.join(", "),
        if missing.len() > shown.len() { ", ..." } else { "" }
    )))
}

/// Per-column affine standardization fitted on training rows. Columns with
/// zero variance are passed through unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Array2<f64>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::InvalidInput("cannot standardize an empty matrix".into()));
        }
        let n = x.nrows() as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut scale = Vec::with_capacity(x.ncols());
        for col in x.axis_iter(Axis(1)) {
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
            if var > 0.0 && var.is_finite() {
                mean.push(m);
                scale.push(var.sqrt());
            } else {
                mean.push(0.0);
                scale.push(1.0);
            }
        }
        Ok(Standardizer { mean, scale })
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    fn check(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.width() {
            return Err(Error::Shape(format!(
                "standardizer fitted on {} columns, got {}",
                self.width(),
                x.ncols()
            )));
        }
        Ok(())
    }

    pub fn transform(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check(x)?;
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }

    pub fn inverse_transform(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check(x)?;
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = *v * s + m;
            }
        }
        Ok(out)
    }
}

/// Fit on `x` and return the transform with the transformed matrix.
pub fn standardize_features(x: &Array2<f64>) -> Result<(Standardizer, Array2<f64>)> {
    let s = Standardizer::fit(x)?;
    let t = s.transform(x)?;
    Ok((s, t))
}

/// Write the cluster feature table, one row per cluster in id order. The
/// header is the class names followed by `n_images`.
pub fn write_feature_csv(path: &Path, dataset: &LabeledDataset) -> Result<()> {
    let rows: Vec<usize> = (0..dataset.clusters.len()).collect();
    let x = cluster_feature_matrix(dataset, &rows)?;
    let mut w = csv::Writer::from_path(path).map_err(Error::Csv)?;
    w.write_record(dataset.taxonomy.feature_names())?;
    for row in x.rows() {
        w.write_record(row.iter().map(|v| format!("{v}")))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
