//! Fixed-size cluster graphs: node features, distance adjacency and a mask.
//!
//! Edge weights are `1 - d / d_max`, clamped to `[0, 1]`, over a fully
//! connected set of images. `d_max` is one global constant for the whole
//! dataset unless per-cluster normalization is requested.

use ndarray::{s, Array2};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Cluster, ImageRecord, LabeledDataset};
use crate::features::{assemble_node_features, NodeFeatureMode, Standardizer};
use crate::geo::haversine_km;
use crate::{Error, Result};

/// Distance used when no cluster has two distinct image locations.
pub const FALLBACK_DMAX_KM: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    pub n_max: usize,
    pub d_max_km: f64,
    pub seed: u64,
    /// Normalize each cluster by its own largest pairwise distance.
    #[serde(default)]
    pub per_cluster_dmax: bool,
}

impl GraphConfig {
    pub fn new(n_max: usize, d_max_km: f64, seed: u64) -> Result<Self> {
        let cfg = GraphConfig {
            n_max,
            d_max_km,
            seed,
            per_cluster_dmax: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_max == 0 {
            return Err(Error::Config("n_max must be at least 1".into()));
        }
        if !(self.d_max_km > 0.0 && self.d_max_km.is_finite()) {
            return Err(Error::Config(format!(
                "d_max_km must be positive, got {}",
                self.d_max_km
            )));
        }
        Ok(())
    }
}

/// Padded graph of one cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterGraph {
    pub v: Array2<f64>,
    pub a: Array2<f64>,
    pub mask: Vec<bool>,
    pub n_real: usize,
}

impl ClusterGraph {
    pub fn n_max(&self) -> usize {
        self.mask.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.v.ncols()
    }

    /// The real (unpadded) part of the graph.
    pub fn unpadded(&self) -> ClusterGraph {
        let n = self.n_real;
        ClusterGraph {
            v: self.v.slice(s![..n, ..]).to_owned(),
            a: self.a.slice(s![..n, ..n]).to_owned(),
            mask: vec![true; n],
            n_real: n,
        }
    }
}

fn max_pairwise_km(images: &[&ImageRecord]) -> f64 {
    let mut best = 0.0f64;
    for (j, a) in images.iter().enumerate() {
        for b in &images[j + 1..] {
            best = best.max(haversine_km(&a.location, &b.location));
        }
    }
    best
}

/// Largest within-cluster pairwise image distance over the whole dataset.
pub fn compute_global_dmax(dataset: &LabeledDataset) -> Result<f64> {
    let mut best = 0.0f64;
    for c in &dataset.clusters {
        best = best.max(max_pairwise_km(&dataset.cluster_images(c)?));
    }
    if best > 0.0 {
        Ok(best)
    } else {
        log::warn!("no cluster has two distinct image locations; d_max falls back to {FALLBACK_DMAX_KM} km");
        Ok(FALLBACK_DMAX_KM)
    }
}

/// 64-bit FNV-1a, used to derive stable per-cluster seeds.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn cluster_seed(global_seed: u64, cluster_id: &str) -> u64 {
    global_seed ^ fnv1a(cluster_id.as_bytes())
}

/// Uniform subset of at most `n_max` ids, returned in id order.
pub fn sample_images(image_ids: &[String], n_max: usize, seed: u64) -> Result<Vec<String>> {
    if n_max == 0 {
        return Err(Error::Config("n_max must be at least 1".into()));
    }
    let mut out: Vec<String> = if image_ids.len() <= n_max {
        image_ids.to_vec()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        sample(&mut rng, image_ids.len(), n_max)
            .into_iter()
            .map(|i| image_ids[i].clone())
            .collect()
    };
    out.sort();
    Ok(out)
}

/// Fully connected adjacency `1 - d/d_max`, clamped to `[0, 1]`.
pub fn build_adjacency(images: &[&ImageRecord], d_max_km: f64) -> Result<Array2<f64>> {
    if d_max_km.is_nan() || d_max_km <= 0.0 {
        return Err(Error::Config(format!("d_max_km must be positive, got {d_max_km}")));
    }
    let n = images.len();
    let mut a = Array2::zeros((n, n));
    for j in 0..n {
        a[[j, j]] = 1.0;
        for k in j + 1..n {
            let d = haversine_km(&images[j].location, &images[k].location);
            let w = (1.0 - d / d_max_km).clamp(0.0, 1.0);
            a[[j, k]] = w;
            a[[k, j]] = w;
        }
    }
    Ok(a)
}

/// Zero-pad node features and adjacency to `n_max` slots.
pub fn pad_graph(v_real: &Array2<f64>, a_real: &Array2<f64>, n_max: usize) -> Result<ClusterGraph> {
    let n = v_real.nrows();
    if a_real.dim() != (n, n) {
        return Err(Error::Shape(format!(
            "adjacency is {:?} but there are {n} nodes",
            a_real.dim()
        )));
    }
    if n > n_max {
        return Err(Error::InvalidInput(format!(
            "{n} nodes exceed n_max = {n_max}; sample first"
        )));
    }
    let mut v = Array2::zeros((n_max, v_real.ncols()));
    v.slice_mut(s![..n, ..]).assign(v_real);
    let mut a = Array2::zeros((n_max, n_max));
    a.slice_mut(s![..n, ..n]).assign(a_real);
    let mut mask = vec![false; n_max];
    mask[..n].fill(true);
    Ok(ClusterGraph { v, a, mask, n_real: n })
}

/// Images used for a cluster's graph under `cfg`.
pub fn graph_images<'a>(
    dataset: &'a LabeledDataset,
    cluster: &Cluster,
    cfg: &GraphConfig,
) -> Result<Vec<&'a ImageRecord>> {
    let ids = sample_images(
        &cluster.image_ids,
        cfg.n_max,
        cluster_seed(cfg.seed, &cluster.cluster_id),
    )?;
    ids.iter()
        .map(|id| {
            dataset
                .image(id)
                .ok_or_else(|| Error::InvalidInput(format!("image {id} missing from dataset")))
        })
        .collect()
}

/// Raw node feature matrix of a set of images.
pub fn node_matrix(images: &[&ImageRecord], mode: NodeFeatureMode) -> Result<Array2<f64>> {
    let rows: Vec<Vec<f64>> = images
        .iter()
        .map(|r| assemble_node_features(r, mode))
        .collect::<Result<_>>()?;
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::Shape("node feature widths differ within a cluster".into()));
    }
    Array2::from_shape_vec((rows.len(), d), rows.concat()).map_err(|e| Error::Shape(e.to_string()))
}

/// Fit a node-feature standardizer on the sampled nodes of `rows`.
pub fn fit_node_standardizer(
    dataset: &LabeledDataset,
    rows: &[usize],
    cfg: &GraphConfig,
    mode: NodeFeatureMode,
) -> Result<Standardizer> {
    let mut blocks = Vec::new();
    for &i in rows {
        blocks.push(node_matrix(&graph_images(dataset, &dataset.clusters[i], cfg)?, mode)?);
    }
    let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
    let stacked = ndarray::concatenate(ndarray::Axis(0), &views).map_err(|e| Error::Shape(e.to_string()))?;
    Standardizer::fit(&stacked)
}

/// Build one padded graph; node features are standardized before padding so
/// padded rows stay zero.
pub fn build_cluster_graph(
    dataset: &LabeledDataset,
    cluster: &Cluster,
    cfg: &GraphConfig,
    mode: NodeFeatureMode,
    standardizer: Option<&Standardizer>,
) -> Result<ClusterGraph> {
    cfg.validate()?;
    let images = graph_images(dataset, cluster, cfg)?;
    let mut v = node_matrix(&images, mode)?;
    if let Some(s) = standardizer {
        v = s.transform(&v)?;
    }
    let d_max = if cfg.per_cluster_dmax {
        let d = max_pairwise_km(&images);
        if d > 0.0 {
            d
        } else {
            FALLBACK_DMAX_KM
        }
    } else {
        cfg.d_max_km
    };
    let a = build_adjacency(&images, d_max)?;
    pad_graph(&v, &a, cfg.n_max)
}
