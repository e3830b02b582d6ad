//! Subcommand implementations and the helpers they share.

mod ablate;
mod eval;
mod ingest;
mod interpret;
mod synth;
mod train;

use std::path::{Path, PathBuf};
use std::time::Instant;

use livelihood_core::dataset::{pool_datasets, LabeledDataset, Part, PoolOptions};
use livelihood_core::eval::target_value;
use livelihood_core::features::{cluster_feature_matrix, standardize_features, NodeFeatureMode};
use livelihood_core::gcn::{gcn_predict, GcnModel};
use livelihood_core::graph::{build_cluster_graph, compute_global_dmax, ClusterGraph, GraphConfig};
use livelihood_core::models::{
    fit_gbdt, fit_knn, fit_mlp, fit_random_forest, FittedModel, Predictor, ShallowModel, Task,
};
use livelihood_core::nn::{load_checkpoint, Checkpoint};
use livelihood_core::{Error, Result};

use crate::config::RunConfig;
use crate::manifest::{write_json, RunManifest};

pub use ablate::cmd_ablate_images;
pub use eval::cmd_eval;
pub use ingest::cmd_ingest;
pub use interpret::cmd_interpret;
pub use synth::cmd_synth;
pub use train::cmd_train;

pub const DATASET_DIR: &str = "dataset";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const REPORT_DIR: &str = "reports";
pub const INTERPRET_DIR: &str = "interpret";
pub const SYNTH_DIR: &str = "synth";

/// State of one command run.
pub(crate) struct Run<'a> {
    pub cfg: &'a RunConfig,
    pub manifest: RunManifest,
    started: Instant,
}

impl<'a> Run<'a> {
    pub fn new(command: &str, cfg: &'a RunConfig) -> Self {
        Run {
            cfg,
            manifest: RunManifest::new(command, cfg.hash(), cfg.seed),
            started: Instant::now(),
        }
    }

    pub fn out(&self) -> &Path {
        &self.cfg.out_dir
    }

    /// Create `out/<sub>` and return it.
    pub fn dir(&self, sub: &str) -> Result<PathBuf> {
        let d = self.out().join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        Ok(d)
    }

    pub fn output(&mut self, path: &Path) {
        let rel = path.strip_prefix(self.out()).unwrap_or(path);
        self.manifest.outputs.push(rel.to_string_lossy().replace('\\', "/"));
    }

    /// Record total time and write `<sub>/<command>_manifest.json`.
    pub fn finish(mut self, sub: &str) -> Result<RunManifest> {
        self.manifest
            .timings_secs
            .insert("total".into(), self.started.elapsed().as_secs_f64());
        self.manifest.outputs.sort();
        let path = self.dir(sub)?.join(format!("{}_manifest.json", self.manifest.command));
        write_json(&path, &self.manifest)?;
        Ok(self.manifest)
    }
}

pub(crate) fn dataset_path(out: &Path) -> PathBuf {
    out.join(DATASET_DIR).join("dataset.json")
}

pub(crate) fn load_dataset(out: &Path) -> Result<LabeledDataset> {
    let path = dataset_path(out);
    if !path.exists() {
        return Err(Error::InvalidInput(format!(
            "dataset artifact {} is missing; run `livelihood ingest` first",
            path.display()
        )));
    }
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let d: LabeledDataset = serde_json::from_str(&text)?;
    if d.split.is_none() {
        return Err(Error::Schema(format!(
            "{} has no train/validation split",
            path.display()
        )));
    }
    Ok(d)
}

/// Training scopes: one per country, or a single pooled scope.
pub(crate) fn scopes(cfg: &RunConfig, d: &LabeledDataset) -> Result<Vec<(String, LabeledDataset)>> {
    let per_country: Vec<(String, LabeledDataset)> = d
        .countries()
        .into_iter()
        .map(|c| {
            let sub = d.filter_country(&c);
            (c, sub)
        })
        .collect();
    if !cfg.pooled {
        return Ok(per_country);
    }
    let refs: Vec<&LabeledDataset> = per_country.iter().map(|(_, s)| s).collect();
    let opts = PoolOptions {
        fraction: cfg.pool_fraction,
        seed: cfg.seed,
        keep_partial_indicators: false,
    };
    let (pooled, _) = pool_datasets(&refs, opts)?;
    Ok(vec![("pooled".to_string(), pooled)])
}

/// Configured indicators present in `d`, or all of them.
pub(crate) fn indicators(cfg: &RunConfig, d: &LabeledDataset) -> Vec<String> {
    let have = d.indicators(None);
    if cfg.indicators.is_empty() {
        have
    } else {
        cfg.indicators.iter().filter(|k| have.contains(k)).cloned().collect()
    }
}

/// Rows of `part` carrying `indicator`, optionally restricted to one country.
pub(crate) fn labeled_rows(d: &LabeledDataset, part: Part, indicator: &str, country: Option<&str>) -> Vec<usize> {
    d.part_indices(part)
        .into_iter()
        .filter(|&r| {
            let c = &d.clusters[r];
            c.targets.contains_key(indicator) && country.is_none_or(|k| c.country == k)
        })
        .collect()
}

pub(crate) fn targets(d: &LabeledDataset, rows: &[usize], indicator: &str, task: Task) -> Vec<f64> {
    rows.iter()
        .map(|&r| target_value(d, r, indicator, task).expect("rows carry the indicator"))
        .collect()
}

pub(crate) fn checkpoint_path(out: &Path, scope: &str, model: &str, indicator: &str, task: Task) -> PathBuf {
    out.join(CHECKPOINT_DIR)
        .join(format!("{scope}__{model}__{indicator}__{task}.json"))
}

/// Graph construction shared by GCN training and inference. The distance
/// scale is taken from the whole dataset so every scope uses the same one.
pub(crate) fn graph_config(cfg: &RunConfig, d: &LabeledDataset) -> Result<GraphConfig> {
    let d_max = match cfg.gcn_dmax_km {
        Some(v) => v,
        None => compute_global_dmax(d)?,
    };
    let mut g = GraphConfig::new(cfg.gcn_n_max, d_max, cfg.seed)?;
    g.per_cluster_dmax = cfg.gcn_per_cluster_dmax;
    Ok(g)
}

pub(crate) fn build_graphs(
    d: &LabeledDataset,
    rows: &[usize],
    g: &GraphConfig,
    mode: NodeFeatureMode,
    model: &GcnModel,
) -> Result<Vec<ClusterGraph>> {
    rows.iter()
        .map(|&r| build_cluster_graph(d, &d.clusters[r], g, mode, model.standardizer.as_ref()))
        .collect()
}

/// Fit one of the cluster-feature models. kNN and the MLP see standardized
/// features; the tree ensembles see raw ones.
pub(crate) fn fit_shallow(
    cfg: &RunConfig,
    name: &str,
    d: &LabeledDataset,
    train: &[usize],
    val: &[usize],
    indicator: &str,
    task: Task,
) -> Result<FittedModel> {
    let x = cluster_feature_matrix(d, train)?;
    let y = targets(d, train, indicator, task);
    let scaled = matches!(name, "knn" | "mlp");
    let (standardizer, xs) = if scaled {
        let (s, xs) = standardize_features(&x)?;
        (Some(s), xs)
    } else {
        (None, x)
    };
    let model = match name {
        "random_forest" => ShallowModel::Rf(fit_random_forest(&xs, &y, task, &cfg.forest())?),
        "gbdt" => ShallowModel::Gbdt(fit_gbdt(&xs, &y, task, &cfg.gbdt())?),
        "knn" => ShallowModel::Knn(fit_knn(&xs, &y, task, cfg.knn_k.min(xs.nrows()))?),
        "mlp" => {
            let s = standardizer.as_ref().expect("mlp inputs are standardized");
            let xv = s.transform(&cluster_feature_matrix(d, val)?)?;
            let yv = targets(d, val, indicator, task);
            let early = (!val.is_empty()).then_some((&xv, yv.as_slice()));
            ShallowModel::Mlp(fit_mlp(&xs, &y, task, early, &cfg.mlp())?.0)
        }
        other => return Err(Error::Config(format!("'{other}' is not a cluster-feature model"))),
    };
    Ok(FittedModel {
        model,
        standardizer,
        indicator: indicator.to_string(),
        feature_names: d.taxonomy.feature_names(),
    })
}

/// A checkpoint loaded for inference.
#[allow(clippy::large_enum_variant)]
pub(crate) enum LoadedModel {
    Shallow(FittedModel),
    Gcn {
        model: GcnModel,
        graph: GraphConfig,
        mode: NodeFeatureMode,
    },
}

impl LoadedModel {
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::InvalidInput(format!(
                "checkpoint {} is missing; run `livelihood train` first",
                path.display()
            )));
        }
        let ckpt = load_checkpoint(path)?;
        Self::from_checkpoint(&ckpt)
    }

    fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.architecture.get("model").and_then(|v| v.as_str()) != Some("gcn") {
            return Ok(LoadedModel::Shallow(FittedModel::from_checkpoint(ckpt)?));
        }
        let field = |k: &str| {
            ckpt.extra
                .get(k)
                .cloned()
                .ok_or_else(|| Error::Schema(format!("GCN checkpoint lacks '{k}'")))
        };
        Ok(LoadedModel::Gcn {
            model: GcnModel::from_checkpoint(ckpt)?,
            graph: serde_json::from_value(field("graph")?)?,
            mode: serde_json::from_value(field("node_features")?)?,
        })
    }

    pub fn predict(&self, d: &LabeledDataset, rows: &[usize]) -> Result<Vec<f64>> {
        match self {
            LoadedModel::Shallow(m) => m.predict(&cluster_feature_matrix(d, rows)?),
            LoadedModel::Gcn { model, graph, mode } => gcn_predict(model, &build_graphs(d, rows, graph, *mode, model)?),
        }
    }
}

pub(crate) fn metric_key(parts: &[&str]) -> String {
    parts.join("__")
}
