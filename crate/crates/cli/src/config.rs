//! Flat TOML run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use livelihood_core::dataset::{MatchMode, SynthConfig};
use livelihood_core::eval::{AblationConfig, NEIGHBOR_K};
use livelihood_core::features::NodeFeatureMode;
use livelihood_core::gcn::GcnTrainConfig;
use livelihood_core::models::{ForestConfig, GbdtConfig, MlpConfig, Task};
use livelihood_core::{Error, Result};

/// Model names accepted in `models` and `importance_model`.
pub const MODEL_NAMES: [&str; 5] = ["random_forest", "gbdt", "knn", "mlp", "gcn"];

/// Every key is optional; defaults reproduce the reference hyperparameters.
/// Relative paths are resolved against the directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,

    pub images: Option<PathBuf>,
    pub clusters: Option<PathBuf>,
    pub taxonomy: Option<PathBuf>,
    pub match_radius_km: f64,
    pub match_mode: MatchMode,
    pub train_fraction: f64,

    /// Train one model on all countries instead of one per country.
    pub pooled: bool,
    /// Share of each country's training clusters used when pooling.
    pub pool_fraction: f64,

    /// Empty means every indicator in the dataset.
    pub indicators: Vec<String>,
    pub tasks: Vec<Task>,
    pub models: Vec<String>,

    pub rf_trees: usize,
    pub rf_max_depth: Option<usize>,
    pub rf_min_leaf: usize,
    pub rf_mtry: Option<usize>,

    pub gbdt_stages: usize,
    pub gbdt_shrinkage: f64,
    pub gbdt_depth: usize,

    pub knn_k: usize,

    pub mlp_hidden: Vec<usize>,
    pub mlp_lr: f64,
    pub mlp_epochs: usize,
    pub mlp_patience: usize,
    pub mlp_batch_size: usize,

    pub gcn_lr: f64,
    pub gcn_batch_size: usize,
    pub gcn_epochs: usize,
    pub gcn_patience: usize,
    pub gcn_dropout: f64,
    pub gcn_n_max: usize,
    pub gcn_node_features: NodeFeatureMode,
    /// Fixed adjacency distance scale; the dataset-wide maximum when absent.
    pub gcn_dmax_km: Option<f64>,
    pub gcn_per_cluster_dmax: bool,

    /// Neighbor-baseline size; capped by the number of labeled neighbors.
    pub neighbor_k: usize,

    pub importance_model: String,
    pub importance_repeats: usize,
    pub tree_depth: usize,

    pub ablate_sizes: Vec<usize>,
    pub ablate_seeds: Vec<u64>,

    /// Generator settings for `synth`; its seed is replaced by `seed`.
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let ablation = AblationConfig::default();
        RunConfig {
            seed: 0,
            out_dir: PathBuf::from("out"),
            images: None,
            clusters: None,
            taxonomy: None,
            match_radius_km: 5.0,
            match_mode: MatchMode::Nearest,
            train_fraction: 0.8,
            pooled: false,
            pool_fraction: 1.0,
            indicators: Vec::new(),
            tasks: vec![Task::Classification, Task::Regression],
            models: MODEL_NAMES.iter().map(|s| s.to_string()).collect(),
            rf_trees: 300,
            rf_max_depth: None,
            rf_min_leaf: 1,
            rf_mtry: None,
            gbdt_stages: 300,
            gbdt_shrinkage: 0.1,
            gbdt_depth: 3,
            knn_k: 3,
            mlp_hidden: vec![256, 256, 256],
            mlp_lr: 1e-3,
            mlp_epochs: 100,
            mlp_patience: 10,
            mlp_batch_size: 64,
            gcn_lr: 1e-4,
            gcn_batch_size: 256,
            gcn_epochs: 100,
            gcn_patience: 10,
            gcn_dropout: 0.5,
            gcn_n_max: 200,
            gcn_node_features: NodeFeatureMode::Counts,
            gcn_dmax_km: None,
            gcn_per_cluster_dmax: false,
            neighbor_k: NEIGHBOR_K,
            importance_model: "random_forest".into(),
            importance_repeats: 10,
            tree_depth: 3,
            ablate_sizes: ablation.sizes,
            ablate_seeds: ablation.seeds,
            synth: SynthConfig::default(),
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    /// Parse a config file and resolve its relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.images, &mut cfg.clusters, &mut cfg.taxonomy]
            .into_iter()
            .flatten()
        {
            resolve(base, p);
        }
        resolve(base, &mut cfg.out_dir);
        Ok(cfg)
    }

    /// Checks shared by every command.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let valid = MODEL_NAMES.join(", ");
        for m in self.models.iter().chain(std::iter::once(&self.importance_model)) {
            if !MODEL_NAMES.contains(&m.as_str()) {
                return bad(format!("unknown model '{m}'; valid names are {valid}"));
            }
        }
        if self.models.is_empty() || self.tasks.is_empty() {
            return bad("models and tasks must not be empty".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train_fraction must be in (0, 1), got {}", self.train_fraction));
        }
        if !(self.pool_fraction > 0.0 && self.pool_fraction <= 1.0) {
            return bad(format!("pool_fraction must be in (0, 1], got {}", self.pool_fraction));
        }
        if self.knn_k == 0 || self.neighbor_k == 0 || self.importance_repeats == 0 {
            return bad("knn_k, neighbor_k and importance_repeats must be positive".into());
        }
        if self.rf_trees == 0 || self.gbdt_stages == 0 || self.mlp_epochs == 0 || self.gcn_epochs == 0 {
            return bad("tree, stage and epoch counts must be positive".into());
        }
        if self.mlp_batch_size == 0 || self.gcn_batch_size == 0 || self.gcn_n_max == 0 {
            return bad("batch sizes and gcn_n_max must be positive".into());
        }
        if !(0.0..1.0).contains(&self.gcn_dropout) {
            return bad(format!("gcn_dropout must be in [0, 1), got {}", self.gcn_dropout));
        }
        if let Some(d) = self.gcn_dmax_km {
            if !(d > 0.0 && d.is_finite()) {
                return bad(format!("gcn_dmax_km must be positive, got {d}"));
            }
        }
        self.ablation().validate()
    }

    /// Ingestion inputs, which must all be set and exist.
    pub fn inputs(&self) -> Result<(PathBuf, PathBuf, PathBuf)> {
        let get = |p: &Option<PathBuf>, key: &str| -> Result<PathBuf> {
            let p = p.clone().ok_or_else(|| Error::Config(format!("'{key}' is required")))?;
            if !p.exists() {
                return Err(Error::Config(format!("{key} file {} does not exist", p.display())));
            }
            Ok(p)
        };
        Ok((
            get(&self.images, "images")?,
            get(&self.clusters, "clusters")?,
            get(&self.taxonomy, "taxonomy")?,
        ))
    }

    /// SHA-256 of the canonical JSON form, without the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn forest(&self) -> ForestConfig {
        ForestConfig {
            n_trees: self.rf_trees,
            max_depth: self.rf_max_depth,
            min_leaf: self.rf_min_leaf,
            mtry: self.rf_mtry,
            bootstrap: true,
            seed: self.seed,
        }
    }

    pub fn gbdt(&self) -> GbdtConfig {
        GbdtConfig {
            n_stages: self.gbdt_stages,
            shrinkage: self.gbdt_shrinkage,
            tree_depth: self.gbdt_depth,
            min_leaf: 1,
            seed: self.seed,
        }
    }

    pub fn mlp(&self) -> MlpConfig {
        MlpConfig {
            hidden: self.mlp_hidden.clone(),
            lr: self.mlp_lr,
            epochs: self.mlp_epochs,
            patience: self.mlp_patience,
            batch_size: self.mlp_batch_size,
            seed: self.seed,
        }
    }

    pub fn gcn(&self) -> GcnTrainConfig {
        GcnTrainConfig {
            epochs: self.gcn_epochs,
            patience: self.gcn_patience,
            batch_size: self.gcn_batch_size,
            lr: self.gcn_lr,
            dropout: self.gcn_dropout,
            seed: self.seed,
            ..GcnTrainConfig::default()
        }
    }

    pub fn ablation(&self) -> AblationConfig {
        AblationConfig {
            sizes: self.ablate_sizes.clone(),
            seeds: self.ablate_seeds.clone(),
            mlp: self.mlp(),
        }
    }
}
