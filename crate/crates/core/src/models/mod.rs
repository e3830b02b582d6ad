//! Cluster-level models over aggregated count features.

mod forest;
mod gbdt;
mod knn;
mod mlp;
mod tree;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::features::Standardizer;
use crate::nn::Checkpoint;
use crate::{Error, Result};

pub use forest::{default_mtry, fit_random_forest, ForestConfig, ForestModel};
pub use gbdt::{fit_gbdt, GbdtConfig, GbdtModel};
pub use knn::{fit_knn, KnnModel};
pub use mlp::{fit_mlp, MlpConfig, MlpModel};
pub use tree::{fit_cart, majority, TreeModel, TreeNode, TreeParams};

/// Anything that maps a raw feature matrix to per-row predictions.
pub trait Predictor {
    fn task(&self) -> Task;
    /// Class labels in {0, 1} or regression values.
    fn predict(&self, x: &Array2<f64>) -> Result<Vec<f64>>;
}

/// One of the fitted cluster-level models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ShallowModel {
    Tree(TreeModel),
    Rf(ForestModel),
    Gbdt(GbdtModel),
    Knn(KnnModel),
    Mlp(MlpModel),
}

impl ShallowModel {
    pub fn name(&self) -> &'static str {
        match self {
            ShallowModel::Tree(_) => "tree",
            ShallowModel::Rf(_) => "rf",
            ShallowModel::Gbdt(_) => "gbdt",
            ShallowModel::Knn(_) => "knn",
            ShallowModel::Mlp(_) => "mlp",
        }
    }

    pub fn task(&self) -> Task {
        match self {
            ShallowModel::Tree(m) => m.task,
            ShallowModel::Rf(m) => m.task,
            ShallowModel::Gbdt(m) => m.task,
            ShallowModel::Knn(m) => m.task,
            ShallowModel::Mlp(m) => m.task,
        }
    }
}

/// A shallow model plus the input standardization it was trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub model: ShallowModel,
    pub standardizer: Option<Standardizer>,
    pub indicator: String,
    pub feature_names: Vec<String>,
}

impl FittedModel {
    fn prepare(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        match &self.standardizer {
            Some(s) => s.transform(x),
            None => Ok(x.clone()),
        }
    }

    /// Class-1 probability (or vote share) for classification, value for regression.
    pub fn scores(&self, x: &Array2<f64>) -> Result<Vec<f64>> {
        let x = self.prepare(x)?;
        match &self.model {
            ShallowModel::Tree(m) => Ok(x.rows().into_iter().map(|r| m.root.leaf_value(r)).collect()),
            ShallowModel::Rf(m) => m.scores(&x),
            ShallowModel::Gbdt(m) => m.scores(&x),
            ShallowModel::Knn(m) => m.scores(&x),
            ShallowModel::Mlp(m) => m.scores(&x),
        }
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ckpt = Checkpoint::new(serde_json::json!({
            "model": self.model.name(),
            "task": self.model.task(),
            "indicator": self.indicator,
            "features": self.feature_names,
        }));
        ckpt.extra = serde_json::to_value(self)?;
        Ok(ckpt)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let name = ckpt.architecture.get("model").and_then(|v| v.as_str()).unwrap_or("");
        let m: FittedModel = serde_json::from_value(ckpt.extra.clone())
            .map_err(|e| Error::Schema(format!("checkpoint for '{name}' does not hold a shallow model: {e}")))?;
        if m.model.name() != name {
            return Err(Error::Schema(format!(
                "architecture says '{name}', payload holds '{}'",
                m.model.name()
            )));
        }
        Ok(m)
    }
}

impl Predictor for FittedModel {
    fn task(&self) -> Task {
        self.model.task()
    }

    fn predict(&self, x: &Array2<f64>) -> Result<Vec<f64>> {
        let x = self.prepare(x)?;
        match &self.model {
            ShallowModel::Tree(m) => m.predict(&x),
            ShallowModel::Rf(m) => m.predict(&x),
            ShallowModel::Gbdt(m) => m.predict(&x),
            ShallowModel::Knn(m) => m.predict(&x),
            ShallowModel::Mlp(m) => m.predict(&x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Regression,
}

impl Task {
    /// Width of the network output layer.
    pub fn output_width(self) -> usize {
        match self {
            Task::Classification => 2,
            Task::Regression => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Classification => "classification",
            Task::Regression => "regression",
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classification" => Ok(Task::Classification),
            "regression" => Ok(Task::Regression),
            other => Err(Error::Config(format!("unknown task '{other}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn checkpoint_roundtrip_preserves_predictions() {
        let x = array![[0.0, 1.0], [1.0, 3.0], [2.0, 2.0], [3.0, 0.5]];
        let y = [0.0, 0.0, 1.0, 1.0];
        let (std, xs) = crate::features::standardize_features(&x).unwrap();
        let models = vec![
            (
                ShallowModel::Tree(fit_cart(&x, &y, Task::Classification, TreeParams::default()).unwrap()),
                None,
            ),
            (
                ShallowModel::Rf(
                    fit_random_forest(
                        &x,
                        &y,
                        Task::Classification,
                        &ForestConfig {
                            n_trees: 5,
                            ..Default::default()
                        },
                    )
                    .unwrap(),
                ),
                None,
            ),
            (
                ShallowModel::Gbdt(
                    fit_gbdt(
                        &x,
                        &y,
                        Task::Classification,
                        &GbdtConfig {
                            n_stages: 5,
                            ..Default::default()
                        },
                    )
                    .unwrap(),
                ),
                None,
            ),
            (
                ShallowModel::Knn(fit_knn(&xs, &y, Task::Classification, 3).unwrap()),
                Some(std.clone()),
            ),
            (
                ShallowModel::Mlp(
                    fit_mlp(
                        &xs,
                        &y,
                        Task::Classification,
                        None,
                        &MlpConfig {
                            hidden: vec![4],
                            epochs: 3,
                            ..Default::default()
                        },
                    )
                    .unwrap()
                    .0,
                ),
                Some(std),
            ),
        ];
        for (model, standardizer) in models {
            let fitted = FittedModel {
                model,
                standardizer,
                indicator: "w".into(),
                feature_names: vec!["a".into(), "b".into()],
            };
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("m.json");
            crate::nn::save_checkpoint(&path, &fitted.to_checkpoint().unwrap()).unwrap();
            let back = FittedModel::from_checkpoint(&crate::nn::load_checkpoint(&path).unwrap()).unwrap();
            assert_eq!(
                back.predict(&x).unwrap(),
                fitted.predict(&x).unwrap(),
                "{}",
                fitted.model.name()
            );
            assert_eq!(back.scores(&x).unwrap(), fitted.scores(&x).unwrap());
        }
    }

    #[test]
    fn task_parse() {
        assert_eq!("regression".parse::<Task>().unwrap(), Task::Regression);
        assert!("cls".parse::<Task>().is_err());
    }
}
