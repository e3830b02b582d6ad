//! Evaluation reports, DOT tree export and GeoJSON prediction maps.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{accuracy, pearson_r2, R2};
use crate::dataset::LabeledDataset;
use crate::models::{majority, Task, TreeModel, TreeNode};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub cluster_id: String,
    pub truth: f64,
    pub prediction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub true_positive: usize,
    pub true_negative: usize,
    pub false_positive: usize,
    pub false_negative: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Training scope: a country or a pooled set.
    pub scope: String,
    /// Country whose validation clusters were scored.
    pub region: String,
    pub indicator: String,
    pub task: Task,
    pub model: String,
    pub n: usize,
    pub accuracy: Option<f64>,
    pub r2: Option<R2>,
    pub confusion: Option<Confusion>,
    pub runtime_secs: f64,
    pub predictions: Vec<PredictionRow>,
}

impl EvalReport {
    /// Metrics computed from `(cluster_id, truth, prediction)` rows.
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        scope: &str,
        region: &str,
        indicator: &str,
        task: Task,
        model: &str,
        predictions: Vec<PredictionRow>,
        runtime_secs: f64,
    ) -> Result<Self> {
        let p: Vec<f64> = predictions.iter().map(|r| r.prediction).collect();
        let t: Vec<f64> = predictions.iter().map(|r| r.truth).collect();
        let (acc, r2, confusion) = match task {
            Task::Classification => {
                let mut c = Confusion::default();
                for (&pp, &tt) in p.iter().zip(&t) {
                    match (tt == 1.0, pp == 1.0) {
                        (true, true) => c.true_positive += 1,
                        (false, false) => c.true_negative += 1,
                        (false, true) => c.false_positive += 1,
                        (true, false) => c.false_negative += 1,
                    }
                }
                let acc = if p.is_empty() { None } else { Some(accuracy(&p, &t)?) };
                (acc, None, Some(c))
            }
            Task::Regression => {
                let r2 = if p.len() >= 2 { Some(pearson_r2(&p, &t)?) } else { None };
                (None, r2, None)
            }
        };
        Ok(EvalReport {
            scope: scope.into(),
            region: region.into(),
            indicator: indicator.into(),
            task,
            model: model.into(),
            n: predictions.len(),
            accuracy: acc,
            r2,
            confusion,
            runtime_secs,
            predictions,
        })
    }

    /// Headline metric: accuracy or r².
    pub fn metric(&self) -> Option<f64> {
        match self.task {
            Task::Classification => self.accuracy,
            Task::Regression => self.r2.map(|r| r.value),
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// DOT digraph with pre-order node ids `n0, n1, ...`. Edges are labeled
/// `true` (left, `<`) and `false` (right, `>=`).
pub fn export_tree_dot(tree: &TreeModel, feature_names: &[String]) -> Result<String> {
    if feature_names.len() != tree.n_features {
        return Err(Error::Shape(format!(
            "{} feature names for a tree over {} features",
            feature_names.len(),
            tree.n_features
        )));
    }
    let mut out = String::from("digraph tree {\n  node [shape=box];\n");
    let mut next = 0usize;
    write_node(&tree.root, tree.task, feature_names, &mut next, &mut out);
    out.push_str("}\n");
    Ok(out)
}

fn write_node(node: &TreeNode, task: Task, names: &[String], next: &mut usize, out: &mut String) -> usize {
    let id = *next;
    *next += 1;
    match node {
        TreeNode::Leaf { value, counts, n } => {
            let pred = match task {
                Task::Classification => format!("class {}", majority(counts)),
                Task::Regression => format!("value {value}"),
            };
            let _ = writeln!(out, "  n{id} [label=\"{pred}\\nn = {n}\"];");
        }
        TreeNode::Split {
            feature,
            threshold,
            n,
            left,
            right,
        } => {
            let _ = writeln!(
                out,
                "  n{id} [label=\"{} < {threshold}\\nn = {n}\"];",
                escape(&names[*feature])
            );
            let l = write_node(left, task, names, next, out);
            let _ = writeln!(out, "  n{id} -> n{l} [label=\"true\"];");
            let r = write_node(right, task, names, next, out);
            let _ = writeln!(out, "  n{id} -> n{r} [label=\"false\"];");
        }
    }
    id
}

/// Outcome category of a binary prediction.
pub fn outcome(truth: f64, prediction: f64) -> &'static str {
    match (truth == 1.0, prediction == 1.0) {
        (false, true) => "false_positive",
        (true, false) => "false_negative",
        _ => "correct",
    }
}

/// FeatureCollection of Points (lon, lat) at cluster centers.
pub fn export_predictions_geojson(report: &EvalReport, dataset: &LabeledDataset) -> Result<Value> {
    let features = report
        .predictions
        .iter()
        .map(|row| {
            let c = dataset
                .cluster(&row.cluster_id)
                .ok_or_else(|| Error::InvalidInput(format!("cluster {} is not in the dataset", row.cluster_id)))?;
            let mut props = json!({
                "cluster_id": row.cluster_id,
                "country": c.country,
                "truth": row.truth,
                "prediction": row.prediction,
            });
            if report.task == Task::Classification {
                props["outcome"] = json!(outcome(row.truth, row.prediction));
            }
            Ok(json!({
                "type": "Feature",
                "geometry": { "type": "Point", "coordinates": [c.center.lon(), c.center.lat()] },
                "properties": props,
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(json!({
        "type": "FeatureCollection",
        "properties": {
            "indicator": report.indicator,
            "model": report.model,
            "task": report.task,
        },
        "features": features,
    }))
}
