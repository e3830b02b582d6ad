//! Mini-batch Adam training with early stopping, and prediction.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{GcnArch, GcnModel};
use crate::eval::{accuracy, pearson_r2};
use crate::graph::ClusterGraph;
use crate::models::Task;
use crate::nn::{mse, softmax_cross_entropy, softmax_rows, Adam, RngStream};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GcnTrainConfig {
    pub arch: GcnArch,
    pub epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub dropout: f64,
    pub seed: u64,
    /// Also evaluate the training metric after every epoch.
    pub track_train_metric: bool,
}

impl Default for GcnTrainConfig {
    fn default() -> Self {
        GcnTrainConfig {
            arch: GcnArch::default(),
            epochs: 100,
            patience: 10,
            batch_size: 256,
            lr: 1e-4,
            dropout: 0.5,
            seed: 0,
            track_train_metric: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_metric: Option<f64>,
    /// Accuracy (classification) or squared Pearson correlation (regression).
    pub val_metric: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

fn metric(task: Task, preds: &[f64], truth: &[f64]) -> Result<f64> {
    match task {
        Task::Classification => accuracy(preds, truth),
        Task::Regression => Ok(pearson_r2(preds, truth)?.value),
    }
}

/// Drop padding; outputs are unchanged by it and the work shrinks.
fn trimmed(graphs: &[ClusterGraph]) -> Vec<ClusterGraph> {
    graphs
        .iter()
        .map(|g| if g.n_real == g.n_max() { g.clone() } else { g.unpadded() })
        .collect()
}

/// Train a GCN. Targets are labels in {0, 1} for classification and scores
/// for regression. With a validation set, the weights of the best validation
/// epoch are returned; otherwise the best training-loss epoch.
pub fn train_gcn(
    train: &[ClusterGraph],
    y_train: &[f64],
    val: Option<(&[ClusterGraph], &[f64])>,
    task: Task,
    indicator: &str,
    cfg: &GcnTrainConfig,
) -> Result<(GcnModel, History)> {
    if train.is_empty() {
        return Err(Error::InvalidInput("GCN training needs at least one graph".into()));
    }
    if y_train.len() != train.len() {
        return Err(Error::Shape(format!(
            "{} targets for {} graphs",
            y_train.len(),
            train.len()
        )));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::Config("batch_size and epochs must be positive".into()));
    }
    if !(cfg.lr >= 0.0 && cfg.lr.is_finite()) {
        return Err(Error::Config(format!("learning rate must be >= 0, got {}", cfg.lr)));
    }
    let labels: Vec<u8> = match task {
        Task::Classification => y_train
            .iter()
            .map(|&y| match y {
                0.0 => Ok(0),
                1.0 => Ok(1),
                other => Err(Error::InvalidInput(format!(
                    "classification target {other} is not 0 or 1"
                ))),
            })
            .collect::<Result<_>>()?,
        Task::Regression => Vec::new(),
    };
    let train = trimmed(train);
    let val = val.map(|(g, y)| (trimmed(g), y));
    let input_dim = train[0].feature_dim();
    let mut model = GcnModel::new(cfg.arch.clone(), task, indicator, input_dim, cfg.dropout, cfg.seed)?;
    let adam = Adam::new(cfg.lr);
    let mut order_rng = RngStream::fork(cfg.seed, 1);
    let mut drop_rng = RngStream::fork(cfg.seed, 2);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = History::default();
    let mut best: Option<(f64, GcnModel)> = None;
    let mut since_best = 0;

    for epoch in 0..cfg.epochs {
        order_rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            model.zero_grad();
            let mut outputs = Array2::zeros((batch.len(), task.output_width()));
            let mut traces = Vec::with_capacity(batch.len());
            for (row, &i) in batch.iter().enumerate() {
                let (out, trace) = model.forward(&train[i], Some(&mut drop_rng))?;
                outputs.row_mut(row).assign(&out.row(0));
                traces.push(trace);
            }
            let (loss, grad) = match task {
                Task::Classification => {
                    let y: Vec<u8> = batch.iter().map(|&i| labels[i]).collect();
                    softmax_cross_entropy(&outputs, &y)?
                }
                Task::Regression => {
                    let y: Vec<f64> = batch.iter().map(|&i| y_train[i]).collect();
                    mse(&outputs, &y)?
                }
            };
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("GCN training loss at epoch {epoch}")));
            }
            loss_sum += loss * batch.len() as f64;
            for (row, trace) in traces.iter().enumerate() {
                let g = grad.row(row).insert_axis(ndarray::Axis(0)).to_owned();
                model.backward(trace, &g)?;
            }
            adam.step(model.params_mut());
        }
        let train_loss = loss_sum / train.len() as f64;
        let train_metric = if cfg.track_train_metric {
            Some(metric(task, &gcn_predict(&model, &train)?, y_train)?)
        } else {
            None
        };
        let val_metric = match &val {
            Some((g, y)) if !g.is_empty() => Some(metric(task, &gcn_predict(&model, g)?, y)?),
            _ => None,
        };
        log::debug!("gcn epoch {epoch}: loss {train_loss:.5} val {val_metric:?}");
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            train_metric,
            val_metric,
        });
        let score = val_metric.unwrap_or(-train_loss);
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, model.clone()));
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                history.stopped_early = true;
                break;
            }
        }
    }
    let (_, model) = best.expect("at least one epoch ran");
    Ok((model, history))
}

/// Predicted labels (argmax, ties to class 0) or raw regression scores.
pub fn gcn_predict(model: &GcnModel, graphs: &[ClusterGraph]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(graphs.len());
    let mut out_of_range = 0;
    for g in graphs {
        let o = model.output(g)?;
        out.push(match model.task {
            Task::Classification => f64::from(u8::from(o[1] > o[0])),
            Task::Regression => {
                if !(-1.0..=1.0).contains(&o[0]) {
                    out_of_range += 1;
                }
                o[0]
            }
        });
    }
    if out_of_range > 0 {
        log::warn!("{out_of_range} regression predictions fall outside [-1, 1]");
    }
    Ok(out)
}

/// Class-1 probabilities (classification) or scores (regression).
pub fn gcn_scores(model: &GcnModel, graphs: &[ClusterGraph]) -> Result<Vec<f64>> {
    graphs
        .iter()
        .map(|g| {
            let (o, _) = model.forward(g, None)?;
            Ok(match model.task {
                Task::Classification => softmax_rows(&o)[[0, 1]],
                Task::Regression => o[[0, 0]],
            })
        })
        .collect()
}
