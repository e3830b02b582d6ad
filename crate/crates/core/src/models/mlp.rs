use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::tree::{check_width, check_xy, class_labels};
use super::Task;
use crate::eval::{accuracy, pearson_r2};
use crate::gcn::{EpochRecord, History};
use crate::nn::{
    dense_backward, dense_forward, mse, relu_backward, relu_forward, softmax_cross_entropy, softmax_rows, Adam, Param,
    RngStream, Tensor2,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: vec![256, 256, 256],
            lr: 1e-3,
            epochs: 100,
            patience: 10,
            batch_size: 64,
            seed: 0,
        }
    }
}

/// Dense layers; ReLU after every layer but the last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub task: Task,
    pub weights: Vec<Param>,
    pub biases: Vec<Param>,
}

impl MlpModel {
    pub fn new(task: Task, input_dim: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        if input_dim == 0 || hidden.contains(&0) {
            return Err(Error::Config("MLP layer widths must be positive".into()));
        }
        let mut rng = RngStream::fork(seed, 0);
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(task.output_width());
        let weights = dims.windows(2).map(|w| Param::glorot(w[0], w[1], &mut rng)).collect();
        let biases = dims[1..].iter().map(|&d| Param::zeros(1, d)).collect();
        Ok(MlpModel { task, weights, biases })
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].shape().0
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.weights.iter_mut().chain(self.biases.iter_mut())
    }

    /// Output plus the pre-activations of every layer.
    fn forward_trace(&self, x: &Tensor2) -> Result<(Tensor2, Vec<Tensor2>, Vec<Tensor2>)> {
        let mut inputs = Vec::with_capacity(self.weights.len());
        let mut pre = Vec::with_capacity(self.weights.len());
        let mut h = x.clone();
        let last = self.weights.len() - 1;
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z = dense_forward(&h, &w.value, &b.value)?;
            inputs.push(h);
            h = if i < last { relu_forward(&z) } else { z.clone() };
            pre.push(z);
        }
        Ok((h, inputs, pre))
    }

    fn backward(&mut self, inputs: &[Tensor2], pre: &[Tensor2], d_out: &Tensor2) -> Result<()> {
        let last = self.weights.len() - 1;
        let mut dy = d_out.clone();
        for i in (0..=last).rev() {
            if i < last {
                dy = relu_backward(&pre[i], &dy);
            }
            let g = dense_backward(&inputs[i], &self.weights[i].value, &dy)?;
            self.weights[i].grad += &g.dw;
            self.biases[i].grad += &g.db;
            dy = g.dx;
        }
        Ok(())
    }

    /// Raw network outputs, one row per input row.
    pub fn outputs(&self, x: &Array2<f64>) -> Result<Tensor2> {
        check_width(x, self.input_dim())?;
        Ok(self.forward_trace(x)?.0)
    }

    /// Class-1 probability or regression output.
    pub fn scores(&self, x: &Array2<f64>) -> Result<Vec<f64>> {
        let o = self.outputs(x)?;
        Ok(match self.task {
            Task::Classification => softmax_rows(&o).column(1).to_vec(),
            Task::Regression => o.column(0).to_vec(),
        })
    }

    /// Argmax (ties to class 0) or regression output.
    pub fn predict(&self, x: &Array2<f64>) -> Result<Vec<f64>> {
        let o = self.outputs(x)?;
        Ok(match self.task {
            Task::Classification => o.rows().into_iter().map(|r| f64::from(u8::from(r[1] > r[0]))).collect(),
            Task::Regression => o.column(0).to_vec(),
        })
    }
}

fn metric(task: Task, p: &[f64], y: &[f64]) -> Result<f64> {
    match task {
        Task::Classification => accuracy(p, y),
        Task::Regression => Ok(pearson_r2(p, y)?.value),
    }
}

/// Adam mini-batch training; returns the best-validation (or best-loss) weights.
pub fn fit_mlp(
    x: &Array2<f64>,
    y: &[f64],
    task: Task,
    val: Option<(&Array2<f64>, &[f64])>,
    cfg: &MlpConfig,
) -> Result<(MlpModel, History)> {
    check_xy(x, y, 1)?;
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::Config("batch_size and epochs must be positive".into()));
    }
    if !(cfg.lr >= 0.0 && cfg.lr.is_finite()) {
        return Err(Error::Config(format!("learning rate must be >= 0, got {}", cfg.lr)));
    }
    let labels: Vec<u8> = match task {
        Task::Classification => class_labels(y)?.into_iter().map(|l| l as u8).collect(),
        Task::Regression => Vec::new(),
    };
    let mut model = MlpModel::new(task, x.ncols(), &cfg.hidden, cfg.seed)?;
    let adam = Adam::new(cfg.lr);
    let mut order_rng = RngStream::fork(cfg.seed, 1);
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    let mut history = History::default();
    let mut best: Option<(f64, MlpModel)> = None;
    let mut since_best = 0;
    for epoch in 0..cfg.epochs {
        order_rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let xb = x.select(Axis(0), batch);
            let (out, inputs, pre) = model.forward_trace(&xb)?;
            let (loss, grad) = match task {
                Task::Classification => {
                    let yb: Vec<u8> = batch.iter().map(|&i| labels[i]).collect();
                    softmax_cross_entropy(&out, &yb)?
                }
                Task::Regression => {
                    let yb: Vec<f64> = batch.iter().map(|&i| y[i]).collect();
                    mse(&out, &yb)?
                }
            };
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("MLP training loss at epoch {epoch}")));
            }
            loss_sum += loss * batch.len() as f64;
            model.params_mut().for_each(Param::zero_grad);
            model.backward(&inputs, &pre, &grad)?;
            adam.step(model.params_mut());
        }
        let train_loss = loss_sum / x.nrows() as f64;
        let val_metric = match val {
            Some((vx, vy)) if vx.nrows() > 0 => Some(metric(task, &model.predict(vx)?, vy)?),
            _ => None,
        };
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            train_metric: None,
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
