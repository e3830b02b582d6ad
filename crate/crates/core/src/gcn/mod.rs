//! Cluster-level graph convolutional network.
//!
//! The default stack is two Graph-Conv layers of width 64, a Graph-Pool to 32
//! vertices, two Graph-Conv layers of width 32, a Graph-Pool to 8 vertices,
//! a flatten to 256 features, a dense layer of 256 and the output layer (two
//! logits or one score). The block list is configurable so that small
//! variants can be gradient-checked exhaustively.

mod layers;
mod train;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::features::Standardizer;
use crate::graph::ClusterGraph;
use crate::models::Task;
use crate::nn::{
    dense_backward, dense_forward, relu_backward, relu_forward, Checkpoint, Param, RngStream, Tensor2, TensorData,
};
use crate::{Error, Result};

pub use layers::{ConvTrace, GraphConv, GraphPool, PoolTrace};
pub use train::{gcn_predict, gcn_scores, train_gcn, EpochRecord, GcnTrainConfig, History};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "size", rename_all = "snake_case")]
pub enum Block {
    /// Graph-Conv with this output width.
    Conv(usize),
    /// Graph-Pool to this many vertices.
    Pool(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GcnArch {
    pub blocks: Vec<Block>,
    pub dense: usize,
}

impl Default for GcnArch {
    fn default() -> Self {
        GcnArch {
            blocks: vec![
                Block::Conv(64),
                Block::Conv(64),
                Block::Pool(32),
                Block::Conv(32),
                Block::Conv(32),
                Block::Pool(8),
            ],
            dense: 256,
        }
    }
}

impl GcnArch {
    pub fn validate(&self) -> Result<()> {
        if !matches!(self.blocks.last(), Some(Block::Pool(_))) {
            return Err(Error::Config("GCN block list must end with a pooling block".into()));
        }
        if self.blocks.iter().any(|b| matches!(b, Block::Conv(0) | Block::Pool(0))) || self.dense == 0 {
            return Err(Error::Config("GCN widths and pool sizes must be positive".into()));
        }
        Ok(())
    }

    /// Width of the flattened representation for node features of width `d_in`.
    pub fn flatten_width(&self, d_in: usize) -> usize {
        let mut width = d_in;
        let mut vertices = 0;
        for b in &self.blocks {
            match *b {
                Block::Conv(w) => width = w,
                Block::Pool(k) => vertices = k,
            }
        }
        width * vertices
    }
}

#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Layer {
    Conv(GraphConv),
    Pool(GraphPool),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnModel {
    pub arch: GcnArch,
    pub task: Task,
    pub indicator: String,
    pub input_dim: usize,
    pub dropout: f64,
    pub layers: Vec<Layer>,
    pub dense_w: Param,
    pub dense_b: Param,
    pub out_w: Param,
    pub out_b: Param,
    /// Node-feature standardizer fitted on training nodes, if any.
    pub standardizer: Option<Standardizer>,
}

enum Trace {
    Conv(ConvTrace),
    Pool(PoolTrace),
}

/// Forward intermediates of one graph.
pub struct GraphTrace {
    layers: Vec<Trace>,
    pooled_shape: (usize, usize),
    flat: Tensor2,
    hidden_pre: Tensor2,
    hidden: Tensor2,
}

impl GcnModel {
    pub fn new(arch: GcnArch, task: Task, indicator: &str, input_dim: usize, dropout: f64, seed: u64) -> Result<Self> {
        arch.validate()?;
        if input_dim == 0 {
            return Err(Error::Config("GCN input dimension must be positive".into()));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::Config(format!("dropout must be in [0, 1), got {dropout}")));
        }
        let mut rng = RngStream::new(seed);
        let mut width = input_dim;
        let mut layers = Vec::new();
        for b in &arch.blocks {
            match *b {
                Block::Conv(w) => {
                    layers.push(Layer::Conv(GraphConv::new(width, w, &mut rng)));
                    width = w;
                }
                Block::Pool(k) => layers.push(Layer::Pool(GraphPool::new(width, k, &mut rng))),
            }
        }
        let flat = arch.flatten_width(input_dim);
        let out = task.output_width();
        Ok(GcnModel {
            dense_w: Param::glorot(flat, arch.dense, &mut rng),
            dense_b: Param::zeros(1, arch.dense),
            out_w: Param::glorot(arch.dense, out, &mut rng),
            out_b: Param::zeros(1, out),
            arch,
            task,
            indicator: indicator.to_string(),
            input_dim,
            dropout,
            layers,
            standardizer: None,
        })
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut out = Vec::new();
        for l in &self.layers {
            match l {
                Layer::Conv(c) => {
                    out.push(&c.w);
                    out.push(&c.alpha_raw);
                }
                Layer::Pool(p) => out.push(&p.w_emb),
            }
        }
        out.extend([&self.dense_w, &self.dense_b, &self.out_w, &self.out_b]);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            match l {
                Layer::Conv(c) => {
                    out.push(&mut c.w);
                    out.push(&mut c.alpha_raw);
                }
                Layer::Pool(p) => out.push(&mut p.w_emb),
            }
        }
        out.extend([&mut self.dense_w, &mut self.dense_b, &mut self.out_w, &mut self.out_b]);
        out
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Outputs for one graph (1 x 2 logits or 1 x 1 score). `rng = None`
    /// disables dropout.
    pub fn forward(&self, g: &ClusterGraph, rng: Option<&mut RngStream>) -> Result<(Tensor2, GraphTrace)> {
        if g.feature_dim() != self.input_dim {
            return Err(Error::Shape(format!(
                "model expects node features of width {}, graph has {}",
                self.input_dim,
                g.feature_dim()
            )));
        }
        let mut rng = rng;
        let mut v = g.v.clone();
        let mut a = g.a.clone();
        let mut mask = g.mask.clone();
        let mut traces = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            match l {
                Layer::Conv(c) => {
                    let (out, t) = c.forward(&v, &a, &mask, self.dropout, rng.as_deref_mut())?;
                    v = out;
                    traces.push(Trace::Conv(t));
                }
                Layer::Pool(p) => {
                    let (v2, a2, t) = p.forward(&v, &a, &mask)?;
                    v = v2;
                    a = a2;
                    mask = vec![true; p.k()];
                    traces.push(Trace::Pool(t));
                }
            }
        }
        let pooled_shape = v.dim();
        let flat = v
            .into_shape_with_order((1, pooled_shape.0 * pooled_shape.1))
            .map_err(|e| Error::Shape(e.to_string()))?;
        let hidden_pre = dense_forward(&flat, &self.dense_w.value, &self.dense_b.value)?;
        let hidden = relu_forward(&hidden_pre);
        let out = dense_forward(&hidden, &self.out_w.value, &self.out_b.value)?;
        crate::nn::check_finite(&out, "GCN output")?;
        Ok((
            out,
            GraphTrace {
                layers: traces,
                pooled_shape,
                flat,
                hidden_pre,
                hidden,
            },
        ))
    }

    /// Backpropagate `d_out` (same shape as the output) through one graph,
    /// accumulating parameter gradients.
    pub fn backward(&mut self, t: &GraphTrace, d_out: &Tensor2) -> Result<()> {
        let g_out = dense_backward(&t.hidden, &self.out_w.value, d_out)?;
        self.out_w.grad += &g_out.dw;
        self.out_b.grad += &g_out.db;
        let d_hidden = relu_backward(&t.hidden_pre, &g_out.dx);
        let g_dense = dense_backward(&t.flat, &self.dense_w.value, &d_hidden)?;
        self.dense_w.grad += &g_dense.dw;
        self.dense_b.grad += &g_dense.db;
        let mut dv = g_dense
            .dx
            .into_shape_with_order(t.pooled_shape)
            .map_err(|e| Error::Shape(e.to_string()))?;
        let mut da: Option<Tensor2> = None;
        for (layer, trace) in self.layers.iter_mut().zip(&t.layers).rev() {
            match (layer, trace) {
                (Layer::Conv(c), Trace::Conv(tr)) => {
                    let (dv_in, da_in) = c.backward(tr, &dv);
                    dv = dv_in;
                    da = Some(match da {
                        Some(d) => d + da_in,
                        None => da_in,
                    });
                }
                (Layer::Pool(p), Trace::Pool(tr)) => {
                    let k = p.k();
                    let da_out = da.take().unwrap_or_else(|| Array2::zeros((k, k)));
                    let (dv_in, da_in) = p.backward(tr, &dv, &da_out);
                    dv = dv_in;
                    da = Some(da_in);
                }
                _ => unreachable!("trace layout follows the layer list"),
            }
        }
        Ok(())
    }

    /// Signs of every ReLU input for one graph in inference mode.
    pub fn relu_pattern(&self, g: &ClusterGraph) -> Result<Vec<bool>> {
        let (_, t) = self.forward(g, None)?;
        let mut out = Vec::new();
        for l in &t.layers {
            if let Trace::Conv(c) = l {
                out.extend(c.pre_activation().iter().map(|&z| z > 0.0));
            }
        }
        out.extend(t.hidden_pre.iter().map(|&z| z > 0.0));
        Ok(out)
    }

    /// Raw outputs for one graph in inference mode.
    pub fn output(&self, g: &ClusterGraph) -> Result<Vec<f64>> {
        Ok(self.forward(g, None)?.0.iter().copied().collect())
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ckpt = Checkpoint::new(serde_json::json!({
            "model": "gcn",
            "blocks": self.arch.blocks,
            "dense": self.arch.dense,
            "input_dim": self.input_dim,
            "dropout": self.dropout,
            "task": self.task,
            "indicator": self.indicator,
        }));
        for (i, p) in self.params().into_iter().enumerate() {
            ckpt.tensors.insert(format!("p{i:03}"), TensorData::from(&p.value));
        }
        ckpt.extra = serde_json::json!({ "standardizer": self.standardizer });
        Ok(ckpt)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        #[derive(Deserialize)]
        struct ArchBlock {
            model: String,
            blocks: Vec<Block>,
            dense: usize,
            input_dim: usize,
            dropout: f64,
            task: Task,
            indicator: String,
        }
        let a: ArchBlock = serde_json::from_value(ckpt.architecture.clone())?;
        if a.model != "gcn" {
            return Err(Error::Schema(format!(
                "checkpoint holds a '{}' model, not a GCN",
                a.model
            )));
        }
        let arch = GcnArch {
            blocks: a.blocks,
            dense: a.dense,
        };
        let mut model = GcnModel::new(arch, a.task, &a.indicator, a.input_dim, a.dropout, 0)?;
        for (i, p) in model.params_mut().into_iter().enumerate() {
            let t = ckpt.tensor(&format!("p{i:03}"))?;
            if t.dim() != p.shape() {
                return Err(Error::Schema(format!(
                    "tensor p{i:03} has shape {:?}, architecture needs {:?}",
                    t.dim(),
                    p.shape()
                )));
            }
            *p = Param::new(t);
        }
        if let Some(s) = ckpt.extra.get("standardizer") {
            model.standardizer = serde_json::from_value(s.clone())?;
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::pad_graph;
    use crate::nn::{grad_check_entries, mse, softmax_cross_entropy};

    pub(crate) fn toy_arch() -> GcnArch {
        GcnArch {
            blocks: vec![
                Block::Conv(4),
                Block::Conv(4),
                Block::Pool(3),
                Block::Conv(3),
                Block::Conv(3),
                Block::Pool(2),
            ],
            dense: 5,
        }
    }

    pub(crate) fn random_graph(n: usize, d: usize, rng: &mut RngStream) -> ClusterGraph {
        let v = Array2::from_shape_simple_fn((n, d), || rng.uniform(-1.0, 1.0));
        let mut a = Array2::eye(n);
        for j in 0..n {
            for k in j + 1..n {
                let w = rng.uniform(0.0, 1.0);
                a[[j, k]] = w;
                a[[k, j]] = w;
            }
        }
        pad_graph(&v, &a, n).unwrap()
    }

    fn set_params(model: &mut GcnModel, values: &[Tensor2]) {
        for (p, v) in model.params_mut().into_iter().zip(values) {
            p.value = v.clone();
        }
    }

    fn loss(model: &GcnModel, g: &ClusterGraph) -> f64 {
        let out = model.forward(g, None).unwrap().0;
        match model.task {
            Task::Classification => softmax_cross_entropy(&out, &[1]).unwrap().0,
            Task::Regression => mse(&out, &[0.4]).unwrap().0,
        }
    }

    fn analytic(model: &mut GcnModel, g: &ClusterGraph) -> Vec<Tensor2> {
        model.zero_grad();
        let (out, trace) = model.forward(g, None).unwrap();
        let d = match model.task {
            Task::Classification => softmax_cross_entropy(&out, &[1]).unwrap().1,
            Task::Regression => mse(&out, &[0.4]).unwrap().1,
        };
        model.backward(&trace, &d).unwrap();
        model.params().iter().map(|p| p.grad.clone()).collect()
    }

    /// Entries whose +-h perturbation leaves every ReLU on the same side; the
    /// others cross a kink where central differences are meaningless.
    fn smooth_entries(
        model: &GcnModel,
        g: &ClusterGraph,
        values: &[Tensor2],
        h: f64,
    ) -> (Vec<(usize, usize, usize)>, usize) {
        let mut entries = Vec::new();
        let mut skipped = 0;
        let mut work = values.to_vec();
        let mut m = model.clone();
        for t in 0..values.len() {
            for r in 0..values[t].nrows() {
                for c in 0..values[t].ncols() {
                    let orig = work[t][[r, c]];
                    work[t][[r, c]] = orig + h;
                    set_params(&mut m, &work);
                    let up = m.relu_pattern(g).unwrap();
                    work[t][[r, c]] = orig - h;
                    set_params(&mut m, &work);
                    let down = m.relu_pattern(g).unwrap();
                    work[t][[r, c]] = orig;
                    if up == down {
                        entries.push((t, r, c));
                    } else {
                        skipped += 1;
                    }
                }
            }
        }
        (entries, skipped)
    }

    #[test]
    fn default_architecture_shapes() {
        let arch = GcnArch::default();
        assert_eq!(arch.flatten_width(66), 256);
        let model = GcnModel::new(arch, Task::Classification, "wealth", 65, 0.5, 0).unwrap();
        assert_eq!(model.dense_w.shape(), (256, 256));
        assert_eq!(model.out_w.shape(), (256, 2));
        let reg = GcnModel::new(GcnArch::default(), Task::Regression, "wealth", 65, 0.5, 0).unwrap();
        assert_eq!(reg.out_w.shape(), (256, 1));
        let bad = GcnArch {
            blocks: vec![Block::Conv(4)],
            dense: 3,
        };
        assert!(GcnModel::new(bad, Task::Regression, "w", 3, 0.5, 0).is_err());
    }

    #[test]
    fn toy_model_full_gradient_check() {
        for seed in 0..20 {
            for task in [Task::Classification, Task::Regression] {
                let mut rng = RngStream::new(500 + seed);
                let g = random_graph(5, 3, &mut rng);
                let mut model = GcnModel::new(toy_arch(), task, "w", 3, 0.0, seed).unwrap();
                // move alphas and biases off their initial values so no unit sits on a kink
                for p in model.params_mut() {
                    if p.shape().0 == 1 {
                        p.value.mapv_inplace(|_| rng.uniform(-0.5, 0.5));
                    }
                }
                let grads = analytic(&mut model, &g);
                let values: Vec<Tensor2> = model.params().iter().map(|p| p.value.clone()).collect();
                let probe = model.clone();
                let f = |vals: &[Tensor2]| {
                    let mut m = probe.clone();
                    set_params(&mut m, vals);
                    loss(&m, &g)
                };
                let (entries, skipped) = smooth_entries(&probe, &g, &values, 1e-4);
                assert!(
                    skipped * 5 <= entries.len() + skipped,
                    "seed {seed}: {skipped} entries sit on a ReLU kink"
                );
                let check = grad_check_entries(f, &values, &grads, 1e-4, &entries);
                assert!(check.max_rel_error < 1e-3, "seed {seed} {task:?}: {check:?}");
            }
        }
    }

    #[test]
    fn default_model_sampled_gradient_check() {
        let mut rng = RngStream::new(77);
        let g = random_graph(12, 10, &mut rng);
        let mut model = GcnModel::new(GcnArch::default(), Task::Classification, "w", 10, 0.0, 3).unwrap();
        let grads = analytic(&mut model, &g);
        let values: Vec<Tensor2> = model.params().iter().map(|p| p.value.clone()).collect();
        let mut entries = Vec::new();
        let mut m = model.clone();
        for (t, v) in values.iter().enumerate() {
            for _ in 0..12 {
                let r = (rng.next_u64() % v.nrows() as u64) as usize;
                let c = (rng.next_u64() % v.ncols() as u64) as usize;
                let mut work = values.clone();
                let mut pattern = |delta: f64| {
                    work[t][[r, c]] = values[t][[r, c]] + delta;
                    set_params(&mut m, &work);
                    m.relu_pattern(&g).unwrap()
                };
                if pattern(1e-4) == pattern(-1e-4) {
                    entries.push((t, r, c));
                }
            }
        }
        assert!(entries.len() > 100, "{} smooth entries", entries.len());
        let probe = model.clone();
        let f = |vals: &[Tensor2]| {
            let mut m = probe.clone();
            set_params(&mut m, vals);
            loss(&m, &g)
        };
        let check = grad_check_entries(f, &values, &grads, 1e-4, &entries);
        assert!(check.max_rel_error < 1e-3, "{check:?}");
    }

    #[test]
    fn padding_does_not_change_outputs() {
        let mut rng = RngStream::new(8);
        let model = GcnModel::new(GcnArch::default(), Task::Classification, "w", 6, 0.5, 1).unwrap();
        for n in [1, 2, 7] {
            let g = random_graph(n, 6, &mut rng);
            let padded = pad_graph(&g.v, &g.a, 40).unwrap();
            let a = model.output(&g).unwrap();
            let b = model.output(&padded).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-6, "n = {n}: {a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn padded_rows_stay_zero_through_the_stack() {
        let mut rng = RngStream::new(9);
        let model = GcnModel::new(GcnArch::default(), Task::Classification, "w", 4, 0.5, 2).unwrap();
        let g = random_graph(3, 4, &mut rng);
        let padded = pad_graph(&g.v, &g.a, 10).unwrap();
        let mut v = padded.v.clone();
        for l in &model.layers {
            match l {
                Layer::Conv(c) => {
                    v = c
                        .forward(&v, &padded.a, &padded.mask, 0.5, Some(&mut RngStream::new(1)))
                        .unwrap()
                        .0;
                    assert!(v.rows().into_iter().skip(3).all(|r| r.iter().all(|&x| x == 0.0)));
                }
                Layer::Pool(_) => break,
            }
        }
    }

    #[test]
    fn node_permutation_invariance() {
        let mut rng = RngStream::new(10);
        let model = GcnModel::new(GcnArch::default(), Task::Regression, "w", 5, 0.5, 4).unwrap();
        let g = random_graph(6, 5, &mut rng);
        let perm = [3, 0, 5, 1, 4, 2];
        let v = Array2::from_shape_fn((6, 5), |(i, j)| g.v[[perm[i], j]]);
        let a = Array2::from_shape_fn((6, 6), |(i, j)| g.a[[perm[i], perm[j]]]);
        let permuted = pad_graph(&v, &a, 6).unwrap();
        let x = model.output(&g).unwrap()[0];
        let y = model.output(&permuted).unwrap()[0];
        assert!((x - y).abs() < 1e-6);
    }

    #[test]
    fn deterministic_and_checkpoint_roundtrip() {
        let mut rng = RngStream::new(11);
        let mut model = GcnModel::new(GcnArch::default(), Task::Classification, "wealth", 4, 0.5, 5).unwrap();
        model.standardizer = Some(Standardizer {
            mean: vec![0.0; 4],
            scale: vec![2.0; 4],
        });
        let g = random_graph(4, 4, &mut rng);
        assert_eq!(model.output(&g).unwrap(), model.output(&g).unwrap());
        let back = GcnModel::from_checkpoint(&model.to_checkpoint().unwrap()).unwrap();
        assert_eq!(back.output(&g).unwrap(), model.output(&g).unwrap());
        assert_eq!(back.standardizer, model.standardizer);
        assert!(model.output(&random_graph(4, 3, &mut rng)).is_err());
    }
}
