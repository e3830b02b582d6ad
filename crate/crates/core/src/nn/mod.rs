//! Small differentiable toolkit: dense layers, activations, dropout, losses,
//! Adam and a finite-difference gradient checker.
//!
//! Layers are plain functions with explicit backward passes. Callers keep
//! whatever forward intermediates they need and accumulate parameter
//! gradients into [`Param::grad`].

mod adam;
mod checkpoint;
mod grad_check;
mod ops;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use adam::Adam;
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use grad_check::{grad_check, grad_check_entries, relative_error, GradCheck};
pub use ops::{
    dense_backward, dense_forward, dropout_backward, dropout_forward, matmul, mse, relu_backward, relu_forward,
    softmax_cross_entropy, softmax_rows, DenseGrads,
};

/// Dense row-major matrix of reals.
pub type Tensor2 = Array2<f64>;

/// Fail on NaN or infinite entries.
pub fn check_finite(t: &Tensor2, what: &str) -> Result<()> {
    if t.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// Shape plus row-major values, as stored in checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorData {
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

impl From<&Tensor2> for TensorData {
    fn from(t: &Tensor2) -> Self {
        TensorData {
            shape: [t.nrows(), t.ncols()],
            data: t.iter().copied().collect(),
        }
    }
}

impl TryFrom<TensorData> for Tensor2 {
    type Error = Error;

    fn try_from(t: TensorData) -> Result<Self> {
        let [r, c] = t.shape;
        let out = Array2::from_shape_vec((r, c), t.data)
            .map_err(|e| Error::Shape(format!("tensor of shape {r}x{c}: {e}")))?;
        check_finite(&out, "checkpoint tensor")?;
        Ok(out)
    }
}

/// Trainable tensor with its gradient and Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Tensor2,
    pub grad: Tensor2,
    pub m: Tensor2,
    pub v: Tensor2,
    pub step: u64,
}

impl Param {
    pub fn new(value: Tensor2) -> Self {
        let shape = value.raw_dim();
        Param {
            value,
            grad: Array2::zeros(shape),
            m: Array2::zeros(shape),
            v: Array2::zeros(shape),
            step: 0,
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Param::new(Array2::zeros((rows, cols)))
    }

    /// Glorot-uniform initialization in `±sqrt(6 / (rows + cols))`.
    pub fn glorot(rows: usize, cols: usize, rng: &mut RngStream) -> Self {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        Param::new(Array2::from_shape_simple_fn((rows, cols), || {
            rng.uniform(-limit, limit)
        }))
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.dim()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

impl Serialize for Param {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TensorData::from(&self.value).serialize(s)
    }
}

/// Only the value is stored; optimizer state starts fresh.
impl<'de> Deserialize<'de> for Param {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let t = TensorData::deserialize(d)?;
        Tensor2::try_from(t).map(Param::new).map_err(serde::de::Error::custom)
    }
}

/// Seeded, platform-independent random stream (ChaCha8).
#[derive(Debug, Clone)]
pub struct RngStream {
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent sub-stream for a numbered purpose.
    pub fn fork(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RngStream { rng }
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.rng.random::<f64>()
    }

    pub fn next_f64(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.random::<u64>()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        use rand::seq::SliceRandom;
        items.shuffle(&mut self.rng);
    }

    pub fn inner(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}
