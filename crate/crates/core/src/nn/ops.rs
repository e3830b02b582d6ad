use ndarray::{Array2, Axis};

use super::{RngStream, Tensor2};
use crate::{Error, Result};

fn shape_err(what: &str, a: &Tensor2, b: &Tensor2) -> Error {
    Error::Shape(format!(
        "{what}: {}x{} vs {}x{}",
        a.nrows(),
        a.ncols(),
        b.nrows(),
        b.ncols()
    ))
}

pub fn matmul(a: &Tensor2, b: &Tensor2) -> Result<Tensor2> {
    if a.ncols() != b.nrows() {
        return Err(shape_err("matmul", a, b));
    }
    Ok(a.dot(b))
}

/// `Y = X W + b`, with `b` a single row broadcast over the batch.
pub fn dense_forward(x: &Tensor2, w: &Tensor2, b: &Tensor2) -> Result<Tensor2> {
    if b.nrows() != 1 || b.ncols() != w.ncols() {
        return Err(shape_err("dense bias", w, b));
    }
    Ok(matmul(x, w)? + b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub dx: Tensor2,
    pub dw: Tensor2,
    pub db: Tensor2,
}

pub fn dense_backward(x: &Tensor2, w: &Tensor2, dy: &Tensor2) -> Result<DenseGrads> {
    if dy.nrows() != x.nrows() || dy.ncols() != w.ncols() {
        return Err(shape_err("dense upstream gradient", dy, w));
    }
    Ok(DenseGrads {
        dx: matmul(dy, &w.t().to_owned())?,
        dw: x.t().dot(dy),
        db: dy.sum_axis(Axis(0)).insert_axis(Axis(0)),
    })
}

pub fn relu_forward(x: &Tensor2) -> Tensor2 {
    x.mapv(|v| v.max(0.0))
}

/// Gradient through ReLU given its input; zero at the kink.
pub fn relu_backward(x: &Tensor2, dy: &Tensor2) -> Tensor2 {
    let mut out = dy.clone();
    out.zip_mut_with(x, |g, &v| {
        if v <= 0.0 {
            *g = 0.0;
        }
    });
    out
}

/// Inverted dropout. Returns the output and, in training with `p > 0`, the
/// scale mask (`0` or `1 / (1 - p)`) needed by the backward pass.
pub fn dropout_forward(x: &Tensor2, p: f64, rng: &mut RngStream, training: bool) -> Result<(Tensor2, Option<Tensor2>)> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Config(format!("dropout rate must be in [0, 1), got {p}")));
    }
    if !training || p == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep = 1.0 / (1.0 - p);
    let mask = Array2::from_shape_simple_fn(x.raw_dim(), || if rng.next_f64() < p { 0.0 } else { keep });
    Ok((x * &mask, Some(mask)))
}

pub fn dropout_backward(dy: &Tensor2, mask: Option<&Tensor2>) -> Tensor2 {
    match mask {
        Some(m) => dy * m,
        None => dy.clone(),
    }
}

/// Numerically stable row-wise softmax.
pub fn softmax_rows(x: &Tensor2) -> Tensor2 {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Mean softmax cross-entropy and its gradient `(softmax - onehot) / n`.
pub fn softmax_cross_entropy(logits: &Tensor2, labels: &[u8]) -> Result<(f64, Tensor2)> {
    let n = logits.nrows();
    if labels.len() != n || n == 0 {
        return Err(Error::Shape(format!("{} labels for {n} logit rows", labels.len())));
    }
    let probs = softmax_rows(logits);
    let mut loss = 0.0;
    let mut grad = probs.clone();
    for (i, &y) in labels.iter().enumerate() {
        let y = usize::from(y);
        if y >= logits.ncols() {
            return Err(Error::InvalidInput(format!(
                "label {y} out of range for {} classes",
                logits.ncols()
            )));
        }
        let row = logits.row(i);
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[y];
        grad[[i, y]] -= 1.0;
    }
    grad /= n as f64;
    Ok((loss / n as f64, grad))
}

/// Mean squared error of a single-column prediction and its gradient.
pub fn mse(pred: &Tensor2, target: &[f64]) -> Result<(f64, Tensor2)> {
    let n = pred.nrows();
    if pred.ncols() != 1 || target.len() != n || n == 0 {
        return Err(Error::Shape(format!(
            "mse expects an n x 1 prediction with n targets, got {}x{} and {}",
            n,
            pred.ncols(),
            target.len()
        )));
    }
    let mut grad = pred.clone();
    let mut loss = 0.0;
    for (g, &t) in grad.iter_mut().zip(target) {
        let d = *g - t;
        loss += d * d;
        *g = 2.0 * d / n as f64;
    }
    Ok((loss / n as f64, grad))
}
