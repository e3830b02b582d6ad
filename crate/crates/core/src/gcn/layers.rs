//! Graph-Conv and Graph-Embed-Pool for a single (possibly padded) graph.

use ndarray::{Array1, Array2};

use crate::nn::{dropout_backward, dropout_forward, matmul, relu_backward, relu_forward, Param, RngStream, Tensor2};
use crate::{Error, Result};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn mask_matrix(mask: &[bool]) -> Tensor2 {
    Array2::from_diag(&Array1::from_iter(mask.iter().map(|&m| f64::from(u8::from(m)))))
}

/// Adjacency with padded rows and columns zeroed, and the masked identity.
fn masked(a: &Tensor2, mask: &[bool]) -> (Tensor2, Tensor2) {
    let mut a_m = a.clone();
    for (j, mut row) in a_m.rows_mut().into_iter().enumerate() {
        for (k, x) in row.iter_mut().enumerate() {
            if !(mask[j] && mask[k]) {
                *x = 0.0;
            }
        }
    }
    (a_m, mask_matrix(mask))
}

fn check_graph(v: &Tensor2, a: &Tensor2, mask: &[bool]) -> Result<()> {
    let n = v.nrows();
    if a.dim() != (n, n) || mask.len() != n {
        return Err(Error::Shape(format!(
            "graph with {n} node rows, adjacency {}x{}, mask {}",
            a.nrows(),
            a.ncols(),
            mask.len()
        )));
    }
    Ok(())
}

/// `Dropout(ReLU(H V W))` with `H = alpha A + (1 - alpha) I` on real nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphConv {
    pub w: Param,
    /// `alpha = sigmoid(alpha_raw)`, kept as a 1x1 parameter.
    pub alpha_raw: Param,
}

#[derive(Debug, Clone)]
pub struct ConvTrace {
    v: Tensor2,
    a_minus_i: Tensor2,
    mask: Vec<bool>,
    h: Tensor2,
    p: Tensor2,
    z: Tensor2,
    drop: Option<Tensor2>,
}

impl ConvTrace {
    /// Input of the ReLU.
    pub fn pre_activation(&self) -> &Tensor2 {
        &self.z
    }
}

/// Initial `alpha_raw`; `sigmoid(-6) ~ 0.0025`, so training starts near `H = I`.
pub const ALPHA_RAW_INIT: f64 = -6.0;

impl GraphConv {
    pub fn new(d_in: usize, d_out: usize, rng: &mut RngStream) -> Self {
        GraphConv {
            w: Param::glorot(d_in, d_out, rng),
            alpha_raw: Param::new(ndarray::Array2::from_elem((1, 1), ALPHA_RAW_INIT)),
        }
    }

    pub fn alpha(&self) -> f64 {
        sigmoid(self.alpha_raw.value[[0, 0]])
    }

    /// Filter `H` restricted to the masked nodes.
    pub fn filter(&self, a: &Tensor2, mask: &[bool]) -> Tensor2 {
        let (a_m, i_m) = masked(a, mask);
        let alpha = self.alpha();
        a_m * alpha + i_m * (1.0 - alpha)
    }

    /// `rng = None` is inference mode (no dropout).
    pub fn forward(
        &self,
        v: &Tensor2,
        a: &Tensor2,
        mask: &[bool],
        dropout: f64,
        rng: Option<&mut RngStream>,
    ) -> Result<(Tensor2, ConvTrace)> {
        check_graph(v, a, mask)?;
        let (a_m, i_m) = masked(a, mask);
        let alpha = self.alpha();
        let h = &a_m * alpha + &i_m * (1.0 - alpha);
        let p = matmul(&h, v)?;
        let z = matmul(&p, &self.w.value)?;
        let r = relu_forward(&z);
        let (out, drop) = match rng {
            Some(rng) => dropout_forward(&r, dropout, rng, true)?,
            None => (r, None),
        };
        let a_minus_i = a_m - i_m;
        Ok((
            out,
            ConvTrace {
                v: v.clone(),
                a_minus_i,
                mask: mask.to_vec(),
                h,
                p,
                z,
                drop,
            },
        ))
    }

    /// Accumulate parameter gradients; returns `(dV, dA)`.
    pub fn backward(&mut self, t: &ConvTrace, d_out: &Tensor2) -> (Tensor2, Tensor2) {
        let dr = dropout_backward(d_out, t.drop.as_ref());
        let dz = relu_backward(&t.z, &dr);
        self.w.grad += &t.p.t().dot(&dz);
        let dp = dz.dot(&self.w.value.t());
        let dv = t.h.t().dot(&dp);
        let dh = dp.dot(&t.v.t());
        let alpha = self.alpha();
        let d_alpha = (&dh * &t.a_minus_i).sum();
        self.alpha_raw.grad[[0, 0]] += d_alpha * alpha * (1.0 - alpha);
        // only real entries of A reach H
        let mut da = dh * alpha;
        for (j, mut row) in da.rows_mut().into_iter().enumerate() {
            for (k, g) in row.iter_mut().enumerate() {
                if !(t.mask[j] && t.mask[k]) {
                    *g = 0.0;
                }
            }
        }
        (dv, da)
    }
}

/// Soft assignment of nodes to `k` vertices: `E = softmax(V W_emb)` over real
/// rows, `V' = E^T V`, `A' = E^T A E`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphPool {
    pub w_emb: Param,
}

#[derive(Debug, Clone)]
pub struct PoolTrace {
    v: Tensor2,
    a: Tensor2,
    e: Tensor2,
    mask: Vec<bool>,
}

impl GraphPool {
    pub fn new(d: usize, k: usize, rng: &mut RngStream) -> Self {
        GraphPool {
            w_emb: Param::glorot(d, k, rng),
        }
    }

    pub fn k(&self) -> usize {
        self.w_emb.value.ncols()
    }

    /// Assignment matrix: each column is a softmax over the real nodes, so
    /// every pooled vertex is a convex combination of them. Padded rows are 0.
    pub fn assignment(&self, v: &Tensor2, mask: &[bool]) -> Result<Tensor2> {
        let mut e = matmul(v, &self.w_emb.value)?;
        for mut col in e.columns_mut() {
            let max = col
                .iter()
                .zip(mask)
                .filter(|(_, &m)| m)
                .fold(f64::NEG_INFINITY, |a, (&b, _)| a.max(b));
            let mut s = 0.0;
            for (x, &m) in col.iter_mut().zip(mask) {
                *x = if m { (*x - max).exp() } else { 0.0 };
                s += *x;
            }
            col.mapv_inplace(|x| x / s);
        }
        Ok(e)
    }

    pub fn forward(&self, v: &Tensor2, a: &Tensor2, mask: &[bool]) -> Result<(Tensor2, Tensor2, PoolTrace)> {
        check_graph(v, a, mask)?;
        if !mask.iter().any(|&m| m) {
            return Err(Error::InvalidInput(
                "graph pooling over a graph with no real nodes".into(),
            ));
        }
        let e = self.assignment(v, mask)?;
        let v_out = e.t().dot(v);
        let a_out = e.t().dot(&a.dot(&e));
        Ok((
            v_out,
            a_out,
            PoolTrace {
                v: v.clone(),
                a: a.clone(),
                e,
                mask: mask.to_vec(),
            },
        ))
    }

    /// Accumulate the embedding gradient; returns `(dV, dA)`.
    pub fn backward(&mut self, t: &PoolTrace, dv_out: &Tensor2, da_out: &Tensor2) -> (Tensor2, Tensor2) {
        let e = &t.e;
        let de = t.v.dot(&dv_out.t()) + t.a.dot(e).dot(&da_out.t()) + t.a.t().dot(e).dot(da_out);
        let mut dv = e.dot(dv_out);
        let da = e.dot(da_out).dot(&e.t());
        let mut ds = Array2::zeros(e.raw_dim());
        for k in 0..e.ncols() {
            let ec = e.column(k);
            let dc = de.column(k);
            let inner: f64 = ec
                .iter()
                .zip(dc.iter())
                .zip(&t.mask)
                .filter(|(_, &m)| m)
                .map(|((a, b), _)| a * b)
                .sum();
            for (j, &m) in t.mask.iter().enumerate() {
                if m {
                    ds[[j, k]] = ec[j] * (dc[j] - inner);
                }
            }
        }
        self.w_emb.grad += &t.v.t().dot(&ds);
        dv += &ds.dot(&self.w_emb.value.t());
        (dv, da)
    }
}
