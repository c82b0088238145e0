use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};
use crate::workload::{Activation, NormKind};

/// Default epsilon of the normalization kernel.
pub const NORM_EPS: f64 = 1e-5;

/// Activation applied inside the fused feed-forward kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Act {
    Gelu,
    Silu,
    Relu,
    Identity,
}

impl From<Activation> for Act {
    fn from(a: Activation) -> Self {
        match a {
            Activation::GELU => Act::Gelu,
            Activation::SiLU => Act::Silu,
            Activation::ReLU => Act::Relu,
        }
    }
}

impl Act {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            // tanh approximation
            Act::Gelu => {
                let c = (2.0 / std::f64::consts::PI).sqrt();
                0.5 * x * (1.0 + (c * (x + 0.044715 * x * x * x)).tanh())
            }
            Act::Silu => x / (1.0 + (-x).exp()),
            Act::Relu => x.max(0.0),
            Act::Identity => x,
        }
    }
}

/// Shapes `(rows, cols)` of tensors a fused kernel produced internally and
/// never handed back to memory.
pub type Intermediates = Vec<(usize, usize)>;

pub fn intermediate_bytes(shapes: &Intermediates, element_size: usize) -> u64 {
    shapes
        .iter()
        .map(|(r, c)| (r * c * element_size) as u64)
        .sum()
}

fn project(x: &Matrix, w: &Matrix, b: &Matrix) -> Result<(Matrix, Matrix)> {
    let xw = x.matmul(w)?;
    let out = xw.add_row(b)?;
    Ok((xw, out))
}

/// `Q = X Wq + bq`, `Kt = (X Wk + bk)^T`, `V = X Wv + bv`.
pub fn fused_qkv_proj(
    x: &Matrix,
    wq: &Matrix,
    bq: &Matrix,
    wk: &Matrix,
    bk: &Matrix,
    wv: &Matrix,
    bv: &Matrix,
) -> Result<(Matrix, Matrix, Matrix)> {
    fused_qkv_proj_traced(x, wq, bq, wk, bk, wv, bv).map(|(q, k, v, _)| (q, k, v))
}

#[allow(clippy::type_complexity)]
pub fn fused_qkv_proj_traced(
    x: &Matrix,
    wq: &Matrix,
    bq: &Matrix,
    wk: &Matrix,
    bk: &Matrix,
    wv: &Matrix,
    bv: &Matrix,
) -> Result<(Matrix, Matrix, Matrix, Intermediates)> {
    let (xq, q) = project(x, wq, bq)?;
    let (xk, k) = project(x, wk, bk)?;
    let (xv, v) = project(x, wv, bv)?;
    let inter = [&xq, &xk, &xv]
        .iter()
        .map(|m| (m.rows(), m.cols()))
        .collect();
    Ok((q, k.transpose(), v, inter))
}

/// Running statistics of the streaming softmax.
#[derive(Debug, Clone)]
pub struct SoftmaxState {
    pub running_max: Vec<f64>,
    pub running_sum: Vec<f64>,
    pub accumulator: Matrix,
}

impl SoftmaxState {
    pub fn new(rows: usize, value_cols: usize) -> Self {
        SoftmaxState {
            running_max: vec![f64::NEG_INFINITY; rows],
            running_sum: vec![0.0; rows],
            accumulator: Matrix::zeros(rows, value_cols),
        }
    }

    /// Folds one tile of already-scaled scores (`rows x t`) and the matching
    /// value rows (`t x value_cols`) into the state.
    pub fn update(&mut self, scores: &Matrix, values: &Matrix) -> Result<()> {
        if scores.rows() != self.running_max.len()
            || scores.cols() != values.rows()
            || values.cols() != self.accumulator.cols()
        {
            return Err(Error::Shape("softmax tile does not match state".into()));
        }
        for i in 0..scores.rows() {
            let s = scores.row(i);
            let tile_max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let m_new = self.running_max[i].max(tile_max);
            let correction = (self.running_max[i] - m_new).exp();
            let correction = if correction.is_nan() { 0.0 } else { correction };
            let acc = self.accumulator.row_mut(i);
            for a in acc.iter_mut() {
                *a *= correction;
            }
            let mut sum = self.running_sum[i] * correction;
            for (j, &sj) in s.iter().enumerate() {
                let p = (sj - m_new).exp();
                sum += p;
                for (a, v) in acc.iter_mut().zip(values.row(j)) {
                    *a += p * v;
                }
            }
            if !(sum.is_finite() && m_new.is_finite()) || acc.iter().any(|a| !a.is_finite()) {
                return Err(Error::NonFinite("fused_attn_stream"));
            }
            self.running_max[i] = m_new;
            self.running_sum[i] = sum;
        }
        Ok(())
    }

    pub fn finish(self) -> Matrix {
        let mut out = self.accumulator;
        for (i, s) in self.running_sum.iter().enumerate() {
            for a in out.row_mut(i) {
                *a /= s;
            }
        }
        out
    }
}

fn check_attn(q: &Matrix, kt: &Matrix, v: &Matrix, tile: usize) -> Result<()> {
    if tile == 0 {
        return Err(Error::Shape("tile size must be at least 1".into()));
    }
    if kt.cols() == 0 {
        return Err(Error::Shape("empty context".into()));
    }
    if q.cols() != kt.rows() || kt.cols() != v.rows() {
        return Err(Error::Shape(format!(
            "attention shapes Q {}x{}, Kt {}x{}, V {}x{}",
            q.rows(),
            q.cols(),
            kt.rows(),
            kt.cols(),
            v.rows(),
            v.cols()
        )));
    }
    Ok(())
}

/// `softmax(s Q Kt) V`, one key/value tile at a time with online rescaling.
pub fn fused_attn_stream(
    q: &Matrix,
    kt: &Matrix,
    v: &Matrix,
    scale: f64,
    tile: usize,
) -> Result<Matrix> {
    check_attn(q, kt, v, tile)?;
    let tiles: Vec<usize> = (0..kt.cols().div_ceil(tile)).collect();
    fused_attn_stream_ordered(q, kt, v, scale, tile, &tiles)
}

/// Same as [`fused_attn_stream`] but visits tiles in the given order.
pub fn fused_attn_stream_ordered(
    q: &Matrix,
    kt: &Matrix,
    v: &Matrix,
    scale: f64,
    tile: usize,
    order: &[usize],
) -> Result<Matrix> {
    check_attn(q, kt, v, tile)?;
    let n_tiles = kt.cols().div_ceil(tile);
    let mut seen = vec![false; n_tiles];
    for &t in order {
        if t >= n_tiles || std::mem::replace(&mut seen[t], true) {
            return Err(Error::Shape(format!(
                "tile order must be a permutation of 0..{n_tiles}"
            )));
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::Shape(format!(
            "tile order must be a permutation of 0..{n_tiles}"
        )));
    }
    let mut state = SoftmaxState::new(q.rows(), v.cols());
    for &t in order {
        let start = t * tile;
        let end = (start + tile).min(kt.cols());
        let scores = q.matmul(&kt.cols_range(start, end))?.map(|x| x * scale);
        state.update(&scores, &v.rows_range(start, end))?;
    }
    Ok(state.finish())
}

/// `act(X W1 + b1) W2 + b2`.
pub fn fused_ffn_act(
    x: &Matrix,
    w1: &Matrix,
    b1: &Matrix,
    w2: &Matrix,
    b2: &Matrix,
    act: Act,
) -> Result<Matrix> {
    fused_ffn_act_traced(x, w1, b1, w2, b2, act).map(|(o, _)| o)
}

pub fn fused_ffn_act_traced(
    x: &Matrix,
    w1: &Matrix,
    b1: &Matrix,
    w2: &Matrix,
    b2: &Matrix,
    act: Act,
) -> Result<(Matrix, Intermediates)> {
    let (xw1, h) = project(x, w1, b1)?;
    let a = h.map(|v| act.apply(v));
    let (aw2, out) = project(&a, w2, b2)?;
    let inter = [&xw1, &h, &a, &aw2]
        .iter()
        .map(|m| (m.rows(), m.cols()))
        .collect();
    if !out.is_finite() {
        return Err(Error::NonFinite("fused_ffn_act"));
    }
    Ok((out, inter))
}

/// Layer normalization of every row with the default epsilon.
pub fn fused_norm(x: &Matrix, g: &Matrix, b: &Matrix) -> Result<Matrix> {
    fused_norm_with(x, g, b, NormKind::LayerNorm, NORM_EPS)
}

/// Row normalization followed by scale `g` and shift `b` (both `1 x cols`).
/// `RMSNorm` skips the mean subtraction.
pub fn fused_norm_with(
    x: &Matrix,
    g: &Matrix,
    b: &Matrix,
    kind: NormKind,
    eps: f64,
) -> Result<Matrix> {
    let n = x.cols();
    if n < 2 {
        return Err(Error::Shape(format!(
            "normalization needs rows of length >= 2, got {n}"
        )));
    }
    for (name, p) in [("scale", g), ("shift", b)] {
        if p.rows() != 1 || p.cols() != n {
            return Err(Error::Shape(format!(
                "{name} must be 1x{n}, got {}x{}",
                p.rows(),
                p.cols()
            )));
        }
    }
    let mut out = Matrix::zeros(x.rows(), n);
    for i in 0..x.rows() {
        let row = x.row(i);
        let mean = match kind {
            NormKind::LayerNorm => row.iter().sum::<f64>() / n as f64,
            NormKind::RMSNorm => 0.0,
        };
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let inv = 1.0 / (var + eps).sqrt();
        for (j, o) in out.row_mut(i).iter_mut().enumerate() {
            *o = (row[j] - mean) * inv * g.data()[j] + b.data()[j];
        }
    }
    if !out.is_finite() {
        return Err(Error::NonFinite("fused_norm"));
    }
    Ok(out)
}
