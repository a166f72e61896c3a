//! Dense row-major `f64` tensors and the handful of differentiable ops the
//! fusion heads are built from.
//!
//! Every op is a pure function of its inputs. Ops that take part in training
//! come with an explicit `*_backward` companion that maps an upstream gradient
//! to input gradients; [`crate::gradcheck`] verifies them against central
//! differences.

use std::fmt;

use crate::error::{Error, Result};

/// Maximum supported rank.
pub const MAX_RANK: usize = 4;

/// Default epsilon for [`layer_norm`].
pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.data.len() <= 16 {
            write!(f, "Tensor{:?}{:?}", self.shape, self.data)
        } else {
            write!(f, "Tensor{:?}[{} values]", self.shape, self.data.len())
        }
    }
}

impl Tensor {
    /// Builds a tensor, checking that `data` fills `shape` exactly.
    ///
    /// Zero-length dimensions are accepted so that empty sample matrices
    /// (e.g. an empty validation split) can be represented.
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.len() > MAX_RANK {
            return Err(Error::shape(
                "Tensor::new",
                format!("rank {} not in 1..={MAX_RANK}", shape.len()),
            ));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::shape(
                "Tensor::new",
                format!("shape {shape:?} needs {numel} values, got {}", data.len()),
            ));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        assert!(!shape.is_empty() && shape.len() <= MAX_RANK, "bad rank");
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; numel],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::shape("Tensor::from_rows", "ragged rows"));
        }
        let data = rows.iter().flatten().copied().collect();
        Self::new(&[rows.len(), cols], data)
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Rows of a rank-2 tensor.
    pub fn rows(&self) -> usize {
        debug_assert_eq!(self.rank(), 2);
        self.shape[0]
    }

    /// Columns of a rank-2 tensor.
    pub fn cols(&self) -> usize {
        debug_assert_eq!(self.rank(), 2);
        self.shape[1]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn at2(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.shape[1] + j]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != self.data.len() || shape.is_empty() || shape.len() > MAX_RANK {
            return Err(Error::shape(
                "reshape",
                format!("cannot view {:?} as {shape:?}", self.shape),
            ));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Copies rows `[start, end)` of a matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> Tensor {
        let c = self.cols();
        Tensor {
            shape: vec![end - start, c],
            data: self.data[start * c..end * c].to_vec(),
        }
    }

    /// Gathers the listed rows of a matrix, in order.
    pub fn select_rows(&self, idx: &[usize]) -> Tensor {
        let c = self.cols();
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Tensor {
            shape: vec![idx.len(), c],
            data,
        }
    }

    /// Stacks matrices with equal column counts vertically.
    pub fn vstack(parts: &[&Tensor]) -> Result<Tensor> {
        let cols = parts.first().map_or(0, |t| t.cols());
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            if p.rank() != 2 || p.cols() != cols {
                return Err(Error::shape(
                    "vstack",
                    format!("expected [_, {cols}], got {:?}", p.shape),
                ));
            }
            rows += p.rows();
            data.extend_from_slice(&p.data);
        }
        Tensor::new(&[rows, cols], data)
    }

    pub fn transpose(&self) -> Tensor {
        let (r, c) = (self.rows(), self.cols());
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor {
            shape: vec![c, r],
            data: out,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|v| v * s)
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip("add", other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip("sub", other, |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Tensor) -> Result<Tensor> {
        self.zip("hadamard", other, |a, b| a * b)
    }

    /// In-place `self += alpha * other`.
    pub fn add_scaled(&mut self, other: &Tensor, alpha: f64) {
        assert_eq!(self.shape, other.shape, "add_scaled shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    fn zip(&self, op: &'static str, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", self.shape, other.shape),
            ));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn dot(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape, "dot shape mismatch");
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

fn require_matrix(op: &'static str, t: &Tensor) -> Result<()> {
    if t.rank() != 2 {
        return Err(Error::shape(op, format!("expected a matrix, got {:?}", t.shape())));
    }
    Ok(())
}

/// `C = A · B` for `A: m×k`, `B: k×n`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    require_matrix("matmul", a)?;
    require_matrix("matmul", b)?;
    let (m, k) = (a.rows(), a.cols());
    let n = b.cols();
    if b.rows() != k {
        return Err(Error::shape(
            "matmul",
            format!("{:?} x {:?}", a.shape(), b.shape()),
        ));
    }
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a.data[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (t, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b.data[t * n..(t + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Ok(Tensor {
        shape: vec![m, n],
        data: out,
    })
}

/// `Aᵀ · B` without materialising the transpose.
pub fn matmul_tn(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    require_matrix("matmul_tn", a)?;
    require_matrix("matmul_tn", b)?;
    let (k, m) = (a.rows(), a.cols());
    let n = b.cols();
    if b.rows() != k {
        return Err(Error::shape(
            "matmul_tn",
            format!("{:?}ᵀ x {:?}", a.shape(), b.shape()),
        ));
    }
    let mut out = vec![0.0; m * n];
    for t in 0..k {
        let arow = &a.data[t * m..(t + 1) * m];
        let brow = &b.data[t * n..(t + 1) * n];
        for (i, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Ok(Tensor {
        shape: vec![m, n],
        data: out,
    })
}

/// `A · Bᵀ` without materialising the transpose.
pub fn matmul_nt(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    require_matrix("matmul_nt", a)?;
    require_matrix("matmul_nt", b)?;
    let (m, k) = (a.rows(), a.cols());
    let n = b.rows();
    if b.cols() != k {
        return Err(Error::shape(
            "matmul_nt",
            format!("{:?} x {:?}ᵀ", a.shape(), b.shape()),
        ));
    }
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a.data[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b.data[j * k..(j + 1) * k];
            out[i * n + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    Ok(Tensor {
        shape: vec![m, n],
        data: out,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Relu,
    Relu6,
    HardSwish,
}

/// Logistic function, branching on sign so neither branch overflows.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn relu6(x: f64) -> f64 {
    x.clamp(0.0, 6.0)
}

pub fn hard_swish(x: f64) -> f64 {
    x * relu6(x + 3.0) / 6.0
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Relu => x.max(0.0),
            Activation::Relu6 => relu6(x),
            Activation::HardSwish => hard_swish(x),
        }
    }

    /// Derivative at `x`. Kinks take the one-sided value from the right.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Relu6 => {
                if x > 0.0 && x < 6.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::HardSwish => {
                if x <= -3.0 {
                    0.0
                } else if x >= 3.0 {
                    1.0
                } else {
                    (2.0 * x + 3.0) / 6.0
                }
            }
        }
    }
}

pub fn activation(kind: Activation, x: &Tensor) -> Tensor {
    x.map(|v| kind.apply(v))
}

pub fn activation_backward(kind: Activation, x: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    x.map(|v| kind.derivative(v)).hadamard(grad_out)
}

/// Row-wise softmax of a matrix (a vector is treated as one row).
pub fn softmax_rows(m: &Tensor) -> Tensor {
    let cols = *m.shape().last().unwrap();
    let mut out = m.clone();
    if cols == 0 {
        return out;
    }
    for row in out.data.chunks_mut(cols) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

/// Gradient through [`softmax_rows`] given its output `y`.
pub fn softmax_rows_backward(y: &Tensor, grad_y: &Tensor) -> Result<Tensor> {
    if y.shape() != grad_y.shape() {
        return Err(Error::shape(
            "softmax_rows_backward",
            format!("{:?} vs {:?}", y.shape(), grad_y.shape()),
        ));
    }
    let cols = *y.shape().last().unwrap();
    let mut out = grad_y.clone();
    if cols == 0 {
        return Ok(out);
    }
    for (orow, yrow) in out.data.chunks_mut(cols).zip(y.data.chunks(cols)) {
        let inner: f64 = orow.iter().zip(yrow).map(|(g, p)| g * p).sum();
        for (g, &p) in orow.iter_mut().zip(yrow) {
            *g = p * (*g - inner);
        }
    }
    Ok(out)
}

/// Intermediates of one layer-norm evaluation, needed by the backward pass.
#[derive(Clone, Debug)]
pub struct LayerNormCache {
    pub normalized: Vec<f64>,
    pub inv_std: f64,
}

fn check_layer_norm(x: &[f64], gain: &Tensor, bias: &Tensor) -> Result<()> {
    let d = x.len();
    if d < 2 {
        return Err(Error::DegenerateDimension {
            op: "layer_norm",
            dim: d,
            min: 2,
        });
    }
    if gain.len() != d || bias.len() != d {
        return Err(Error::shape(
            "layer_norm",
            format!(
                "input [{d}] with gain {:?} and bias {:?}",
                gain.shape(),
                bias.shape()
            ),
        ));
    }
    Ok(())
}

pub(crate) fn layer_norm_slice(
    x: &[f64],
    gain: &Tensor,
    bias: &Tensor,
    eps: f64,
) -> Result<(Vec<f64>, LayerNormCache)> {
    check_layer_norm(x, gain, bias)?;
    let d = x.len() as f64;
    let mean = x.iter().sum::<f64>() / d;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
    let inv_std = 1.0 / (var + eps).sqrt();
    let normalized: Vec<f64> = x.iter().map(|v| (v - mean) * inv_std).collect();
    let y = normalized
        .iter()
        .zip(gain.data())
        .zip(bias.data())
        .map(|((n, g), b)| g * n + b)
        .collect();
    Ok((y, LayerNormCache { normalized, inv_std }))
}

/// `gain ⊙ (x − mean) / √(var + eps) + bias` with population variance.
pub fn layer_norm(x: &Tensor, gain: &Tensor, bias: &Tensor, eps: f64) -> Result<Tensor> {
    let (y, _) = layer_norm_slice(x.data(), gain, bias, eps)?;
    Ok(Tensor::vector(y))
}

#[derive(Clone, Debug)]
pub struct LayerNormGrads {
    pub input: Vec<f64>,
    pub gain: Vec<f64>,
    pub bias: Vec<f64>,
}

pub(crate) fn layer_norm_backward_slice(
    cache: &LayerNormCache,
    gain: &Tensor,
    grad_y: &[f64],
) -> LayerNormGrads {
    let d = grad_y.len() as f64;
    let xhat = &cache.normalized;
    let dxhat: Vec<f64> = grad_y.iter().zip(gain.data()).map(|(g, w)| g * w).collect();
    let mean_dxhat = dxhat.iter().sum::<f64>() / d;
    let mean_dxhat_xhat = dxhat.iter().zip(xhat).map(|(a, b)| a * b).sum::<f64>() / d;
    let input = dxhat
        .iter()
        .zip(xhat)
        .map(|(dx, xh)| cache.inv_std * (dx - mean_dxhat - xh * mean_dxhat_xhat))
        .collect();
    let gain = grad_y.iter().zip(xhat).map(|(g, xh)| g * xh).collect();
    LayerNormGrads {
        input,
        gain,
        bias: grad_y.to_vec(),
    }
}

/// Gradients of [`layer_norm`] for an upstream gradient `grad_y`.
pub fn layer_norm_backward(
    x: &Tensor,
    gain: &Tensor,
    bias: &Tensor,
    eps: f64,
    grad_y: &Tensor,
) -> Result<LayerNormGrads> {
    let (_, cache) = layer_norm_slice(x.data(), gain, bias, eps)?;
    if grad_y.len() != x.len() {
        return Err(Error::shape(
            "layer_norm_backward",
            format!("{:?} vs {:?}", x.shape(), grad_y.shape()),
        ));
    }
    Ok(layer_norm_backward_slice(&cache, gain, grad_y.data()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
    }

    #[test]
    fn matmul_identity_and_selector() {
        let b = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(matmul(&Tensor::identity(2), &b).unwrap(), b);
        let sel = Tensor::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let col = Tensor::from_rows(&[vec![2.0], vec![5.0]]).unwrap();
        assert_eq!(matmul(&sel, &col).unwrap().data(), &[2.0]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random(&mut rng, &[3, 4]);
        let b = random(&mut rng, &[4, 2]);
        let c = matmul(&a, &b).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                let mut s = 0.0;
                for t in 0..4 {
                    s += a.at2(i, t) * b.at2(t, j);
                }
                assert_eq!(c.at2(i, j), s);
            }
        }
        assert_eq!(matmul_tn(&a.transpose(), &b).unwrap(), c);
        let cn = matmul_nt(&a, &b.transpose()).unwrap();
        for (x, y) in cn.data().iter().zip(c.data()) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let err = matmul(&Tensor::zeros(&[2, 3]), &Tensor::zeros(&[2, 3])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3] x [2, 3]"), "{msg}");
    }

    #[test]
    fn activation_reference_points() {
        assert_eq!(hard_swish(0.0), 0.0);
        assert_eq!(hard_swish(6.0), 6.0);
        assert_eq!(hard_swish(-4.0), 0.0);
        assert!((hard_swish(1.0) - 4.0 / 6.0).abs() < 1e-15);
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(relu6(7.0), 6.0);
        assert_eq!(sigmoid(-800.0), 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
        assert!(sigmoid(-40.0) > 0.0);
    }

    #[test]
    fn hard_swish_lipschitz_on_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let x: f64 = rng.random_range(-10.0..10.0);
            let d: f64 = rng.random_range(-0.5..0.5);
            assert!((hard_swish(x + d) - hard_swish(x)).abs() <= 2.5 * d.abs() + 1e-15);
        }
    }

    #[test]
    fn softmax_reference_rows() {
        let s = softmax_rows(&Tensor::from_rows(&[vec![0.0, 0.0]]).unwrap());
        assert_eq!(s.data(), &[0.5, 0.5]);
        let s = softmax_rows(&Tensor::from_rows(&[vec![1000.0, 1000.0]]).unwrap());
        assert_eq!(s.data(), &[0.5, 0.5]);
        let s = softmax_rows(&Tensor::from_rows(&[vec![0.0, 3f64.ln()]]).unwrap());
        assert!((s.data()[0] - 0.25).abs() < 1e-15);
        assert!((s.data()[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn layer_norm_reference() {
        let one = Tensor::filled(&[2], 1.0);
        let zero = Tensor::zeros(&[2]);
        let y = layer_norm(&Tensor::vector(vec![2.0, 0.0]), &one, &zero, 0.0).unwrap();
        assert_eq!(y.data(), &[1.0, -1.0]);

        let gain = Tensor::vector(vec![3.0, -2.0, 5.0]);
        let bias = Tensor::vector(vec![0.1, 0.2, 0.3]);
        let y = layer_norm(&Tensor::filled(&[3], 7.0), &gain, &bias, LAYER_NORM_EPS).unwrap();
        assert_eq!(y.data(), bias.data());
    }

    #[test]
    fn layer_norm_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(&mut rng, &[8]);
        let g = random(&mut rng, &[8]);
        let b = random(&mut rng, &[8]);
        let y = layer_norm(&x, &g, &b, 1e-5).unwrap();
        let mean = x.data().iter().sum::<f64>() / 8.0;
        let var = x.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 8.0;
        for i in 0..8 {
            let want = g.data()[i] * (x.data()[i] - mean) / (var + 1e-5).sqrt() + b.data()[i];
            assert!((y.data()[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn layer_norm_rejects_single_feature() {
        let t = Tensor::vector(vec![1.0]);
        assert!(matches!(
            layer_norm(&t, &t, &t, 1e-5),
            Err(Error::DegenerateDimension { dim: 1, .. })
        ));
    }
}
