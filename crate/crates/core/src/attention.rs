//! Scaled dot-product attention: plain self-attention, cross-attention with a
//! residual connection and layer norm, and a factorized embedding lookup.
//!
//! Each forward function has a `*_backward` partner returning gradients for
//! every parameter and, on request, for the inputs.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{
    layer_norm_backward_slice, layer_norm_slice, matmul, matmul_nt, matmul_tn, softmax_rows,
    softmax_rows_backward, LayerNormCache, Tensor, LAYER_NORM_EPS,
};

/// Where the value projection reads from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ValueSource {
    /// `V = Y·Wv`: values come from the key/value sequence.
    #[default]
    KeyValue,
    /// `V = X·Wv`: values come from the query sequence. Only defined when
    /// both sequences have the same length.
    Query,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams {
    /// `d_x × d_k`
    pub wq: Tensor,
    /// `d_y × d_k`
    pub wk: Tensor,
    /// `d_y × d_v` (or `d_x × d_v` with [`ValueSource::Query`])
    pub wv: Tensor,
    pub ln_gain: Tensor,
    pub ln_bias: Tensor,
    pub value_source: ValueSource,
}

impl AttentionParams {
    pub fn new(wq: Tensor, wk: Tensor, wv: Tensor, ln_gain: Tensor, ln_bias: Tensor) -> Result<Self> {
        let p = Self {
            wq,
            wk,
            wv,
            ln_gain,
            ln_bias,
            value_source: ValueSource::KeyValue,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_value_source(mut self, source: ValueSource) -> Result<Self> {
        self.value_source = source;
        self.validate()?;
        Ok(self)
    }

    /// Uniform Xavier-style init for the projections, unit gain, zero bias.
    pub fn init(rng: &mut impl Rng, d_x: usize, d_y: usize, d_k: usize) -> Self {
        let xavier = |rng: &mut dyn rand::RngCore, r: usize, c: usize| {
            let bound = (6.0 / (r + c) as f64).sqrt();
            let data = (0..r * c).map(|_| rng.random_range(-bound..bound)).collect();
            Tensor::new(&[r, c], data).expect("shape and data agree")
        };
        Self {
            wq: xavier(rng, d_x, d_k),
            wk: xavier(rng, d_y, d_k),
            wv: xavier(rng, d_y, d_x),
            ln_gain: Tensor::filled(&[d_x], 1.0),
            ln_bias: Tensor::zeros(&[d_x]),
            value_source: ValueSource::KeyValue,
        }
    }

    pub fn d_x(&self) -> usize {
        self.wq.rows()
    }

    pub fn d_y(&self) -> usize {
        self.wk.rows()
    }

    pub fn d_k(&self) -> usize {
        self.wq.cols()
    }

    pub fn d_v(&self) -> usize {
        self.wv.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let shape_err = |detail: String| Err(Error::shape("AttentionParams", detail));
        for (name, t) in [("wq", &self.wq), ("wk", &self.wk), ("wv", &self.wv)] {
            if t.rank() != 2 {
                return shape_err(format!("{name} must be a matrix, got {:?}", t.shape()));
            }
        }
        if self.d_k() == 0 || self.wk.cols() != self.d_k() {
            return shape_err(format!(
                "wq {:?} and wk {:?} disagree on d_k",
                self.wq.shape(),
                self.wk.shape()
            ));
        }
        if self.d_v() != self.d_x() {
            return shape_err(format!(
                "d_v = {} must equal d_x = {} for the residual",
                self.d_v(),
                self.d_x()
            ));
        }
        let v_rows = match self.value_source {
            ValueSource::KeyValue => self.d_y(),
            ValueSource::Query => self.d_x(),
        };
        if self.wv.rows() != v_rows {
            return shape_err(format!(
                "wv {:?} needs {v_rows} rows for {:?} values",
                self.wv.shape(),
                self.value_source
            ));
        }
        if self.ln_gain.shape() != [self.d_v()] || self.ln_bias.shape() != [self.d_v()] {
            return shape_err(format!(
                "layer norm gain {:?} / bias {:?} must be [{}]",
                self.ln_gain.shape(),
                self.ln_bias.shape(),
                self.d_v()
            ));
        }
        Ok(())
    }
}

/// Intermediates of `softmax(Q·Kᵀ/√d_k)·V`.
#[derive(Clone, Debug)]
struct Attended {
    q: Tensor,
    k: Tensor,
    v: Tensor,
    weights: Tensor,
    mixed: Tensor,
}

struct AttendedGrads {
    wq: Tensor,
    wk: Tensor,
    wv: Tensor,
    query: Option<Tensor>,
    key_value: Option<Tensor>,
}

fn attend(
    xq: &Tensor,
    ykv: &Tensor,
    wq: &Tensor,
    wk: &Tensor,
    wv: &Tensor,
    source: ValueSource,
) -> Result<Attended> {
    let q = matmul(xq, wq)?;
    let k = matmul(ykv, wk)?;
    let v = match source {
        ValueSource::KeyValue => matmul(ykv, wv)?,
        ValueSource::Query => {
            if xq.rows() != ykv.rows() {
                return Err(Error::shape(
                    "attention",
                    format!(
                        "query-sourced values need equal lengths, got {} queries and {} keys",
                        xq.rows(),
                        ykv.rows()
                    ),
                ));
            }
            matmul(xq, wv)?
        }
    };
    let scale = 1.0 / (wq.cols() as f64).sqrt();
    let scores = matmul_nt(&q, &k)?.scale(scale);
    let weights = softmax_rows(&scores);
    let mixed = matmul(&weights, &v)?;
    Ok(Attended {
        q,
        k,
        v,
        weights,
        mixed,
    })
}

#[allow(clippy::too_many_arguments)]
fn attend_backward(
    fwd: &Attended,
    xq: &Tensor,
    ykv: &Tensor,
    wq: &Tensor,
    wk: &Tensor,
    wv: &Tensor,
    source: ValueSource,
    d_mixed: &Tensor,
    need_inputs: bool,
) -> Result<AttendedGrads> {
    let scale = 1.0 / (wq.cols() as f64).sqrt();
    let d_weights = matmul_nt(d_mixed, &fwd.v)?;
    let d_v = matmul_tn(&fwd.weights, d_mixed)?;
    let d_scores = softmax_rows_backward(&fwd.weights, &d_weights)?.scale(scale);
    let d_q = matmul(&d_scores, &fwd.k)?;
    let d_k = matmul_tn(&d_scores, &fwd.q)?;

    let g_wq = matmul_tn(xq, &d_q)?;
    let g_wk = matmul_tn(ykv, &d_k)?;
    let v_input = match source {
        ValueSource::KeyValue => ykv,
        ValueSource::Query => xq,
    };
    let g_wv = matmul_tn(v_input, &d_v)?;

    let (query, key_value) = if need_inputs {
        let mut dx = matmul_nt(&d_q, wq)?;
        let mut dy = matmul_nt(&d_k, wk)?;
        let dv_in = matmul_nt(&d_v, wv)?;
        match source {
            ValueSource::KeyValue => dy.add_scaled(&dv_in, 1.0),
            ValueSource::Query => dx.add_scaled(&dv_in, 1.0),
        }
        (Some(dx), Some(dy))
    } else {
        (None, None)
    };
    Ok(AttendedGrads {
        wq: g_wq,
        wk: g_wk,
        wv: g_wv,
        query,
        key_value,
    })
}

fn check_inputs(op: &'static str, xq: &Tensor, ykv: &Tensor, p: &AttentionParams) -> Result<()> {
    p.validate()?;
    if xq.rank() != 2 || xq.cols() != p.d_x() {
        return Err(Error::shape(
            op,
            format!("query {:?} vs wq {:?}", xq.shape(), p.wq.shape()),
        ));
    }
    if ykv.rank() != 2 || ykv.cols() != p.d_y() || ykv.rows() == 0 {
        return Err(Error::shape(
            op,
            format!("key/value {:?} vs wk {:?}", ykv.shape(), p.wk.shape()),
        ));
    }
    Ok(())
}

/// `softmax(X·Wq·(X·Wk)ᵀ/√d_k)·X·Wv` with no residual or normalisation.
/// Layer-norm parameters are ignored.
pub fn self_attention(x: &Tensor, p: &AttentionParams) -> Result<Tensor> {
    check_inputs("self_attention", x, x, p)?;
    Ok(attend(x, x, &p.wq, &p.wk, &p.wv, ValueSource::KeyValue)?.mixed)
}

/// Attention weight matrix `softmax(Q·Kᵀ/√d_k)` for the given pair of sequences.
pub fn attention_weights(xq: &Tensor, ykv: &Tensor, p: &AttentionParams) -> Result<Tensor> {
    check_inputs("attention_weights", xq, ykv, p)?;
    let q = matmul(xq, &p.wq)?;
    let k = matmul(ykv, &p.wk)?;
    Ok(softmax_rows(
        &matmul_nt(&q, &k)?.scale(1.0 / (p.d_k() as f64).sqrt()),
    ))
}

#[derive(Clone, Debug)]
pub struct SelfAttentionGrads {
    pub wq: Tensor,
    pub wk: Tensor,
    pub wv: Tensor,
    pub input: Tensor,
}

pub fn self_attention_backward(
    x: &Tensor,
    p: &AttentionParams,
    grad_out: &Tensor,
) -> Result<SelfAttentionGrads> {
    check_inputs("self_attention_backward", x, x, p)?;
    let fwd = attend(x, x, &p.wq, &p.wk, &p.wv, ValueSource::KeyValue)?;
    if grad_out.shape() != fwd.mixed.shape() {
        return Err(Error::shape(
            "self_attention_backward",
            format!("{:?} vs {:?}", grad_out.shape(), fwd.mixed.shape()),
        ));
    }
    let g = attend_backward(&fwd, x, x, &p.wq, &p.wk, &p.wv, ValueSource::KeyValue, grad_out, true)?;
    let mut input = g.query.expect("requested");
    input.add_scaled(&g.key_value.expect("requested"), 1.0);
    Ok(SelfAttentionGrads {
        wq: g.wq,
        wk: g.wk,
        wv: g.wv,
        input,
    })
}

/// Forward state of [`cross_attention_forward`], consumed by the backward pass.
#[derive(Clone, Debug)]
pub struct CrossAttentionCache {
    attended: Attended,
    norms: Vec<LayerNormCache>,
}

impl CrossAttentionCache {
    pub fn weights(&self) -> &Tensor {
        &self.attended.weights
    }
}

/// Row `i` of the output is `LayerNorm((A·V)_i + Xq_i)` with
/// `A = softmax(Xq·Wq·(Y·Wk)ᵀ/√d_k)`.
pub fn cross_attention(xq: &Tensor, ykv: &Tensor, p: &AttentionParams) -> Result<Tensor> {
    Ok(cross_attention_forward(xq, ykv, p)?.0)
}

pub fn cross_attention_forward(
    xq: &Tensor,
    ykv: &Tensor,
    p: &AttentionParams,
) -> Result<(Tensor, CrossAttentionCache)> {
    check_inputs("cross_attention", xq, ykv, p)?;
    let attended = attend(xq, ykv, &p.wq, &p.wk, &p.wv, p.value_source)?;
    let d = p.d_x();
    let mut out = Vec::with_capacity(xq.len());
    let mut norms = Vec::with_capacity(xq.rows());
    for i in 0..xq.rows() {
        let residual: Vec<f64> = attended
            .mixed
            .row(i)
            .iter()
            .zip(xq.row(i))
            .map(|(a, x)| a + x)
            .collect();
        let (y, cache) = layer_norm_slice(&residual, &p.ln_gain, &p.ln_bias, LAYER_NORM_EPS)?;
        out.extend(y);
        norms.push(cache);
    }
    Ok((
        Tensor::new(&[xq.rows(), d], out)?,
        CrossAttentionCache { attended, norms },
    ))
}

#[derive(Clone, Debug)]
pub struct AttentionGrads {
    pub wq: Tensor,
    pub wk: Tensor,
    pub wv: Tensor,
    pub ln_gain: Tensor,
    pub ln_bias: Tensor,
    /// Present when input gradients were requested.
    pub query: Option<Tensor>,
    pub key_value: Option<Tensor>,
}

pub fn cross_attention_backward(
    xq: &Tensor,
    ykv: &Tensor,
    p: &AttentionParams,
    cache: &CrossAttentionCache,
    grad_out: &Tensor,
    need_inputs: bool,
) -> Result<AttentionGrads> {
    if grad_out.shape() != xq.shape() {
        return Err(Error::shape(
            "cross_attention_backward",
            format!("{:?} vs {:?}", grad_out.shape(), xq.shape()),
        ));
    }
    let d = p.d_x();
    let mut d_residual = Vec::with_capacity(xq.len());
    let mut ln_gain = vec![0.0; d];
    let mut ln_bias = vec![0.0; d];
    for (i, norm) in cache.norms.iter().enumerate() {
        let g = layer_norm_backward_slice(norm, &p.ln_gain, grad_out.row(i));
        for j in 0..d {
            ln_gain[j] += g.gain[j];
            ln_bias[j] += g.bias[j];
        }
        d_residual.extend(g.input);
    }
    let d_residual = Tensor::new(&[xq.rows(), d], d_residual)?;
    let g = attend_backward(
        &cache.attended,
        xq,
        ykv,
        &p.wq,
        &p.wk,
        &p.wv,
        p.value_source,
        &d_residual,
        need_inputs,
    )?;
    let query = g.query.map(|mut dx| {
        dx.add_scaled(&d_residual, 1.0);
        dx
    });
    Ok(AttentionGrads {
        wq: g.wq,
        wk: g.wk,
        wv: g.wv,
        ln_gain: Tensor::vector(ln_gain),
        ln_bias: Tensor::vector(ln_bias),
        query,
        key_value: g.key_value,
    })
}

/// Low-rank word embedding: a `V × e` table followed by an `e × H` projection,
/// so `h_j = Σ_t table[w][t] · projection[t][j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorizedEmbedding {
    pub table: Tensor,
    pub projection: Tensor,
}

impl FactorizedEmbedding {
    pub fn new(table: Tensor, projection: Tensor) -> Result<Self> {
        if table.rank() != 2 || projection.rank() != 2 || table.cols() != projection.rows() {
            return Err(Error::shape(
                "FactorizedEmbedding",
                format!("table {:?} vs projection {:?}", table.shape(), projection.shape()),
            ));
        }
        if table.cols() > projection.cols() {
            return Err(Error::Parameter(format!(
                "embedding width {} exceeds hidden size {}",
                table.cols(),
                projection.cols()
            )));
        }
        Ok(Self { table, projection })
    }

    pub fn vocab(&self) -> usize {
        self.table.rows()
    }

    pub fn hidden(&self) -> usize {
        self.projection.cols()
    }

    /// `V·e + e·H`.
    pub fn parameter_count(&self) -> usize {
        self.table.len() + self.projection.len()
    }

    pub fn embed(&self, word: usize) -> Result<Tensor> {
        self.check_index(word)?;
        let row = self.table.slice_rows(word, word + 1);
        Ok(Tensor::vector(matmul(&row, &self.projection)?.into_data()))
    }

    /// Gradients for the table row of `word` and for the projection.
    pub fn backward(&self, word: usize, grad_h: &Tensor) -> Result<(Tensor, Tensor)> {
        self.check_index(word)?;
        if grad_h.len() != self.hidden() {
            return Err(Error::shape(
                "FactorizedEmbedding::backward",
                format!("gradient {:?} vs hidden {}", grad_h.shape(), self.hidden()),
            ));
        }
        let dh = Tensor::new(&[1, self.hidden()], grad_h.data().to_vec())?;
        let d_row = matmul_nt(&dh, &self.projection)?;
        let row = self.table.slice_rows(word, word + 1);
        let d_proj = matmul_tn(&row, &dh)?;
        Ok((Tensor::vector(d_row.into_data()), d_proj))
    }

    fn check_index(&self, word: usize) -> Result<()> {
        if word >= self.vocab() {
            return Err(Error::IndexOutOfRange {
                op: "factorized_embed",
                index: word,
                len: self.vocab(),
            });
        }
        Ok(())
    }
}

pub fn factorized_embed(word: usize, emb: &FactorizedEmbedding) -> Result<Tensor> {
    emb.embed(word)
}
