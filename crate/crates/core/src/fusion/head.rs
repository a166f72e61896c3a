//! Trainable classification heads over frozen text and image embeddings.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::attention::AttentionParams;
use crate::error::{Error, Result};
use crate::tensor::{
    layer_norm_backward_slice, layer_norm_slice, matmul, matmul_nt, matmul_tn, softmax_rows,
    softmax_rows_backward, LayerNormCache, Tensor, LAYER_NORM_EPS,
};

use super::labels::NUM_CLASSES;

pub const TEXT_DIM: usize = 128;
pub const IMAGE_DIM: usize = 1792;
/// Default attention key width, matching the text embedding.
pub const DEFAULT_KEY_DIM: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HeadKind {
    VisionLinear,
    TextLinear,
    ConcatFcnn,
    CrossAttnFcnn,
}

impl HeadKind {
    pub const ALL: [HeadKind; 4] = [
        HeadKind::VisionLinear,
        HeadKind::TextLinear,
        HeadKind::ConcatFcnn,
        HeadKind::CrossAttnFcnn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            HeadKind::VisionLinear => "vision_linear",
            HeadKind::TextLinear => "text_linear",
            HeadKind::ConcatFcnn => "concat_fcnn",
            HeadKind::CrossAttnFcnn => "cross_attn_fcnn",
        }
    }

    /// Stable code used in model files.
    pub fn code(self) -> u32 {
        match self {
            HeadKind::VisionLinear => 0,
            HeadKind::TextLinear => 1,
            HeadKind::ConcatFcnn => 2,
            HeadKind::CrossAttnFcnn => 3,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        HeadKind::ALL
            .into_iter()
            .find(|k| k.code() == code)
            .ok_or(Error::UnknownKind(code))
    }

    /// Width of the feature vector fed to the final linear layer.
    pub fn feature_dim(self, dims: HeadDims) -> usize {
        match self {
            HeadKind::VisionLinear => dims.image,
            HeadKind::TextLinear => dims.text,
            HeadKind::ConcatFcnn => dims.text + dims.image,
            HeadKind::CrossAttnFcnn => 2 * dims.text + dims.image,
        }
    }
}

impl fmt::Display for HeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        HeadKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown head kind `{s}`")))
    }
}

/// Embedding widths a head is built for. The image embedding is split into
/// `image / text` tokens of width `text` for cross-attention.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HeadDims {
    pub text: usize,
    pub image: usize,
}

impl Default for HeadDims {
    fn default() -> Self {
        Self {
            text: TEXT_DIM,
            image: IMAGE_DIM,
        }
    }
}

impl HeadDims {
    pub fn validate(self) -> Result<()> {
        if self.text < 2 || self.image == 0 || !self.image.is_multiple_of(self.text) {
            return Err(Error::Parameter(format!(
                "embedding dims {self:?}: need text >= 2 and image a multiple of text"
            )));
        }
        Ok(())
    }

    pub fn image_tokens(self) -> usize {
        self.image / self.text
    }
}

/// Splits a flat image embedding into `len / token_dim` row-major tokens.
pub fn image_to_tokens_with(image: &[f64], token_dim: usize) -> Result<Tensor> {
    if token_dim == 0 || image.is_empty() || !image.len().is_multiple_of(token_dim) {
        return Err(Error::shape(
            "image_to_tokens",
            format!("{} values do not split into tokens of {token_dim}", image.len()),
        ));
    }
    Tensor::new(&[image.len() / token_dim, token_dim], image.to_vec())
}

/// `[1792]` image embedding → `[14, 128]` token matrix.
pub fn image_to_tokens(image: &Tensor) -> Result<Tensor> {
    if image.len() != IMAGE_DIM {
        return Err(Error::shape(
            "image_to_tokens",
            format!("expected {IMAGE_DIM} values, got {:?}", image.shape()),
        ));
    }
    image_to_tokens_with(image.data(), TEXT_DIM)
}

/// `[F_T ; F_I]`.
pub fn concat_features(text: &Tensor, image: &Tensor) -> Result<Tensor> {
    if text.len() != TEXT_DIM || image.len() != IMAGE_DIM {
        return Err(Error::shape(
            "concat_features",
            format!(
                "expected [{TEXT_DIM}] and [{IMAGE_DIM}], got {:?} and {:?}",
                text.shape(),
                image.shape()
            ),
        ));
    }
    let mut data = Vec::with_capacity(TEXT_DIM + IMAGE_DIM);
    data.extend_from_slice(text.data());
    data.extend_from_slice(image.data());
    Ok(Tensor::vector(data))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Row-wise concatenation of matrices with equal row counts.
fn hstack(parts: &[&Tensor], rows: usize, width: usize) -> Result<Tensor> {
    let mut data = Vec::with_capacity(rows * width);
    for r in 0..rows {
        for p in parts {
            data.extend_from_slice(p.row(r));
        }
    }
    Tensor::new(&[rows, width], data)
}

/// One fusion head: an optional cross-attention block followed by a linear
/// layer `logits = W·features + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionModel {
    kind: HeadKind,
    dims: HeadDims,
    /// `[18, feature_dim]`
    pub weight: Tensor,
    /// `[18]`
    pub bias: Tensor,
    pub attention: Option<AttentionParams>,
}

/// Parameter-aligned gradients, in [`FusionModel::parameters`] order.
pub type ModelGrads = Vec<Tensor>;

/// Batch forward state needed by [`FusionModel::backward`].
pub struct ForwardCache {
    features: Tensor,
    attention: Option<BatchAttention>,
}

/// Intermediates of single-query cross-attention over a batch. With one
/// query per sample, `q·(Y·Wk)ᵀ = Y·(Wk·qᵀ)` and `softmax(s)·(Y·Wv) =
/// (softmax(s)·Y)·Wv`, so every projection becomes one batch matmul.
struct BatchAttention {
    text: Tensor,
    image: Tensor,
    /// `[B, d_k]` projected queries
    q: Tensor,
    /// `[B, tokens]` attention weights
    probs: Tensor,
    /// `[B, d_t]` attention-weighted token sums
    pooled: Tensor,
    norms: Vec<LayerNormCache>,
}

impl FusionModel {
    pub fn new(kind: HeadKind, rng: &mut impl Rng) -> Self {
        Self::with_dims(kind, HeadDims::default(), DEFAULT_KEY_DIM, rng)
            .expect("default dims are valid")
    }

    /// Random init: Xavier-uniform linear layer, zero bias, and (for
    /// cross-attention) Xavier projections with unit layer-norm gain.
    pub fn with_dims(kind: HeadKind, dims: HeadDims, key_dim: usize, rng: &mut impl Rng) -> Result<Self> {
        dims.validate()?;
        if key_dim == 0 {
            return Err(Error::Parameter("attention key dim must be >= 1".into()));
        }
        let fan_in = kind.feature_dim(dims);
        let bound = (6.0 / (fan_in + NUM_CLASSES) as f64).sqrt();
        let weight = Tensor::new(
            &[NUM_CLASSES, fan_in],
            (0..NUM_CLASSES * fan_in)
                .map(|_| rng.random_range(-bound..bound))
                .collect(),
        )?;
        let attention = (kind == HeadKind::CrossAttnFcnn)
            .then(|| AttentionParams::init(rng, dims.text, dims.text, key_dim));
        Ok(Self {
            kind,
            dims,
            weight,
            bias: Tensor::zeros(&[NUM_CLASSES]),
            attention,
        })
    }

    /// Rebuilds a model from named tensors, checking every shape.
    pub fn from_parts(
        kind: HeadKind,
        dims: HeadDims,
        weight: Tensor,
        bias: Tensor,
        attention: Option<AttentionParams>,
    ) -> Result<Self> {
        dims.validate()?;
        let model = Self {
            kind,
            dims,
            weight,
            bias,
            attention,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let fan_in = self.kind.feature_dim(self.dims);
        if self.weight.shape() != [NUM_CLASSES, fan_in] || self.bias.shape() != [NUM_CLASSES] {
            return Err(Error::shape(
                "FusionModel",
                format!(
                    "{} expects weight [{NUM_CLASSES}, {fan_in}] and bias [{NUM_CLASSES}], got {:?} and {:?}",
                    self.kind,
                    self.weight.shape(),
                    self.bias.shape()
                ),
            ));
        }
        match (&self.attention, self.kind) {
            (Some(p), HeadKind::CrossAttnFcnn) => {
                p.validate()?;
                if p.d_x() != self.dims.text || p.d_y() != self.dims.text {
                    return Err(Error::shape(
                        "FusionModel",
                        format!(
                            "attention expects width {} for queries and keys, got {} and {}",
                            self.dims.text,
                            p.d_x(),
                            p.d_y()
                        ),
                    ));
                }
                Ok(())
            }
            (None, HeadKind::CrossAttnFcnn) => Err(Error::shape(
                "FusionModel",
                "cross_attn_fcnn needs attention parameters",
            )),
            (Some(_), _) => Err(Error::shape(
                "FusionModel",
                format!("{} has no attention block", self.kind),
            )),
            (None, _) => Ok(()),
        }
    }

    pub fn kind(&self) -> HeadKind {
        self.kind
    }

    pub fn dims(&self) -> HeadDims {
        self.dims
    }

    pub fn feature_dim(&self) -> usize {
        self.kind.feature_dim(self.dims)
    }

    /// Named parameters in a fixed order.
    pub fn parameters(&self) -> Vec<(&'static str, &Tensor)> {
        let mut out = vec![("fc.weight", &self.weight), ("fc.bias", &self.bias)];
        if let Some(p) = &self.attention {
            out.extend([
                ("attn.wq", &p.wq),
                ("attn.wk", &p.wk),
                ("attn.wv", &p.wv),
                ("attn.ln_gain", &p.ln_gain),
                ("attn.ln_bias", &p.ln_bias),
            ]);
        }
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.weight, &mut self.bias];
        if let Some(p) = &mut self.attention {
            out.extend([
                &mut p.wq,
                &mut p.wk,
                &mut p.wv,
                &mut p.ln_gain,
                &mut p.ln_bias,
            ]);
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|(_, t)| t.len()).sum()
    }

    /// Rounds every parameter to `f32`, the precision model files store, so a
    /// saved and reloaded model predicts exactly like this one.
    pub fn round_to_storage(mut self) -> Self {
        for t in self.parameters_mut() {
            for v in t.data_mut() {
                *v = *v as f32 as f64;
            }
        }
        self
    }

    fn check_batch(&self, text: &Tensor, image: &Tensor) -> Result<usize> {
        let ok = text.rank() == 2
            && image.rank() == 2
            && text.cols() == self.dims.text
            && image.cols() == self.dims.image
            && text.rows() == image.rows();
        if !ok {
            return Err(Error::shape(
                "head_forward",
                format!(
                    "{} head expects text [_, {}] and image [_, {}], got {:?} and {:?}",
                    self.kind,
                    self.dims.text,
                    self.dims.image,
                    text.shape(),
                    image.shape()
                ),
            ));
        }
        Ok(text.rows())
    }

    fn build_features(&self, text: &Tensor, image: &Tensor, keep: bool) -> Result<ForwardCache> {
        let n = self.check_batch(text, image)?;
        let fan_in = self.feature_dim();
        let (features, attention) = match self.kind {
            HeadKind::VisionLinear => (image.clone(), None),
            HeadKind::TextLinear => (text.clone(), None),
            HeadKind::ConcatFcnn => (hstack(&[text, image], n, fan_in)?, None),
            HeadKind::CrossAttnFcnn => {
                let p = self.attention.as_ref().expect("validated");
                let (z, att) = self.attend_batch(p, text, image)?;
                let f = hstack(&[&z, text, image], n, fan_in)?;
                (f, keep.then_some(att))
            }
        };
        Ok(ForwardCache {
            features,
            attention,
        })
    }

    /// Cross-attention of each text row (one query) over its image tokens,
    /// followed by the residual and layer norm. Returns `[B, d_t]`.
    fn attend_batch(&self, p: &AttentionParams, text: &Tensor, image: &Tensor) -> Result<(Tensor, BatchAttention)> {
        let n = text.rows();
        let dt = self.dims.text;
        let tokens = self.dims.image_tokens();
        let scale = 1.0 / (p.d_k() as f64).sqrt();
        let q = matmul(text, &p.wq)?;
        let a = matmul_nt(&q, &p.wk)?;
        let mut scores = Tensor::zeros(&[n, tokens]);
        for b in 0..n {
            let ab = a.row(b);
            let img = image.row(b);
            for (j, s) in scores.row_mut(b).iter_mut().enumerate() {
                *s = scale * dot(&img[j * dt..(j + 1) * dt], ab);
            }
        }
        let probs = softmax_rows(&scores);
        let mut pooled = Tensor::zeros(&[n, dt]);
        for b in 0..n {
            let img = image.row(b);
            let pr = probs.row(b).to_vec();
            let out = pooled.row_mut(b);
            for (j, w) in pr.iter().enumerate() {
                for (o, y) in out.iter_mut().zip(&img[j * dt..(j + 1) * dt]) {
                    *o += w * y;
                }
            }
        }
        let mixed = matmul(&pooled, &p.wv)?;
        let mut z = Vec::with_capacity(n * dt);
        let mut norms = Vec::with_capacity(n);
        for b in 0..n {
            let residual: Vec<f64> = mixed.row(b).iter().zip(text.row(b)).map(|(m, x)| m + x).collect();
            let (y, cache) = layer_norm_slice(&residual, &p.ln_gain, &p.ln_bias, LAYER_NORM_EPS)?;
            z.extend(y);
            norms.push(cache);
        }
        let att = BatchAttention {
            text: text.clone(),
            image: image.clone(),
            q,
            probs,
            pooled,
            norms,
        };
        Ok((Tensor::new(&[n, dt], z)?, att))
    }

    fn attend_batch_backward(&self, p: &AttentionParams, att: &BatchAttention, dz: &Tensor) -> Result<[Tensor; 5]> {
        let n = dz.rows();
        let dt = self.dims.text;
        let scale = 1.0 / (p.d_k() as f64).sqrt();
        let mut d_mixed = Vec::with_capacity(n * dt);
        let mut d_gain = vec![0.0; dt];
        let mut d_bias = vec![0.0; dt];
        for (b, norm) in att.norms.iter().enumerate() {
            let g = layer_norm_backward_slice(norm, &p.ln_gain, dz.row(b));
            for j in 0..dt {
                d_gain[j] += g.gain[j];
                d_bias[j] += g.bias[j];
            }
            d_mixed.extend(g.input);
        }
        let d_mixed = Tensor::new(&[n, dt], d_mixed)?;
        let d_wv = matmul_tn(&att.pooled, &d_mixed)?;
        let d_pooled = matmul_nt(&d_mixed, &p.wv)?;

        let mut d_probs = Tensor::zeros(att.probs.shape());
        for b in 0..n {
            let img = att.image.row(b);
            let dp = d_pooled.row(b).to_vec();
            for (j, v) in d_probs.row_mut(b).iter_mut().enumerate() {
                *v = dot(&img[j * dt..(j + 1) * dt], &dp);
            }
        }
        let d_scores = softmax_rows_backward(&att.probs, &d_probs)?;
        let mut d_a = Tensor::zeros(&[n, dt]);
        for b in 0..n {
            let img = att.image.row(b);
            let ds = d_scores.row(b).to_vec();
            let out = d_a.row_mut(b);
            for (j, g) in ds.iter().enumerate() {
                for (o, y) in out.iter_mut().zip(&img[j * dt..(j + 1) * dt]) {
                    *o += scale * g * y;
                }
            }
        }
        let d_wk = matmul_tn(&d_a, &att.q)?;
        let d_q = matmul(&d_a, &p.wk)?;
        let d_wq = matmul_tn(&att.text, &d_q)?;
        Ok([d_wq, d_wk, d_wv, Tensor::vector(d_gain), Tensor::vector(d_bias)])
    }

    fn linear(&self, features: &Tensor) -> Result<Tensor> {
        let mut logits = matmul_nt(features, &self.weight)?;
        for row in logits.data_mut().chunks_mut(NUM_CLASSES) {
            for (v, b) in row.iter_mut().zip(self.bias.data()) {
                *v += b;
            }
        }
        Ok(logits)
    }

    /// Logits `[B, 18]` for a batch of text `[B, d_t]` and image `[B, d_i]` rows.
    pub fn forward_batch(&self, text: &Tensor, image: &Tensor) -> Result<Tensor> {
        let cache = self.build_features(text, image, false)?;
        self.linear(&cache.features)
    }

    /// Like [`Self::forward_batch`] but keeps what [`Self::backward`] needs.
    pub fn forward_train(&self, text: &Tensor, image: &Tensor) -> Result<(Tensor, ForwardCache)> {
        let cache = self.build_features(text, image, true)?;
        let logits = self.linear(&cache.features)?;
        Ok((logits, cache))
    }

    /// Single-sample logits `[18]`.
    pub fn forward(&self, text: &Tensor, image: &Tensor) -> Result<Tensor> {
        let t = Tensor::new(&[1, text.len()], text.data().to_vec())?;
        let im = Tensor::new(&[1, image.len()], image.data().to_vec())?;
        Ok(Tensor::vector(self.forward_batch(&t, &im)?.into_data()))
    }

    /// Gradients of `Σ grad_logits ⊙ logits` with respect to every parameter.
    pub fn backward(&self, cache: &ForwardCache, grad_logits: &Tensor) -> Result<ModelGrads> {
        let n = cache.features.rows();
        if grad_logits.shape() != [n, NUM_CLASSES] {
            return Err(Error::shape(
                "FusionModel::backward",
                format!("gradient {:?} for batch of {n}", grad_logits.shape()),
            ));
        }
        let d_weight = matmul_tn(grad_logits, &cache.features)?;
        let mut d_bias = vec![0.0; NUM_CLASSES];
        for row in grad_logits.data().chunks(NUM_CLASSES) {
            for (acc, g) in d_bias.iter_mut().zip(row) {
                *acc += g;
            }
        }
        let mut grads = vec![d_weight, Tensor::vector(d_bias)];
        if let Some(p) = &self.attention {
            let att = cache.attention.as_ref().ok_or_else(|| {
                Error::shape("FusionModel::backward", "cache was built without attention state")
            })?;
            // only the attention slice of the feature gradient is needed
            let dz = matmul(grad_logits, &self.weight_columns(0, self.dims.text))?;
            grads.extend(self.attend_batch_backward(p, att, &dz)?);
        }
        Ok(grads)
    }


    /// Columns `[start, start + len)` of the weight matrix.
    fn weight_columns(&self, start: usize, len: usize) -> Tensor {
        let cols = self.weight.cols();
        let mut data = Vec::with_capacity(NUM_CLASSES * len);
        for r in 0..NUM_CLASSES {
            data.extend_from_slice(&self.weight.data()[r * cols + start..r * cols + start + len]);
        }
        Tensor::new(&[NUM_CLASSES, len], data).expect("in range")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn tokens_are_row_major() {
        let f = Tensor::vector((0..1792).map(|v| v as f64).collect());
        let t = image_to_tokens(&f).unwrap();
        assert_eq!(t.shape(), &[14, 128]);
        assert_eq!(t.row(0), &f.data()[..128]);
        assert_eq!(t.row(13), &f.data()[1664..]);
        assert_eq!(t.data(), f.data());
        assert!(image_to_tokens(&Tensor::zeros(&[1791])).is_err());
        assert!(image_to_tokens(&Tensor::zeros(&[1792])).unwrap().data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn concat_order_and_split() {
        let t = Tensor::filled(&[128], 1.0);
        let i = Tensor::filled(&[1792], 2.0);
        let f = concat_features(&t, &i).unwrap();
        assert_eq!(f.len(), 1920);
        assert_eq!(&f.data()[..128], t.data());
        assert_eq!(&f.data()[128..], i.data());
        assert!(concat_features(&i, &t).is_err());
        let z = concat_features(&Tensor::zeros(&[128]), &Tensor::zeros(&[1792])).unwrap();
        assert_eq!(z.sum(), 0.0);
    }

    #[test]
    fn feature_widths() {
        let d = HeadDims::default();
        assert_eq!(HeadKind::ConcatFcnn.feature_dim(d), 1920);
        assert_eq!(HeadKind::CrossAttnFcnn.feature_dim(d), 2048);
        for k in HeadKind::ALL {
            assert_eq!(k.name().parse::<HeadKind>().unwrap(), k);
            assert_eq!(HeadKind::from_code(k.code()).unwrap(), k);
        }
        assert!(matches!(HeadKind::from_code(9), Err(Error::UnknownKind(9))));
    }

    #[test]
    fn zero_weight_gives_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for kind in HeadKind::ALL {
            let mut m = FusionModel::new(kind, &mut rng);
            m.weight = Tensor::zeros(m.weight.shape());
            m.bias = Tensor::filled(&[18], 0.75);
            let out = m
                .forward(&random(&mut rng, &[128]), &random(&mut rng, &[1792]))
                .unwrap();
            assert!(out.data().iter().all(|v| *v == 0.75), "{kind}");
        }
    }

    #[test]
    fn concat_matches_manual_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = FusionModel::new(HeadKind::ConcatFcnn, &mut rng);
        let t = random(&mut rng, &[128]);
        let i = random(&mut rng, &[1792]);
        let f = concat_features(&t, &i).unwrap();
        let out = m.forward(&t, &i).unwrap();
        for c in 0..18 {
            let want: f64 = (0..1920).map(|j| m.weight.at2(c, j) * f.data()[j]).sum::<f64>() + m.bias.data()[c];
            assert!((out.data()[c] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn wrong_dims_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = FusionModel::new(HeadKind::TextLinear, &mut rng);
        let err = m
            .forward_batch(&Tensor::zeros(&[2, 64]), &Tensor::zeros(&[2, 1792]))
            .unwrap_err();
        assert!(matches!(err, Error::Shape { .. }));
        let mut bad = m.clone();
        bad.attention = Some(AttentionParams::init(&mut rng, 128, 128, 8));
        assert!(bad.validate().is_err());
    }

    #[test]
    fn batched_attention_matches_reference() {
        use crate::attention::cross_attention;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let dims = HeadDims { text: 6, image: 24 };
        let mut m = FusionModel::with_dims(HeadKind::CrossAttnFcnn, dims, 5, &mut rng).unwrap();
        m.attention.as_mut().unwrap().ln_bias = random(&mut rng, &[6]);
        let text = random(&mut rng, &[4, 6]);
        let image = random(&mut rng, &[4, 24]);
        let cache = m.build_features(&text, &image, false).unwrap();
        for b in 0..4 {
            let q = Tensor::new(&[1, 6], text.row(b).to_vec()).unwrap();
            let y = image_to_tokens_with(image.row(b), 6).unwrap();
            let z = cross_attention(&q, &y, m.attention.as_ref().unwrap()).unwrap();
            for (got, want) in cache.features.row(b)[..6].iter().zip(z.data()) {
                assert!((got - want).abs() < 1e-12);
            }
            assert_eq!(&cache.features.row(b)[6..12], text.row(b));
            assert_eq!(&cache.features.row(b)[12..], image.row(b));
        }
    }

    #[test]
    fn small_cross_attention_head_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let dims = HeadDims { text: 4, image: 12 };
        let mut m = FusionModel::with_dims(HeadKind::CrossAttnFcnn, dims, 3, &mut rng).unwrap();
        {
            let p = m.attention.as_mut().unwrap();
            p.ln_gain = random(&mut rng, &[4]);
            p.ln_bias = random(&mut rng, &[4]);
        }
        let text = random(&mut rng, &[3, 4]);
        let image = random(&mut rng, &[3, 12]);
        let upstream = random(&mut rng, &[3, 18]);
        let n_params = m.parameters().len();
        for idx in 0..n_params {
            let f = |w: &Tensor| {
                let mut mm = m.clone();
                *mm.parameters_mut()[idx] = w.clone();
                let (logits, cache) = mm.forward_train(&text, &image)?;
                let g = mm.backward(&cache, &upstream)?;
                Ok((logits.dot(&upstream), g[idx].clone()))
            };
            let x = m.parameters()[idx].1.clone();
            let err = grad_check(f, &x, 1e-5).unwrap();
            assert!(err < 1e-4, "{} {err}", m.parameters()[idx].0);
        }
    }
}
