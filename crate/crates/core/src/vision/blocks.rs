//! Squeeze-and-excitation and the inverted residual (expand, depthwise,
//! linear projection) block.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{sigmoid, Tensor};

use super::conv::conv2d_same;

/// Default SE reduction ratio.
pub const SE_REDUCTION: usize = 4;

/// Per-channel spatial means of an `[H, W, C]` map.
pub fn squeeze(x: &Tensor) -> Result<Vec<f64>> {
    let [h, w, c] = match *x.shape() {
        [h, w, c] => [h, w, c],
        _ => return Err(Error::shape("squeeze", format!("expected [H, W, C], got {:?}", x.shape()))),
    };
    let mut z = vec![0.0; c];
    for px in x.data().chunks(c) {
        for (zc, v) in z.iter_mut().zip(px) {
            *zc += v;
        }
    }
    let area = (h * w) as f64;
    z.iter_mut().for_each(|v| *v /= area);
    Ok(z)
}

/// Channel gates `sigmoid(relu(z·W1)·W2)` for `W1: C×C/r`, `W2: C/r×C`.
pub fn excitation(z: &[f64], w1: &Tensor, w2: &Tensor) -> Result<Vec<f64>> {
    let c = z.len();
    let hidden = if w1.rank() == 2 { w1.cols() } else { 0 };
    let ok = w1.rank() == 2
        && w2.rank() == 2
        && w1.rows() == c
        && hidden > 0
        && c.is_multiple_of(hidden)
        && w2.rows() == hidden
        && w2.cols() == c;
    if !ok {
        return Err(Error::shape(
            "se_block",
            format!(
                "{c} channels with W1 {:?} and W2 {:?} (need C×C/r and C/r×C, r dividing C)",
                w1.shape(),
                w2.shape()
            ),
        ));
    }
    let mut u = vec![0.0; hidden];
    for (ci, zc) in z.iter().enumerate() {
        for (j, uj) in u.iter_mut().enumerate() {
            *uj += zc * w1.at2(ci, j);
        }
    }
    u.iter_mut().for_each(|v| *v = v.max(0.0));
    Ok((0..c)
        .map(|ci| sigmoid((0..hidden).map(|j| u[j] * w2.at2(j, ci)).sum()))
        .collect())
}

/// Recalibrates each channel `c` of `x` by its gate `s_c`.
pub fn se_block(x: &Tensor, w1: &Tensor, w2: &Tensor) -> Result<Tensor> {
    let z = squeeze(x)?;
    let s = excitation(&z, w1, w2)?;
    let mut out = x.clone();
    for px in out.data_mut().chunks_mut(s.len()) {
        for (v, g) in px.iter_mut().zip(&s) {
            *v *= g;
        }
    }
    Ok(out)
}

/// Random SE weights for `channels` channels reduced by `reduction`.
pub fn se_weights(rng: &mut impl Rng, channels: usize, reduction: usize) -> Result<(Tensor, Tensor)> {
    if reduction == 0 || !channels.is_multiple_of(reduction) || channels / reduction == 0 {
        return Err(Error::shape(
            "se_weights",
            format!("reduction {reduction} does not divide {channels} channels"),
        ));
    }
    let hidden = channels / reduction;
    Ok((
        uniform(rng, &[channels, hidden], 1.0),
        uniform(rng, &[hidden, channels], 1.0),
    ))
}

fn uniform(rng: &mut impl Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-scale..scale)).collect())
        .expect("shape and data agree")
}

/// Weights of one inverted residual block with `C` channels and expansion `t`.
#[derive(Clone, Debug)]
pub struct InvertedResidualParams {
    /// `[1, 1, C, tC]`
    pub expand_weight: Tensor,
    /// `[tC]`
    pub expand_bias: Tensor,
    /// `[3, 3, 1, tC]`
    pub depthwise_weight: Tensor,
    /// `[1, 1, tC, C]`
    pub project_weight: Tensor,
    /// `[C]`
    pub project_bias: Tensor,
}

impl InvertedResidualParams {
    pub fn zeros(channels: usize, t: usize) -> Self {
        let e = channels * t;
        Self {
            expand_weight: Tensor::zeros(&[1, 1, channels, e]),
            expand_bias: Tensor::zeros(&[e]),
            depthwise_weight: Tensor::zeros(&[3, 3, 1, e]),
            project_weight: Tensor::zeros(&[1, 1, e, channels]),
            project_bias: Tensor::zeros(&[channels]),
        }
    }

    pub fn random(rng: &mut impl Rng, channels: usize, t: usize) -> Self {
        let e = channels * t;
        Self {
            expand_weight: uniform(rng, &[1, 1, channels, e], 0.5),
            expand_bias: uniform(rng, &[e], 0.5),
            depthwise_weight: uniform(rng, &[3, 3, 1, e], 0.5),
            project_weight: uniform(rng, &[1, 1, e, channels], 0.5),
            project_bias: uniform(rng, &[channels], 0.5),
        }
    }

    /// Width of the expanded representation.
    pub fn expanded_channels(&self) -> usize {
        self.expand_bias.len()
    }

    fn check(&self, channels: usize, t: usize) -> Result<()> {
        let e = channels * t;
        let expected: [(&str, &Tensor, Vec<usize>); 5] = [
            ("expand_weight", &self.expand_weight, vec![1, 1, channels, e]),
            ("expand_bias", &self.expand_bias, vec![e]),
            ("depthwise_weight", &self.depthwise_weight, vec![3, 3, 1, e]),
            ("project_weight", &self.project_weight, vec![1, 1, e, channels]),
            ("project_bias", &self.project_bias, vec![channels]),
        ];
        for (name, tensor, shape) in expected {
            if tensor.shape() != shape.as_slice() {
                return Err(Error::shape(
                    "inverted_residual",
                    format!("{name} is {:?}, expected {shape:?}", tensor.shape()),
                ));
            }
        }
        Ok(())
    }
}

fn add_channel_bias(x: &mut Tensor, bias: &Tensor) {
    let c = bias.len();
    for px in x.data_mut().chunks_mut(c) {
        for (v, b) in px.iter_mut().zip(bias.data()) {
            *v += b;
        }
    }
}

/// `x + project(depthwise(relu(expand(x))))` on an `[H, W, C]` map.
pub fn inverted_residual(x: &Tensor, params: &InvertedResidualParams, t: usize) -> Result<Tensor> {
    if t < 1 {
        return Err(Error::Parameter(format!("expansion factor t = {t} must be >= 1")));
    }
    let [h, w, c] = match *x.shape() {
        [h, w, c] => [h, w, c],
        _ => {
            return Err(Error::shape(
                "inverted_residual",
                format!("expected [H, W, C], got {:?}", x.shape()),
            ))
        }
    };
    if h < 3 || w < 3 {
        return Err(Error::DegenerateDimension {
            op: "inverted_residual",
            dim: h.min(w),
            min: 3,
        });
    }
    params.check(c, t)?;

    let (mut expanded, _) = conv2d_same(x, &params.expand_weight, 1)?;
    add_channel_bias(&mut expanded, &params.expand_bias);
    expanded.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    let (filtered, _) = conv2d_same(&expanded, &params.depthwise_weight, c * t)?;
    let (mut projected, _) = conv2d_same(&filtered, &params.project_weight, 1)?;
    add_channel_bias(&mut projected, &params.project_bias);
    x.add(&projected)
}
