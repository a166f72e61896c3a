//! Reference grouped convolution with an exact multiply counter, and the
//! channel shuffle that follows grouped convolutions.
//!
//! Feature maps are `[H, W, C]`; kernels are `[D_k, D_k, C_in / g, C_out]`.
//! Output channel `k` belongs to group `k / (C_out / g)` and only reads the
//! input channels of that group.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::cost::ConvSpec;

fn feature_dims(op: &'static str, t: &Tensor) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [h, w, c] => Ok((h, w, c)),
        _ => Err(Error::shape(
            op,
            format!("expected [H, W, C], got {:?}", t.shape()),
        )),
    }
}

/// Stride-1 convolution with zero "same" padding. Returns the output and the
/// number of scalar multiplies performed, padded taps included.
pub(crate) fn conv2d_same(input: &Tensor, kernels: &Tensor, groups: usize) -> Result<(Tensor, u64)> {
    let op = "conv2d";
    let (h, w, cin) = feature_dims(op, input)?;
    let [kh, kw, cin_g, cout] = match *kernels.shape() {
        [a, b, c, d] => [a, b, c, d],
        _ => {
            return Err(Error::shape(
                op,
                format!("kernel must be rank 4, got {:?}", kernels.shape()),
            ))
        }
    };
    if kh != kw || kh == 0 {
        return Err(Error::shape(op, format!("kernel {:?} is not square", kernels.shape())));
    }
    if groups == 0 || cin != cin_g * groups || cout % groups != 0 {
        return Err(Error::shape(
            op,
            format!(
                "input {:?} and kernel {:?} inconsistent with {groups} groups",
                input.shape(),
                kernels.shape()
            ),
        ));
    }
    let k = kh;
    let pad = (k - 1) / 2;
    let (ph, pw) = (h + k - 1, w + k - 1);
    let mut padded = vec![0.0; ph * pw * cin];
    for y in 0..h {
        for x in 0..w {
            let src = &input.data()[(y * w + x) * cin..(y * w + x + 1) * cin];
            let dst = ((y + pad) * pw + x + pad) * cin;
            padded[dst..dst + cin].copy_from_slice(src);
        }
    }

    let cout_g = cout / groups;
    let kd = kernels.data();
    let mut out = vec![0.0; h * w * cout];
    let mut macs = 0u64;
    for y in 0..h {
        for x in 0..w {
            for oc in 0..cout {
                let g = oc / cout_g;
                let mut acc = 0.0;
                for ky in 0..k {
                    for kx in 0..k {
                        let base = ((y + ky) * pw + x + kx) * cin + g * cin_g;
                        for ci in 0..cin_g {
                            acc += padded[base + ci] * kd[((ky * k + kx) * cin_g + ci) * cout + oc];
                            macs += 1;
                        }
                    }
                }
                out[(y * w + x) * cout + oc] = acc;
            }
        }
    }
    Ok((Tensor::new(&[h, w, cout], out)?, macs))
}

/// Runs the layer described by `spec` on a `[D_f, D_f, M]` input.
pub fn conv2d_forward(input: &Tensor, kernels: &Tensor, spec: &ConvSpec) -> Result<(Tensor, u64)> {
    let (h, w, c) = feature_dims("conv2d_forward", input)?;
    if h != spec.out_side || w != spec.out_side || c != spec.in_channels {
        return Err(Error::shape(
            "conv2d_forward",
            format!(
                "input {:?} does not match spec side {} with {} channels",
                input.shape(),
                spec.out_side,
                spec.in_channels
            ),
        ));
    }
    if kernels.shape() != spec.kernel_shape() {
        return Err(Error::shape(
            "conv2d_forward",
            format!(
                "kernel {:?} but spec needs {:?}",
                kernels.shape(),
                spec.kernel_shape()
            ),
        ));
    }
    conv2d_same(input, kernels, spec.groups)
}

fn shuffle_source(channels: usize, groups: usize) -> Vec<usize> {
    let n = channels / groups;
    let mut src = vec![0; channels];
    for i in 0..groups {
        for j in 0..n {
            src[i * n + j] = ((i + j) % groups) * n + j;
        }
    }
    src
}

fn permute_channels(x: &Tensor, src: &[usize]) -> Tensor {
    let c = src.len();
    let mut out = x.clone();
    for (o, i) in out.data_mut().chunks_mut(c).zip(x.data().chunks(c)) {
        for (dst, &s) in o.iter_mut().zip(src) {
            *dst = i[s];
        }
    }
    out
}

fn check_shuffle(op: &'static str, x: &Tensor, groups: usize) -> Result<usize> {
    let (_, _, c) = feature_dims(op, x)?;
    if groups == 0 || c % groups != 0 {
        return Err(Error::shape(
            op,
            format!("{c} channels not divisible into {groups} groups"),
        ));
    }
    Ok(c)
}

/// Channel `j` of output group `i` is channel `j` of input group `(i + j) mod g`.
pub fn channel_shuffle(x: &Tensor, groups: usize) -> Result<Tensor> {
    let c = check_shuffle("channel_shuffle", x, groups)?;
    Ok(permute_channels(x, &shuffle_source(c, groups)))
}

/// Undoes [`channel_shuffle`].
pub fn channel_unshuffle(x: &Tensor, groups: usize) -> Result<Tensor> {
    let c = check_shuffle("channel_unshuffle", x, groups)?;
    let src = shuffle_source(c, groups);
    let mut inverse = vec![0; c];
    for (dst, &s) in src.iter().enumerate() {
        inverse[s] = dst;
    }
    Ok(permute_channels(x, &inverse))
}
