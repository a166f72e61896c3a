//! Seeded synthetic embeddings where each modality carries half of the classes.
//!
//! Recipe, in RNG draw order (ChaCha8 seeded with `seed`):
//! 1. nine orthonormal text directions `u_0..u_8` in R^128 and nine orthonormal
//!    image directions `v_9..v_17` in R^1792 (Gaussian draws, Gram-Schmidt);
//! 2. for each sample of train, then test, then val: a label count `k` uniform
//!    in 1..=4, then `k` distinct classes uniform over the 18 slots, then
//!    `text = Σ_{c<9} u_c + noise·N(0, I)` and `image = Σ_{c≥9} v_c + noise·N(0, I)`.
//!
//! Values are rounded to `f32` so a saved dataset reloads unchanged.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fusion::{LabelVector, IMAGE_DIM, NUM_CLASSES, TEXT_DIM};
use crate::tensor::Tensor;

use super::dataset::EmbeddingDataset;

/// Classes `0..TEXT_CLASSES` live in the text embedding, the rest in the image.
pub const TEXT_CLASSES: usize = 9;
pub const MAX_LABELS: usize = 4;

fn orthonormal(rng: &mut ChaCha8Rng, count: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= d * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    basis
}

/// `Σ dirs[c]` over `active` plus `noise·N(0, I)`, rounded to `f32`.
fn embed(
    rng: &mut ChaCha8Rng,
    dirs: &[Vec<f64>],
    active: impl Iterator<Item = usize>,
    noise: f64,
    out: &mut Vec<f64>,
) {
    let mut v = vec![0.0; dirs[0].len()];
    for c in active {
        for (x, d) in v.iter_mut().zip(&dirs[c]) {
            *x += d;
        }
    }
    for x in v.iter_mut() {
        let n: f64 = rng.sample(StandardNormal);
        *x += noise * n;
    }
    out.extend(v.into_iter().map(|x| x as f32 as f64));
}

struct Generator {
    rng: ChaCha8Rng,
    text_dirs: Vec<Vec<f64>>,
    image_dirs: Vec<Vec<f64>>,
    noise: f64,
}

impl Generator {
    fn split(&mut self, prefix: &str, n: usize) -> Result<EmbeddingDataset> {
        let mut ids = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        let mut text = Vec::with_capacity(n * TEXT_DIM);
        let mut image = Vec::with_capacity(n * IMAGE_DIM);
        for i in 0..n {
            let k = self.rng.random_range(1..=MAX_LABELS);
            let chosen = sample(&mut self.rng, NUM_CLASSES, k).into_vec();
            let l = LabelVector::from_indices(&chosen)?;
            let text_classes = l.indices().filter(|&c| c < TEXT_CLASSES);
            embed(&mut self.rng, &self.text_dirs, text_classes, self.noise, &mut text);
            let image_classes = l.indices().filter(|&c| c >= TEXT_CLASSES).map(|c| c - TEXT_CLASSES);
            embed(&mut self.rng, &self.image_dirs, image_classes, self.noise, &mut image);
            ids.push(format!("{prefix}_{i:06}"));
            labels.push(l);
        }
        EmbeddingDataset::new(
            ids,
            Tensor::new(&[n, TEXT_DIM], text)?,
            Tensor::new(&[n, IMAGE_DIM], image)?,
            Some(labels),
        )
    }
}

/// Returns labelled `(train, test, val)` splits with disjoint ids.
pub fn gen_synthetic(
    seed: u64,
    n_train: usize,
    n_test: usize,
    n_val: usize,
    noise: f64,
) -> Result<(EmbeddingDataset, EmbeddingDataset, EmbeddingDataset)> {
    if n_train == 0 || n_test == 0 || n_val == 0 {
        return Err(Error::Parameter("split sizes must be >= 1".into()));
    }
    if !noise.is_finite() || noise < 0.0 {
        return Err(Error::Parameter(format!("noise must be finite and >= 0, got {noise}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let text_dirs = orthonormal(&mut rng, TEXT_CLASSES, TEXT_DIM);
    let image_dirs = orthonormal(&mut rng, NUM_CLASSES - TEXT_CLASSES, IMAGE_DIM);
    let mut g = Generator {
        rng,
        text_dirs,
        image_dirs,
        noise,
    };
    Ok((
        g.split("train", n_train)?,
        g.split("test", n_test)?,
        g.split("val", n_val)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::check_disjoint;

    #[test]
    fn deterministic_and_disjoint() {
        let a = gen_synthetic(3, 20, 5, 5, 0.3).unwrap();
        let b = gen_synthetic(3, 20, 5, 5, 0.3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.0, gen_synthetic(4, 20, 5, 5, 0.3).unwrap().0);
        check_disjoint(&[&a.0, &a.1, &a.2]).unwrap();
        assert_eq!(a.0.ids()[0], "train_000000");
        assert_eq!(a.2.ids()[4], "val_000004");
    }

    #[test]
    fn label_counts_in_range() {
        let (train, _, _) = gen_synthetic(5, 300, 1, 1, 0.0).unwrap();
        for l in train.require_labels().unwrap() {
            assert!((1..=MAX_LABELS).contains(&l.count()));
        }
    }

    #[test]
    fn noiseless_embeddings_decode_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let text_dirs = orthonormal(&mut rng, TEXT_CLASSES, TEXT_DIM);
        let (train, _, _) = gen_synthetic(11, 40, 1, 1, 0.0).unwrap();
        for (i, l) in train.require_labels().unwrap().iter().enumerate() {
            for (c, u) in text_dirs.iter().enumerate() {
                let proj: f64 = train.text().row(i).iter().zip(u).map(|(a, b)| a * b).sum();
                let want = if l.get(c) { 1.0 } else { 0.0 };
                assert!((proj - want).abs() < 1e-5, "{proj} vs {want}");
            }
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(gen_synthetic(0, 0, 1, 1, 0.1).is_err());
        assert!(gen_synthetic(0, 1, 1, 1, -0.1).is_err());
        assert!(gen_synthetic(0, 1, 1, 1, f64::NAN).is_err());
    }
}
