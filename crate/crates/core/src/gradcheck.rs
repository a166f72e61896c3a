//! Central-difference gradient checking.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Compares the analytic gradient returned by `f` against central differences
/// `(f(x + h·e) − f(x − h·e)) / 2h`, coordinate by coordinate.
///
/// `f` returns the scalar value together with its gradient at the given point.
/// The result is the largest `|a − n| / max(1e-8, |a| + |n|)` over all
/// coordinates.
pub fn grad_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&Tensor) -> Result<(f64, Tensor)>,
{
    let (value, analytic) = f(x)?;
    if !value.is_finite() {
        return Err(Error::NonFinite { op: "grad_check" });
    }
    if analytic.shape() != x.shape() {
        return Err(Error::shape(
            "grad_check",
            format!(
                "gradient {:?} does not match input {:?}",
                analytic.shape(),
                x.shape()
            ),
        ));
    }
    let mut probe = x.clone();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let orig = x.data()[i];
        probe.data_mut()[i] = orig + h;
        let (fp, _) = f(&probe)?;
        probe.data_mut()[i] = orig - h;
        let (fm, _) = f(&probe)?;
        probe.data_mut()[i] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite { op: "grad_check" });
        }
        let numeric = (fp - fm) / (2.0 * h);
        let a = analytic.data()[i];
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{activation, activation_backward, Activation};

    #[test]
    fn linear_function_is_exact() {
        let c = Tensor::vector(vec![0.5, -2.0, 3.0]);
        let f = |x: &Tensor| Ok((x.dot(&c), c.clone()));
        let err = grad_check(f, &Tensor::vector(vec![1.0, 2.0, -1.0]), 1e-5).unwrap();
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn sigmoid_sum() {
        let f = |x: &Tensor| {
            let y = activation(Activation::Sigmoid, x);
            let g = activation_backward(Activation::Sigmoid, x, &Tensor::filled(x.shape(), 1.0))?;
            Ok((y.sum(), g))
        };
        let x = Tensor::vector(vec![0.3, -1.2, 2.5, 0.0]);
        assert!(grad_check(f, &x, 1e-5).unwrap() < 1e-6);
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let f = |x: &Tensor| Ok((x.dot(x), x.clone()));
        let err = grad_check(f, &Tensor::vector(vec![1.0, 2.0]), 1e-5).unwrap();
        assert!(err > 0.3);
    }

    #[test]
    fn non_finite_value_is_an_error() {
        let f = |x: &Tensor| Ok((f64::NAN, x.clone()));
        assert!(matches!(
            grad_check(f, &Tensor::vector(vec![1.0]), 1e-5),
            Err(Error::NonFinite { .. })
        ));
    }
}
