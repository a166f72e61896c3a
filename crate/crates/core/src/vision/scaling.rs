//! Compound depth/width/resolution scaling.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalingSpec {
    pub base_depth: f64,
    pub base_width: f64,
    pub base_resolution: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Compound coefficient `φ`.
    pub phi: f64,
    /// FLOPs budget constant the base ratios should satisfy.
    pub budget: f64,
}

impl ScalingSpec {
    pub fn validate(&self) -> Result<()> {
        let ratios_ok = [self.alpha, self.beta, self.gamma]
            .iter()
            .all(|r| r.is_finite() && *r > 1.0);
        let bases_ok = [self.base_depth, self.base_width, self.base_resolution]
            .iter()
            .all(|b| b.is_finite() && *b > 0.0);
        if !ratios_ok || !bases_ok || self.phi.is_nan() || self.phi < 0.0 || !self.budget.is_finite() {
            return Err(Error::Parameter(format!(
                "scaling spec needs alpha, beta, gamma > 1, positive bases and phi >= 0: {self:?}"
            )));
        }
        Ok(())
    }

    /// `α · β² · γ²`.
    pub fn base_flops_ratio(&self) -> f64 {
        self.alpha * self.beta * self.beta * self.gamma * self.gamma
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompoundScale {
    pub depth: f64,
    pub width: f64,
    pub resolution: f64,
    /// `(α · β² · γ²)^φ`
    pub flops_factor: f64,
    /// `α · β² · γ² − K`
    pub constraint_residual: f64,
}

pub fn compound_scale(spec: &ScalingSpec) -> Result<CompoundScale> {
    spec.validate()?;
    let ratio = spec.base_flops_ratio();
    Ok(CompoundScale {
        depth: spec.base_depth * spec.alpha.powf(spec.phi),
        width: spec.base_width * spec.beta.powf(spec.phi),
        resolution: spec.base_resolution * spec.gamma.powf(spec.phi),
        flops_factor: ratio.powf(spec.phi),
        constraint_residual: ratio - spec.budget,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(phi: f64) -> ScalingSpec {
        ScalingSpec {
            base_depth: 10.0,
            base_width: 32.0,
            base_resolution: 224.0,
            alpha: 1.2,
            beta: 1.1,
            gamma: 1.15,
            phi,
            budget: 2.0,
        }
    }

    #[test]
    fn zero_phi_keeps_base() {
        let s = compound_scale(&spec(0.0)).unwrap();
        assert_eq!((s.depth, s.width, s.resolution, s.flops_factor), (10.0, 32.0, 224.0, 1.0));
        assert!((s.constraint_residual - (1.2 * 1.21 * 1.3225 - 2.0)).abs() < 1e-12);
    }

    #[test]
    fn depth_doubles() {
        let mut sp = spec(1.0);
        sp.alpha = 2.0;
        assert_eq!(compound_scale(&sp).unwrap().depth, 20.0);
    }

    #[test]
    fn flops_factor_reference() {
        let s = compound_scale(&spec(2.0)).unwrap();
        let direct = (1.2f64 * 1.1 * 1.1 * 1.15 * 1.15).powi(2);
        assert!((s.flops_factor - direct).abs() / direct < 1e-12);
        assert!((s.flops_factor - 3.6876).abs() < 1e-3);
        // product of the individual factors agrees with the closed form
        let parts = 1.2f64.powf(2.0) * 1.1f64.powf(2.0).powi(2) * 1.15f64.powf(2.0).powi(2);
        assert!((parts - s.flops_factor).abs() / parts < 1e-12);
    }

    #[test]
    fn invalid_ratios() {
        let mut sp = spec(1.0);
        sp.beta = 1.0;
        assert!(compound_scale(&sp).is_err());
        let mut sp = spec(-1.0);
        sp.phi = -1.0;
        assert!(compound_scale(&sp).is_err());
    }
}
