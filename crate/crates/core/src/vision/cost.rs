//! Multiply-accumulate cost model for standard, grouped and depthwise
//! separable convolutions.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConvMode {
    Standard,
    Depthwise,
    Pointwise,
    Grouped,
}

/// Geometry of one stride-1, same-padded convolution layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    /// Kernel side `D_k`.
    pub kernel: usize,
    /// Input channels `M`.
    pub in_channels: usize,
    /// Output channels `N`.
    pub out_channels: usize,
    /// Output feature-map side `D_f` (equal to the input side).
    pub out_side: usize,
    pub groups: usize,
    pub mode: ConvMode,
}

impl ConvSpec {
    pub fn new(
        mode: ConvMode,
        kernel: usize,
        in_channels: usize,
        out_channels: usize,
        out_side: usize,
        groups: usize,
    ) -> Result<Self> {
        let spec = Self {
            kernel,
            in_channels,
            out_channels,
            out_side,
            groups,
            mode,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn standard(kernel: usize, m: usize, n: usize, side: usize) -> Result<Self> {
        Self::new(ConvMode::Standard, kernel, m, n, side, 1)
    }

    pub fn depthwise(kernel: usize, channels: usize, side: usize) -> Result<Self> {
        Self::new(ConvMode::Depthwise, kernel, channels, channels, side, channels)
    }

    pub fn pointwise(m: usize, n: usize, side: usize) -> Result<Self> {
        Self::new(ConvMode::Pointwise, 1, m, n, side, 1)
    }

    pub fn grouped(kernel: usize, m: usize, n: usize, side: usize, groups: usize) -> Result<Self> {
        Self::new(ConvMode::Grouped, kernel, m, n, side, groups)
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Parameter(format!("conv spec {self:?}: {msg}")));
        if self.kernel == 0
            || self.in_channels == 0
            || self.out_channels == 0
            || self.out_side == 0
            || self.groups == 0
        {
            return bad("all dimensions must be positive".into());
        }
        if !self.in_channels.is_multiple_of(self.groups) || !self.out_channels.is_multiple_of(self.groups) {
            return bad(format!(
                "groups {} must divide both channel counts",
                self.groups
            ));
        }
        match self.mode {
            ConvMode::Standard if self.groups != 1 => bad("standard conv has one group".into()),
            ConvMode::Depthwise
                if self.out_channels != self.in_channels || self.groups != self.in_channels =>
            {
                bad("depthwise conv needs N == M == groups".into())
            }
            ConvMode::Pointwise if self.kernel != 1 => bad("pointwise conv needs a 1x1 kernel".into()),
            _ => Ok(()),
        }
    }

    /// Kernel tensor shape `[D_k, D_k, M/g, N]`.
    pub fn kernel_shape(&self) -> [usize; 4] {
        [
            self.kernel,
            self.kernel,
            self.in_channels / self.groups,
            self.out_channels,
        ]
    }

    /// The depthwise + pointwise pair that replaces this layer.
    pub fn separable_pair(&self) -> Result<(ConvSpec, ConvSpec)> {
        Ok((
            ConvSpec::depthwise(self.kernel, self.in_channels, self.out_side)?,
            ConvSpec::pointwise(self.in_channels, self.out_channels, self.out_side)?,
        ))
    }

    /// MACs this exact layer performs, whatever its mode.
    pub fn macs(&self) -> Result<u64> {
        let op = "ConvSpec::macs";
        let area = mul(op, &[self.out_side, self.out_side])?;
        let per_position = mul(
            op,
            &[
                self.kernel,
                self.kernel,
                self.in_channels / self.groups,
                self.out_channels,
            ],
        )?;
        area.checked_mul(per_position).ok_or(Error::Overflow { op })
    }
}

fn mul(op: &'static str, factors: &[usize]) -> Result<u64> {
    factors.iter().try_fold(1u64, |acc, &f| {
        acc.checked_mul(f as u64).ok_or(Error::Overflow { op })
    })
}

/// `D_k · D_k · M · N · D_f · D_f`.
pub fn cost_standard(spec: &ConvSpec) -> Result<u64> {
    if spec.mode != ConvMode::Standard {
        return Err(Error::Parameter(format!(
            "cost_standard needs a standard conv, got {:?}",
            spec.mode
        )));
    }
    mul(
        "cost_standard",
        &[
            spec.kernel,
            spec.kernel,
            spec.in_channels,
            spec.out_channels,
            spec.out_side,
            spec.out_side,
        ],
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeparableCost {
    pub depthwise: u64,
    pub pointwise: u64,
    pub total: u64,
}

impl SeparableCost {
    /// `total / standard`, which equals `1/N + 1/D_k²`.
    pub fn ratio_to_standard(&self, spec: &ConvSpec) -> Result<f64> {
        let std = mul(
            "ratio_to_standard",
            &[
                spec.kernel,
                spec.kernel,
                spec.in_channels,
                spec.out_channels,
                spec.out_side,
                spec.out_side,
            ],
        )?;
        Ok(self.total as f64 / std as f64)
    }
}

/// Depthwise `D_f² · M · D_k²` plus pointwise `D_f² · M · N`, using the
/// spec's `D_k`, `M`, `N`, `D_f` regardless of its mode.
pub fn cost_depthwise_separable(spec: &ConvSpec) -> Result<SeparableCost> {
    let op = "cost_depthwise_separable";
    let depthwise = mul(
        op,
        &[
            spec.out_side,
            spec.out_side,
            spec.in_channels,
            spec.kernel,
            spec.kernel,
        ],
    )?;
    let pointwise = mul(
        op,
        &[spec.out_side, spec.out_side, spec.in_channels, spec.out_channels],
    )?;
    let total = depthwise
        .checked_add(pointwise)
        .ok_or(Error::Overflow { op })?;
    Ok(SeparableCost {
        depthwise,
        pointwise,
        total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_reference_values() {
        let s = ConvSpec::standard(3, 16, 32, 8).unwrap();
        assert_eq!(cost_standard(&s).unwrap(), 294_912);
        let s = ConvSpec::standard(1, 1, 1, 1).unwrap();
        assert_eq!(cost_standard(&s).unwrap(), 1);
    }

    #[test]
    fn separable_reference_values() {
        let s = ConvSpec::standard(3, 16, 32, 8).unwrap();
        let c = cost_depthwise_separable(&s).unwrap();
        assert_eq!(
            c,
            SeparableCost {
                depthwise: 9216,
                pointwise: 32768,
                total: 41984
            }
        );
        let ratio = c.ratio_to_standard(&s).unwrap();
        assert!((ratio - (1.0 / 32.0 + 1.0 / 9.0)).abs() < 1e-12);
    }

    #[test]
    fn unit_kernel_separable() {
        let s = ConvSpec::standard(1, 5, 5, 4).unwrap();
        let c = cost_depthwise_separable(&s).unwrap();
        assert_eq!(c.depthwise, 16 * 5);
        assert_eq!(c.total, c.depthwise + c.pointwise);
        let s = ConvSpec::standard(1, 7, 7, 3).unwrap();
        let c = cost_depthwise_separable(&s).unwrap();
        // with D_k = 1 the pointwise term is N times the depthwise term
        assert_eq!(c.pointwise, c.depthwise * 7);
    }

    #[test]
    fn overflow_is_reported() {
        let big = 1usize << 20;
        let s = ConvSpec::standard(big, big, big, big).unwrap();
        assert!(matches!(cost_standard(&s), Err(Error::Overflow { .. })));
        assert!(matches!(
            cost_depthwise_separable(&s),
            Err(Error::Overflow { .. })
        ));
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(ConvSpec::standard(0, 1, 1, 1).is_err());
        assert!(ConvSpec::grouped(3, 6, 4, 5, 4).is_err());
        assert!(ConvSpec::new(ConvMode::Depthwise, 3, 4, 8, 5, 4).is_err());
        assert!(ConvSpec::new(ConvMode::Pointwise, 3, 4, 8, 5, 1).is_err());
        assert!(ConvSpec::new(ConvMode::Standard, 3, 4, 8, 5, 2).is_err());
        assert!(cost_standard(&ConvSpec::depthwise(3, 4, 5).unwrap()).is_err());
    }

    #[test]
    fn mode_macs() {
        let dw = ConvSpec::depthwise(3, 16, 8).unwrap();
        assert_eq!(dw.macs().unwrap(), 9216);
        let pw = ConvSpec::pointwise(16, 32, 8).unwrap();
        assert_eq!(pw.macs().unwrap(), 32768);
        let g = ConvSpec::grouped(3, 16, 32, 8, 4).unwrap();
        assert_eq!(g.macs().unwrap(), 294_912 / 4);
    }
}
