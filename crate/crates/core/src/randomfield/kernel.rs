//! Stationary covariance kernels.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// `exp(-r² / (2 l_c²))`
    Gaussian,
    /// `exp(-r / l_c)`
    Exponential,
    /// `σ² (r/l_c) K₁(r/l_c)`, a Matérn kernel with smoothness one.
    BesselMatern,
}

impl std::str::FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(KernelKind::Gaussian),
            "exponential" => Ok(KernelKind::Exponential),
            "bessel_matern" => Ok(KernelKind::BesselMatern),
            other => Err(Error::InvalidArgument(format!("unknown kernel kind `{other}`"))),
        }
    }
}

/// Covariance kernel of the Gaussian field underlying the log-normal
/// coefficient `a = exp(σ G - σ²/2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceKernel {
    pub kind: KernelKind,
    pub correlation_length: f64,
    pub sigma: f64,
}

impl CovarianceKernel {
    pub fn new(kind: KernelKind, correlation_length: f64, sigma: f64) -> Result<Self> {
        if !(correlation_length > 0.0) || !correlation_length.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "correlation length must be positive, got {correlation_length}"
            )));
        }
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidArgument(format!("sigma must be non-negative, got {sigma}")));
        }
        Ok(CovarianceKernel {
            kind,
            correlation_length,
            sigma,
        })
    }

    /// Unit-variance correlation `ρ(r)` with `ρ(0) = 1`; the K-L basis is
    /// always computed for this and scaled by `σ` afterwards.
    pub fn correlation(&self, r: f64) -> f64 {
        let s = r / self.correlation_length;
        match self.kind {
            KernelKind::Gaussian => (-0.5 * s * s).exp(),
            KernelKind::Exponential => (-s).exp(),
            KernelKind::BesselMatern => x_bessel_k1(s),
        }
    }

    /// `K(x₁, x₂)`: the correlation for the Gaussian and exponential kinds,
    /// `σ² ρ(r)` for the Bessel kind.
    pub fn eval(&self, x1: &[f64], x2: &[f64]) -> f64 {
        let rho = self.correlation(distance(x1, x2));
        match self.kind {
            KernelKind::BesselMatern => self.sigma * self.sigma * rho,
            _ => rho,
        }
    }
}

pub fn distance(x1: &[f64], x2: &[f64]) -> f64 {
    x1.iter()
        .zip(x2)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// `x K₁(x)` for `x ≥ 0`, continuous at zero with value 1.
///
/// Trapezoid rule on `K₁(x) = ∫₀^∞ e^{-x cosh t} cosh t dt`; the integrand
/// is analytic in a strip, so the rule converges geometrically in `1/h`.
pub fn x_bessel_k1(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x > 700.0 {
        return 0.0;
    }
    const H: f64 = 0.25;
    let upper = (50.0 / x).max(1.0).acosh().max(2.0);
    let steps = (upper / H).ceil() as usize;
    let mut sum = 0.5 * (-x).exp();
    for k in 1..=steps {
        let c = (k as f64 * H).cosh();
        sum += (-x * c).exp() * c;
    }
    x * H * sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalized_kernels() {
        let g = CovarianceKernel::new(KernelKind::Gaussian, 0.5, 1.0).unwrap();
        assert_eq!(g.eval(&[0.3], &[0.3]), 1.0);
        let e = CovarianceKernel::new(KernelKind::Exponential, 0.5, 1.0).unwrap();
        assert!((e.eval(&[0.0, 0.0], &[0.3, 0.4]) - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(e.eval(&[0.1], &[0.7]), e.eval(&[0.7], &[0.1]));
        assert!(CovarianceKernel::new(KernelKind::Gaussian, 0.0, 1.0).is_err());
        assert!("matern".parse::<KernelKind>().is_err());
    }

    #[test]
    fn bessel_values() {
        // reference values of x K1(x)
        for &(x, expect) in &[
            (0.1, 0.1 * 9.853_844_780_870_606),
            (0.5, 0.5 * 1.656_441_120_003_301),
            (1.0, 0.601_907_230_197_234_6),
            (2.0, 2.0 * 0.139_865_881_816_522_4),
        ] {
            assert!((x_bessel_k1(x) - expect).abs() < 1e-10, "x={x}");
        }
        assert!((x_bessel_k1(1e-8) - 1.0).abs() < 1e-9);
        let b = CovarianceKernel::new(KernelKind::BesselMatern, 1.0, 1.0).unwrap();
        assert!((b.eval(&[0.0, 0.0], &[1e-8, 0.0]) - 1.0).abs() < 1e-9);
    }
}
